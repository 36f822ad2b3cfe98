import logging

logger = logging.getLogger(__name__)
logger.debug("ROCKET app package initialized")
