"""Command-line entry point: ``python -m app <command> ...``"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from app.config import build_experiment_config, load_config_file, merge_overrides, resolve_threads, settings
from app.errors import ConfigError, RocketError
from app.logconf import setup_logging

logger = logging.getLogger(__name__)

SIMULATIONS = ("coverage", "qq", "power", "subsample", "contamination")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app",
        description="Rank-based inference on single entries of a latent precision matrix",
    )
    parser.add_argument("--log-level", default=None, help="overrides ROCKET_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="run a Monte Carlo experiment")
    simulate.add_argument("kind", choices=SIMULATIONS)
    simulate.add_argument("--seed", type=int, required=True, help="base seed; replication i uses (seed, i)")
    simulate.add_argument("--config", help="INI or JSON experiment config")
    simulate.add_argument("--threads", type=int, help="worker threads (ROCKET_THREADS wins)")
    simulate.add_argument("--replications", type=int)
    simulate.add_argument("--n", type=int)
    simulate.add_argument("--full", action="store_true", help="full-scale designs; runs take hours")
    simulate.add_argument("--data", help="CSV input for the subsample protocol")
    simulate.add_argument("--out", default="results/run", help="output prefix")

    estimate = commands.add_parser("estimate", help="inference on a data matrix")
    targets = estimate.add_subparsers(dest="target", required=True)
    edge = targets.add_parser("edge")
    edge.add_argument("--data", required=True)
    edge.add_argument("--a", type=int, required=True, help="0-based node index")
    edge.add_argument("--b", type=int, required=True, help="0-based node index")
    edge.add_argument("--alpha", type=float, default=0.05)
    edge.add_argument("--lambda", dest="lam", type=float)
    edge.add_argument("--estimator", default="rocket", choices=["rocket", "pearson", "npn"])
    graph = targets.add_parser("graph")
    graph.add_argument("--data", required=True)
    graph.add_argument("--threshold", type=float, default=0.001)
    graph.add_argument("--lambda", dest="lam", type=float)
    graph.add_argument("--threads", type=int)
    graph.add_argument("--out", help="JSON output path; stdout when omitted")

    sample = commands.add_parser("sample", help="draw a data matrix from a scenario")
    sample.add_argument("--config", required=True)
    sample.add_argument("--seed", type=int, required=True)
    sample.add_argument("--n", type=int, required=True)
    sample.add_argument("--out", required=True)

    tail = commands.add_parser("tail", help="tail-dependence curves for multivariate t data")
    tail.add_argument("--seed", type=int, required=True)
    tail.add_argument("--n", type=int, default=20000)
    tail.add_argument("--out", required=True)

    commands.add_parser("serve", help="start the HTTP service")
    return parser


def _experiment_config(args):
    base = load_config_file(args.config) if args.config else {}
    overrides = {"base_seed": args.seed, "replications": args.replications, "n": args.n, "threads": args.threads}
    return build_experiment_config(merge_overrides(base, overrides))


def cmd_simulate(args) -> int:
    from app import harness
    from app.data_io import read_matrix_csv, write_report

    config = _experiment_config(args)
    if args.full:
        config = harness.apply_full_scale(config)
        logger.warning("Full-scale run requested; expect a multi-hour runtime")
    threads = resolve_threads(args.threads if args.threads is not None else config.threads)

    if args.kind == "coverage":
        report = harness.run_coverage(config, threads)
    elif args.kind == "qq":
        report = harness.run_qq(config, threads)
    elif args.kind == "power":
        report = harness.run_power(config, threads)
    elif args.kind == "contamination":
        report = harness.run_contamination(config, threads)
    else:
        data_path = args.data or config.subsample.data_path
        data = read_matrix_csv(data_path) if data_path else None
        report = harness.run_subsample_protocol(config, data, threads)

    paths = write_report(report, args.out)
    for row in report.aggregates:
        parts = [f"{row.estimator.value:14s}", f"{row.edge:18s}"]
        if row.rho is not None:
            parts.append(f"rho={row.rho:<5}")
        if row.rate is not None:
            parts.append(f"rate={row.rate:<5}")
        if row.coverage is not None:
            parts.append(f"coverage={100 * row.coverage:5.1f}%")
        if row.mean_width is not None:
            parts.append(f"width={row.mean_width:.3f}")
        if row.power is not None:
            parts.append(f"power={row.power:.3f}")
        parts.append(f"excluded={row.excluded}")
        print("  ".join(parts))
    for key, value in report.summary.items():
        print(f"{key} = {value:.4f}")
    print(f"written: {paths['json']}")
    return 0


def cmd_estimate(args) -> int:
    from app.data_io import read_matrix_csv, write_graph
    from app.harness import ReplicationEstimates, estimate_graph
    from app.schemas import Estimator, LassoConfig

    X = read_matrix_csv(args.data)
    lasso = LassoConfig(lam=args.lam)
    if args.target == "edge":
        result = ReplicationEstimates(X, lasso, args.alpha).infer(Estimator(args.estimator), args.a, args.b)
        print(result.model_dump_json(indent=2))
        return 0

    estimate = estimate_graph(X, args.threshold, lasso, threads=args.threads)
    if args.out:
        write_graph(estimate, args.out)
        print(f"{len(estimate.edges)} edges written to {args.out}")
    else:
        print(estimate.model_dump_json(indent=2))
    return 0


def cmd_sample(args) -> int:
    from app.data_io import write_matrix_csv
    from app.harness import draw_dataset
    from app.synthetic_data import build_precision

    config = build_experiment_config(merge_overrides(load_config_file(args.config), {"n": args.n, "base_seed": args.seed}))
    model = build_precision(config.scenario.graph)
    X = draw_dataset(config, model, args.n, np.random.default_rng(args.seed))
    write_matrix_csv(X, args.out)
    return 0


def cmd_tail(args) -> int:
    from app.synthetic_data import tail_dependence_curve

    frame = tail_dependence_curve(n=args.n, seed=args.seed)
    frame.to_csv(args.out, index=False)
    print(f"tail-dependence curve written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    logger.info(f"Starting server on http://{settings.host}:{settings.port}")
    uvicorn.run("main:app", host=settings.host, port=settings.port)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sample": cmd_sample,
    "tail": cmd_tail,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except RocketError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        # option values that only the pydantic models check, e.g. a negative --lambda
        logger.error(f"invalid options: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
