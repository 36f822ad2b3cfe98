import contextlib
import os
import sys

import pytest

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
RESULTS_DIR = os.path.join(TESTS_DIR, "results")
os.makedirs(RESULTS_DIR, exist_ok=True)

SUITES = [
    "matrix_core_test.py",
    "rank_correlation_test.py",
    "synthetic_data_test.py",
    "sparse_regression_test.py",
    "rocket_core_test.py",
    "baselines_test.py",
    "config_test.py",
    "harness_test.py",
    "system_test.py",
]


def run_pytest(include_slow: bool = False):
    print("Running unit, harness and system tests...\n")
    junit_xml = os.path.join(RESULTS_DIR, "pytest_results.xml")
    txt_file = os.path.join(RESULTS_DIR, "pytest_results.txt")
    args = [os.path.join(TESTS_DIR, suite) for suite in SUITES]
    if include_slow:
        print("Including desk-scale simulation checks (several minutes)...\n")
        args += [os.path.join(TESTS_DIR, "regression_test.py"), "-m", "slow or not slow"]
    with open(txt_file, "w") as f, contextlib.redirect_stdout(f):
        exit_code = pytest.main(args + [f"--junitxml={junit_xml}", "-v"])
    return exit_code


if __name__ == "__main__":
    sys.exit(run_pytest(include_slow="--slow" in sys.argv[1:]))
