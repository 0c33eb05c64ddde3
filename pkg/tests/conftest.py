import math
import time

import pytest

from parabolic_apost.bench import StudyConfig, run_study

# outcomes of tests marked ``oracle`` (examples checked against an independent oracle);
# the acceptance check for oracle equivalence reads this after they ran
ORACLE_OUTCOMES = {}
ORACLE_COLLECTED = set()
# acceptance lines, repeated in the terminal summary so passing criteria show up too
ACCEPTANCE_LINES = []


def pytest_collection_modifyitems(session, config, items):
    last = [it for it in items if it.get_closest_marker("run_last")]
    first = [it for it in items if not it.get_closest_marker("run_last")]
    items[:] = first + last
    ORACLE_COLLECTED.update(it.nodeid for it in items if it.get_closest_marker("oracle"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def pytest_runtest_logreport(report):
    if "oracle" in report.keywords:
        if report.when == "call" or report.outcome != "passed":
            ok = report.outcome == "passed"
            ORACLE_OUTCOMES[report.nodeid] = ORACLE_OUTCOMES.get(report.nodeid, True) and ok


def _timed(config):
    """Single-threaded study with its wall time attached as ``elapsed``."""
    start = time.perf_counter()
    study = run_study(config)
    study.elapsed = time.perf_counter() - start
    return study


@pytest.fixture(scope="session")
def study_k1():
    """kappa = 1, T = 1, tau = 0.05 h, levels 2..6."""
    return _timed(StudyConfig(kappa=1, T=1.0, levels=(2, 3, 4, 5, 6), c_tau=0.05))


@pytest.fixture(scope="session")
def study_k8():
    """kappa = 8, T = 1, tau = 0.05 h, level 5."""
    return _timed(StudyConfig(kappa=8, T=1.0, levels=(5,), c_tau=0.05))


def report(criterion, ok, detail):
    """One line per acceptance criterion, shown with ``pytest -s`` and in the log."""
    line = f"[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} -- {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return line


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def close(a, b, rtol):
    return math.isclose(a, b, rel_tol=rtol, abs_tol=0.0)
