"""Shared fixtures, plus a session-wide audit of every MCHTP trace.

``run_mchtp`` is wrapped before any test module is imported, so traces made
directly or through the experiment driver are all checked against the
selection contract and candidate nesting. Runs with a replaced selector are
negative controls and are skipped.
"""
import numpy as np
import pytest

import mchtp
import mchtp.algorithms as alg
from mchtp.analysis import audit_nesting, audit_selection, roundoff_allowance

AUDIT = {"traces": 0, "records": 0, "violations": []}
_original_run_mchtp = alg.run_mchtp


def _audited_run_mchtp(instance, config, selector=None):
    trace = _original_run_mchtp(instance, config, selector)
    if selector is None:
        slack = roundoff_allowance(np.asarray(instance.y, dtype=float))
        bad_sel = audit_selection(trace, trace.info["eps"], slack)
        bad_nest = audit_nesting(trace, slack)
        AUDIT["traces"] += 1
        AUDIT["records"] += len(trace)
        if bad_sel or bad_nest:
            AUDIT["violations"].append(
                {"seed": config.seed, "selection": bad_sel, "nesting": bad_nest})
    return trace


alg.run_mchtp = _audited_run_mchtp
mchtp.run_mchtp = _audited_run_mchtp


def pytest_terminal_summary(terminalreporter):
    terminalreporter.write_line(
        f"trace audit: {AUDIT['traces']} MCHTP traces, {AUDIT['records']} iteration "
        f"records, {len(AUDIT['violations'])} traces with violations")


def pytest_sessionfinish(session, exitstatus):
    if AUDIT["violations"]:
        session.exitstatus = 1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance():
    """Noiseless N=40, M=24, K=3 Gaussian instance."""
    return mchtp.generate_instance(24, 40, 3, mchtp.SignalStructure("gaussian"), seed=3)
