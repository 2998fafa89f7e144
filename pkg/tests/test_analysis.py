import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mchtp.algorithms as alg
from mchtp.algorithms import AlgoConfig, run_htp
from mchtp.analysis import (
    audit_least_squares,
    audit_nesting,
    audit_selection,
    chain_simulate_T1_T3,
    detect_phases,
    empirical_pmf,
    msd_curve,
    phase1_monotone,
    phase_structure_ok,
    roundoff_allowance,
    theoretical_pmf,
    tv_distance,
)
from mchtp.problem import SignalStructure, generate_instance
from mchtp.theory import t1_pmf
from mchtp.trace import IterationRecord, RunTrace


def test_msd_exact_recovery(small_instance):
    trace = run_htp(small_instance, 3, AlgoConfig(mu=1.0, T=50))
    curve = msd_curve(trace, small_instance.x)
    assert len(curve) == len(trace)
    assert curve.msd[-1] <= 1e-20


def test_msd_zero_estimate(small_instance):
    trace = run_htp(small_instance, 0, AlgoConfig(T=4))
    curve = msd_curve(trace, small_instance.x)
    assert np.allclose(curve.msd, small_instance.x @ small_instance.x / 40)


def test_phases_examples():
    rep = detect_phases([5, 5, 5], 5)
    assert (rep.T1, rep.T2, rep.T3, rep.W, rep.converged) == (1, 0, 0, 1, True)
    rep = detect_phases([2, 4, 7, 6, 5, 5, 5], 5)
    assert rep.T1 == 3 and rep.T2 == 0 and rep.T3 == 2 and rep.W == 5
    rep = detect_phases([2, 3, 3], 5)
    assert not rep.converged and rep.T1 is None and rep.W is None
    rep = detect_phases([1, 6, 8, 6, 9, 7, 6], 5)
    assert not rep.converged and rep.T1 == 2 and rep.T2 == 3


def test_phases_with_late_increase():
    rep = detect_phases([1, 6, 5, 8, 7, 5, 5], 5)
    assert (rep.T1, rep.T2, rep.T3, rep.W) == (2, 2, 2, 6)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=40), st.integers(1, 9))
def test_phases_partition_trace(seq, K):
    rep = detect_phases(seq, K)
    if rep.converged:
        assert rep.T1 + rep.T2 + rep.T3 == rep.W <= len(seq)
        assert all(k == K for k in seq[rep.W - 1:])
        # W is the start of the final run at K, unless that run began in Phase I/II
        assert rep.W == 1 or seq[rep.W - 2] != K or rep.T3 == 0


def test_phase_structure():
    assert phase_structure_ok([1, 3, 6, 7, 5], 5)
    assert not phase_structure_ok([3, 1, 6, 5], 5)
    assert not phase_structure_ok([6, 4, 5], 5)
    assert not phase_structure_ok([6, 7], 5)


def test_empirical_pmf_examples():
    assert empirical_pmf([1, 1, 2]) == {1: pytest.approx(2 / 3), 2: pytest.approx(1 / 3)}
    assert empirical_pmf([4] * 7) == {4: 1.0}
    with pytest.raises(ValueError):
        empirical_pmf([])


@given(st.lists(st.integers(0, 30), min_size=1, max_size=200))
def test_empirical_pmf_sums_to_one(samples):
    assert sum(empirical_pmf(samples).values()) == pytest.approx(1.0, abs=1e-12)


def test_tv_examples():
    p = {1: 0.6, 2: 0.4}
    assert tv_distance(p, p) == 0
    assert tv_distance({1: 1.0}, {2: 1.0}) == 1.0
    assert tv_distance(p, {1: 0.5, 2: 0.5}) == pytest.approx(0.1)


def _pmf(weights):
    w = np.asarray(weights, dtype=float) + 1e-3
    return dict(enumerate(w / w.sum()))


pmfs = st.lists(st.floats(0, 1), min_size=1, max_size=8).map(_pmf)


@given(pmfs, pmfs, pmfs)
def test_tv_metric(p, q, r):
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
    assert 0 <= tv_distance(p, q) <= 1 + 1e-12
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12


def test_theoretical_pmf():
    assert theoretical_pmf("T1", 3, 5, 2) == {1: pytest.approx(0.6), 2: pytest.approx(0.3)}
    with pytest.raises(ValueError):
        theoretical_pmf("T2", 3, 5, 2)


def test_chain_trivial_cases():
    t1, t3 = chain_simulate_T1_T3(1, 7, 500, seed=0)
    assert np.all(t1 == 1)
    _, t3 = chain_simulate_T1_T3(1, 2, 500, seed=0)
    assert np.all(t3 == 1)
    with pytest.raises(ValueError):
        chain_simulate_T1_T3(3, 2, 10)


def test_chain_t3_matches_geometric():
    _, t3 = chain_simulate_T1_T3(3, 5, 2000, seed=1)
    emp = empirical_pmf(t3)
    assert tv_distance(emp, theoretical_pmf("T3", 3, 5, max(emp))) < 0.05


def test_chain_kbar_two():
    t1, _ = chain_simulate_T1_T3(2, 2, 4000, seed=2)
    emp = empirical_pmf(t1)
    theo = {t: t1_pmf(t, 2, 2) for t in range(1, max(emp) + 1)}
    assert tv_distance(emp, theo) < 0.03


def test_chain_t1_law():
    t1, _ = chain_simulate_T1_T3(5, 20, 20000, seed=3)
    emp = empirical_pmf(t1)
    assert tv_distance(emp, theoretical_pmf("T1", 5, 20, max(emp))) < 0.02


def test_chain_deterministic():
    a = chain_simulate_T1_T3(4, 9, 300, seed=5)
    b = chain_simulate_T1_T3(4, 9, 300, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


# ------------------------------------------------------------------ audits


@pytest.fixture(scope="module")
def audited():
    inst = generate_instance(24, 40, 3, SignalStructure("gaussian"), seed=8)
    return inst, alg.run_mchtp(inst, AlgoConfig(kbar=6, mu=1.0, T=60, seed=8))


def test_audits_pass_on_real_trace(audited):
    inst, trace = audited
    slack = roundoff_allowance(inst.y)
    assert audit_selection(trace, trace.info["eps"], slack) == []
    assert audit_nesting(trace, slack) == []
    assert audit_least_squares(trace, inst.phi, inst.y) == []


def test_audit_selection_catches_wrong_rule():
    inst = generate_instance(24, 40, 3, SignalStructure("gaussian"), seed=8)

    def wrong(k0, k1, e0, e1, eps):
        return 0 if e0 > e1 else 1          # keep the worse fit

    trace = alg.run_mchtp(inst, AlgoConfig(kbar=6, mu=1.0, T=20, seed=8), selector=wrong)
    assert audit_selection(trace, trace.info["eps"], roundoff_allowance(inst.y))


def test_audit_nesting_and_ls_catch_corruption(audited):
    inst, trace = audited
    rec = trace.records[5]
    saved = rec.support0, rec.support1, rec.values
    try:
        slack = roundoff_allowance(inst.y)
        assert 6 not in audit_nesting(trace, slack)
        rec.support0 = rec.support1 = np.array([0])
        assert audit_nesting(trace, slack) == [6]
        rec.values = rec.values + 0.1
        assert 6 in audit_least_squares(trace, inst.phi, inst.y)
    finally:
        rec.support0, rec.support1, rec.values = saved


def _synthetic(kept, draws):
    trace = RunTrace("mchtp", 4, {})
    prev = 0
    for t, (k, d) in enumerate(zip(kept, draws), start=1):
        trace.append(IterationRecord(t, k, np.zeros(0, dtype=int), np.zeros(0), 0.0,
                                     k0=prev, k1=d, chosen=int(k == d)))
        prev = k
    return trace


def test_phase1_monotone():
    assert phase1_monotone(_synthetic([2, 2, 4, 3], [2, 1, 4, 3]), 4)
    # the larger draw 3 was rejected during Phase I
    assert not phase1_monotone(_synthetic([2, 2, 4], [2, 3, 4]), 4)
