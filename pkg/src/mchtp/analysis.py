"""Post-processing of run traces and the sparsity-sampling chain."""
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .theory import t1_pmf, t3_pmf

__all__ = [
    "ErrorCurve",
    "PhaseReport",
    "msd_curve",
    "detect_phases",
    "phase_structure_ok",
    "empirical_pmf",
    "tv_distance",
    "theoretical_pmf",
    "chain_simulate_T1_T3",
    "roundoff_allowance",
    "audit_selection",
    "audit_nesting",
    "audit_least_squares",
    "phase1_monotone",
]


@dataclass
class ErrorCurve:
    msd: np.ndarray
    residual: np.ndarray

    def __len__(self):
        return len(self.msd)


def msd_curve(trace, x_true):
    """Mean square deviation ||x^t - x||^2 / N and residual energy per iteration."""
    x_true = np.asarray(x_true, dtype=float)
    n = x_true.size
    msd = np.array([float((z - x_true) @ (z - x_true)) / n for z in trace.estimates()])
    res = np.array([r.residual for r in trace.records], dtype=float)
    return ErrorCurve(msd, res)


@dataclass
class PhaseReport:
    """Phase durations of a sparsity trajectory (iterations are 1-based).

    Phase I is iterations 1..T1, phase II is T1+1..T1+T2 (ending at the last
    increase of K_t), phase III is the remaining T3 iterations up to W, the
    first iteration from which K_t equals K for the rest of the trace.
    Durations are ``None`` when the trajectory never gets there.
    """
    T1: int = None
    T2: int = None
    T3: int = None
    W: int = None
    converged: bool = False

    def to_dict(self):
        return asdict(self)


def _sparsity_sequence(trace_or_seq):
    if hasattr(trace_or_seq, "sparsities"):
        return [int(k) for k in trace_or_seq.sparsities]
    return [int(k) for k in trace_or_seq]


def detect_phases(trace, K_true):
    """Split an MCHTP sparsity trajectory into its three phases.

    Accepts a :class:`RunTrace` or a plain sequence K_1, K_2, ...
    """
    ks = _sparsity_sequence(trace)
    length = len(ks)
    t1 = next((t for t in range(1, length + 1) if ks[t - 1] >= K_true), None)
    converged = length > 0 and ks[-1] == K_true
    if t1 is None:
        return PhaseReport(converged=False)
    padded = [0] + ks
    last_up = max(t for t in range(t1, length + 1) if padded[t] > padded[t - 1])
    t2 = last_up - t1
    if not converged:
        return PhaseReport(T1=t1, T2=t2, converged=False)
    w = length
    while w > 1 and ks[w - 2] == K_true:
        w -= 1
    w = max(w, last_up)
    return PhaseReport(T1=t1, T2=t2, T3=w - last_up, W=w, converged=True)


def phase_structure_ok(trace, K_true):
    """Three-phase shape: non-decreasing up to T1, K_t >= K after it, ending at K."""
    ks = _sparsity_sequence(trace)
    rep = detect_phases(ks, K_true)
    if not rep.converged or rep.T1 is None:
        return False
    phase1 = ks[:rep.T1]
    if any(b < a for a, b in zip(phase1, phase1[1:])):
        return False
    return all(k >= K_true for k in ks[rep.T1 - 1:])


def empirical_pmf(samples):
    """Relative frequencies of integer samples as a dict value -> probability."""
    samples = [int(s) for s in samples]
    if not samples:
        raise ValueError("empirical_pmf of an empty sample")
    counts = Counter(samples)
    total = len(samples)
    return {v: c / total for v, c in sorted(counts.items())}


def tv_distance(p, q):
    """Total variation distance; keys missing from one pmf count as zero mass."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def theoretical_pmf(which, K, kbar, upto):
    """Closed-form T1 or T3 law on 1..upto (the tail beyond is left out)."""
    if which == "T1":
        return {t: t1_pmf(t, K, kbar) for t in range(1, upto + 1)}
    if which == "T3":
        return {t: t3_pmf(t, kbar) for t in range(1, upto + 1)}
    raise ValueError(f"unknown phase {which!r}")


def _draw_excluding(rng, kbar, exclude):
    """Vectorised uniform draw from {1..kbar} minus ``exclude`` (0 excludes nothing)."""
    free = exclude == 0
    u = rng.integers(1, kbar, size=exclude.size)
    u = np.where(u >= exclude, u + 1, u)
    full = rng.integers(1, kbar + 1, size=exclude.size)
    return np.where(free, full, u)


def chain_simulate_T1_T3(K, kbar, trials, seed=0):
    """Simulate only the sparsity-sampling chain, without any linear algebra.

    T1: start at K_0 = 0 and follow K_t = max(K_{t-1}, K_{t,1}) until K_t >= K.
    T3: start from a sparsity other than K (kbar, or kbar-1 when K = kbar);
    a draw below the current value but at least K moves down, and the run
    ends at the first draw equal to K.
    """
    if kbar < 2 or not 1 <= K <= kbar:
        raise ValueError(f"need kbar >= 2 and 1 <= K <= kbar, got K={K}, kbar={kbar}")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)

    state = np.zeros(trials, dtype=np.int64)
    t1 = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)
    t = 0
    while active.any():
        t += 1
        draw = _draw_excluding(rng, kbar, state[active])
        state[active] = np.maximum(state[active], draw)
        hit = np.zeros(trials, dtype=bool)
        hit[active] = state[active] >= K
        t1[hit] = t
        active &= ~hit

    start = kbar if K < kbar else kbar - 1
    state = np.full(trials, start, dtype=np.int64)
    t3 = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)
    t = 0
    while active.any():
        t += 1
        cur = state[active]
        draw = _draw_excluding(rng, kbar, cur)
        hit = draw == K
        down = (draw > K) & (draw < cur)
        state[active] = np.where(down, draw, cur)
        idx = np.flatnonzero(active)[hit]
        t3[idx] = t
        active[idx] = False
    return t1, t3


def roundoff_allowance(y):
    """Energy comparisons tolerate this much floating-point noise."""
    return 64 * np.finfo(float).eps * max(float(np.dot(y, y)), np.finfo(float).tiny)


def audit_selection(trace, eps, slack=0.0):
    """Iterations of an MCHTP trace that break the selection contract.

    A gap above ``eps`` must keep the lower energy; otherwise the kept
    energy must be the larger one, up to ``slack``.
    """
    bad = []
    for r in trace.records:
        kept, other = (r.e0, r.e1) if r.chosen == 0 else (r.e1, r.e0)
        if r.de > eps:
            ok = kept <= other
        else:
            ok = kept >= other - slack
        if not ok or r.k != (r.k0, r.k1)[r.chosen] or r.k0 == r.k1:
            bad.append(r.t)
    return bad


def audit_nesting(trace, slack=0.0):
    """Iterations where the smaller candidate support is not inside the larger
    one, or the larger support fits worse (beyond ``slack``)."""
    bad = []
    for r in trace.records:
        if r.k0 < r.k1:
            small, large, e_small, e_large = r.support0, r.support1, r.e0, r.e1
        else:
            small, large, e_small, e_large = r.support1, r.support0, r.e1, r.e0
        nested = np.isin(small, large).all() and len(small) < len(large)
        if not nested or e_large > e_small + slack:
            bad.append(r.t)
    return bad


def audit_least_squares(trace, phi, y, rtol=1e-8):
    """Iterations whose kept estimate is not a least-squares fit on its support."""
    bad = []
    scale = float(np.linalg.norm(y)) or 1.0
    for r in trace.records:
        if len(r.support) == 0:
            continue
        sub = phi[:, r.support]
        grad = sub.T @ (y - sub @ r.values)
        if np.linalg.norm(grad) > rtol * np.linalg.norm(sub) * scale:
            bad.append(r.t)
    return bad


def phase1_monotone(trace, K_true):
    """During Phase I the kept sparsity must equal the running max of the draws."""
    ks = [r.k for r in trace.records]
    draws = [r.k1 for r in trace.records]
    rep = detect_phases(ks, K_true)
    end = rep.T1 if rep.T1 is not None else len(ks)
    running = 0
    for t in range(end):
        running = max(running, draws[t])
        if ks[t] != running:
            return False
    return True
