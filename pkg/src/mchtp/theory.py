"""Closed-form MCHTP guarantees and brute-force oracles.

Covers the restricted isometry constant (exhaustive and search-based lower
bounds), the conditions on delta and eps that force Phase-I growth, the
contraction constants, phase-duration laws, the expected waiting time and a
replay of the per-iteration decay inequality on a recorded trace.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import least_squares_on_support
from .problem import decaying_max, linear_scale

__all__ = [
    "RIC_MAX_SUPPORTS",
    "ric_bruteforce",
    "ric_lower_bound",
    "RicTable",
    "build_ric_table",
    "a_k",
    "b_coef",
    "delta_bound",
    "epsilon_bound",
    "epsilon_bound_structured",
    "structure_extremes",
    "rho_gamma",
    "phase_params",
    "t1_pmf",
    "t1_mean_exact",
    "t1_mean_bound",
    "t2_upper_bound",
    "t3_pmf",
    "expected_waiting_time",
    "DecayReport",
    "decay_bound_check",
    "best_support_exhaustive",
]

RIC_MAX_SUPPORTS = 10**6
_CHUNK = 20000


def _extreme_eigs(gram, idx):
    """Smallest and largest eigenvalue of each principal submatrix gram[idx_i, idx_i]."""
    sub = gram[idx[:, :, None], idx[:, None, :]]
    w = np.linalg.eigvalsh(sub)
    return w[:, 0], w[:, -1]


def _ric_from_eigs(lo, hi):
    return np.maximum(hi - 1.0, 1.0 - lo)


def ric_bruteforce(phi, s, max_supports=RIC_MAX_SUPPORTS):
    """Exact restricted isometry constant delta_s by enumerating all supports.

    delta_s = max over |S| = s of max(lambda_max - 1, 1 - lambda_min) of
    phi_S^T phi_S. Orders above N are clamped to N.
    """
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[1]
    if s < 1:
        raise ValueError("RIC order must be at least 1")
    s = min(s, n)
    count = math.comb(n, s)
    if count > max_supports:
        raise ValueError(
            f"C({n},{s}) = {count} supports exceeds the enumeration guard "
            f"({max_supports}); use a smaller instance"
        )
    gram = phi.T @ phi
    combos = itertools.combinations(range(n), s)
    best = 0.0
    while True:
        block = np.array(list(itertools.islice(combos, _CHUNK)), dtype=np.int64)
        if block.size == 0:
            break
        lo, hi = _extreme_eigs(gram, block.reshape(-1, s))
        best = max(best, float(_ric_from_eigs(lo, hi).max()))
    return best


def _local_search(gram, start, n, objective, sweeps):
    """1-swap hill climbing on a support, maximising ``objective(eigs)``."""
    supp = list(start)
    cur = float(objective(np.linalg.eigvalsh(gram[np.ix_(supp, supp)]))[0])
    for _ in range(sweeps):
        improved = False
        for pos in range(len(supp)):
            outside = np.setdiff1d(np.arange(n), supp)
            if outside.size == 0:
                break
            trial = np.repeat(np.array(supp, dtype=np.int64)[None, :], outside.size, axis=0)
            trial[:, pos] = outside
            lo, hi = _extreme_eigs(gram, trial)
            vals = objective(np.stack([lo, hi], axis=1))
            j = int(np.argmax(vals))
            if vals[j] > cur + 1e-15:
                cur = float(vals[j])
                supp[pos] = int(outside[j])
                improved = True
        if not improved:
            break
    return cur, sorted(supp)


def ric_lower_bound(phi, s, seed=0, restarts=8, sweeps=20, warm=None):
    """Lower bound on delta_s from greedy growth plus 1-swap local search.

    Every evaluated support gives a valid lower bound; the maximum found is
    returned together with the maximising supports for the upper and lower
    spectral edges. ``warm`` optionally seeds the search with supports of
    order s-1 (they are grown by one column).
    """
    phi = np.asarray(phi, dtype=float)
    m, n = phi.shape
    s = min(s, n)
    gram = phi.T @ phi
    rng = np.random.default_rng(seed)

    def upper(e):
        return np.atleast_2d(e)[:, -1] - 1.0

    def lower(e):
        return 1.0 - np.atleast_2d(e)[:, 0]

    best = 0.0
    best_supports = {}
    for name, obj in (("upper", upper), ("lower", lower)):
        starts = [sorted(rng.choice(n, s, replace=False).tolist()) for _ in range(restarts)]
        if warm and name in warm:
            base = list(warm[name])
            extra = [j for j in range(n) if j not in base]
            if len(base) < s and extra:
                lo, hi = _extreme_eigs(
                    gram, np.array([sorted(base + [j]) for j in extra], dtype=np.int64))
                j = extra[int(np.argmax(obj(np.stack([lo, hi], axis=1))))]
                starts.insert(0, sorted(base + [j]))
        top, top_supp = -np.inf, None
        for st in starts:
            val, supp = _local_search(gram, st, n, obj, sweeps)
            if val > top:
                top, top_supp = val, supp
        best_supports[name] = top_supp
        best = max(best, float(top))
    return best, best_supports


@dataclass
class RicTable:
    """delta_s by order; ``exact`` holds the orders computed by enumeration.

    Non-exact entries are certified lower bounds.
    """
    values: dict = field(default_factory=dict)
    exact: set = field(default_factory=set)
    n: int = None

    def __getitem__(self, s):
        if self.n is not None:
            s = min(s, self.n)
        if s <= 0:
            return 0.0
        if s not in self.values:
            raise ValueError(f"RIC order {s} missing from table")
        return self.values[s]

    def __contains__(self, s):
        if self.n is not None:
            s = min(s, self.n)
        return s <= 0 or s in self.values

    def is_exact(self, s):
        if self.n is not None:
            s = min(s, self.n)
        return s <= 0 or s in self.exact

    def to_dict(self):
        return {"values": {str(k): v for k, v in sorted(self.values.items())},
                "exact": sorted(self.exact)}


def build_ric_table(phi, max_order, max_supports=RIC_MAX_SUPPORTS, seed=0):
    """delta_s for s = 1..max_order (clamped to N).

    Orders whose enumeration fits under ``max_supports`` are exact; larger
    orders get search-based lower bounds, raised where needed so the table
    stays non-decreasing in s.
    """
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[1]
    table = RicTable(n=n)
    warm = None
    prev = 0.0
    for s in range(1, min(max_order, n) + 1):
        if math.comb(n, s) <= max_supports:
            val = ric_bruteforce(phi, s, max_supports)
            table.exact.add(s)
            _, warm = ric_lower_bound(phi, s, seed=seed + s, restarts=2, sweeps=5, warm=warm)
        else:
            val, warm = ric_lower_bound(phi, s, seed=seed + s, warm=warm)
        # delta_s >= delta_{s-1} holds for the true constants
        prev = max(prev, val)
        table.values[s] = prev
    return table


def a_k(delta, K):
    return (1.0 - delta) / math.sqrt(K) - 3.0 * math.sqrt(2.0) * delta


def b_coef(delta):
    return 5.0 * math.sqrt(2.0) * delta


def delta_bound(K, R):
    """Largest RIC admitted by the Phase-I growth condition: 1/(1+(3+5R)sqrt(2K))."""
    if K < 1 or R < 1:
        raise ValueError("need K >= 1 and R >= 1")
    return 1.0 / (1.0 + (3.0 + 5.0 * R) * math.sqrt(2.0 * K))


def epsilon_bound(delta, K, x_min, x_max):
    """Upper limit on eps that forces the larger sparsity while below K.

    ((1-delta)/(1+delta)^2) * (a_K(delta) x_min - b(delta) x_max)^2; raises
    ``ValueError`` when the bracket is not positive, i.e. delta is too large
    for this signal.
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    inner = a_k(delta, K) * x_min - b_coef(delta) * x_max
    if inner <= 0:
        raise ValueError(
            f"delta={delta} violates the RIC condition "
            f"(bound {delta_bound(K, x_max / x_min)})"
        )
    return (1.0 - delta) / (1.0 + delta) ** 2 * inner**2


def epsilon_bound_structured(kind, delta, K, x_norm, alpha=None):
    """Closed forms of :func:`epsilon_bound` for flat, linear and decaying signals.

    For the decaying profile x_min = alpha^(K-1) x_max, x_max =
    ||x|| sqrt((1-alpha^2)/(1-alpha^(2K))) (limit ||x||/sqrt(K) at alpha=1).
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    a, b = a_k(delta, K), b_coef(delta)
    lead = (1.0 - delta) / (1.0 + delta) ** 2
    if kind == "flat":
        inner2 = (a - b) ** 2 * x_norm**2 / K
        sign = a - b
    elif kind == "linear":
        inner2 = 6.0 * x_norm**2 / (K * (K + 1) * (2 * K + 1)) * (a - K * b) ** 2
        sign = a - K * b
    elif kind == "decaying":
        if alpha is None or not 0 < alpha <= 1:
            raise ValueError("decaying structure needs alpha in (0, 1]")
        ratio = 1.0 / K if alpha == 1.0 else (1 - alpha**2) / (1 - alpha ** (2 * K))
        sign = a * alpha ** (K - 1) - b
        inner2 = ratio * sign**2 * x_norm**2
    else:
        raise ValueError(f"no closed form for structure {kind!r}")
    if sign <= 0:
        raise ValueError(f"delta={delta} violates the RIC condition for {kind} signals")
    return lead * inner2


def structure_extremes(kind, K, x_norm, alpha=None):
    """(x_min, x_max) of the flat / linear / decaying profile with norm ``x_norm``."""
    if kind == "flat":
        v = x_norm / math.sqrt(K)
        return v, v
    if kind == "linear":
        step = linear_scale(K, x_norm)
        return step, K * step
    if kind == "decaying":
        top = decaying_max(K, alpha, x_norm)
        return top * alpha ** (K - 1), top
    raise ValueError(f"no closed form for structure {kind!r}")


def rho_gamma(delta):
    """Contraction and amplification factors sqrt(2)d/sqrt(1-d^2), sqrt(2)/sqrt(1-d^2)."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    root = math.sqrt(1.0 - delta * delta)
    return math.sqrt(2.0) * delta / root, math.sqrt(2.0) / root


def phase_params(K, kbar):
    """(p, q, r) = ((K-1)/kbar, (K-2)/(kbar-1), 1/(kbar-1)).

    q is clamped at 0 for K = 1, where p = 0 and q never enters the law.
    """
    if kbar < 2 or K < 1 or K > kbar:
        raise ValueError(f"need kbar >= 2 and 1 <= K <= kbar, got K={K}, kbar={kbar}")
    p = (K - 1) / kbar
    q = max(K - 2, 0) / (kbar - 1)
    r = 1.0 / (kbar - 1)
    return p, q, r


def t1_pmf(t, K, kbar):
    """P(T1 = t): 1-p at t = 1, p q^(t-2) (1-q) for t > 1."""
    p, q, _ = phase_params(K, kbar)
    if t < 1:
        raise ValueError("t must be at least 1")
    if t == 1:
        return 1.0 - p
    return p * q ** (t - 2) * (1.0 - q)


def t1_mean_exact(K, kbar):
    """Mean of the T1 law above, 1 + p/(1-q)."""
    p, q, _ = phase_params(K, kbar)
    return 1.0 + p / (1.0 - q)


def t1_mean_bound(K, kbar):
    """The T1 term of the waiting-time formula, p/(1-q) = (1-1/kbar)(K-1)/(kbar-K+1)."""
    return (1.0 - 1.0 / kbar) * (K - 1) / (kbar - K + 1)


def t2_upper_bound(eps, delta, x_norm):
    """floor(max(0, ln G / ln rho)), G = sqrt(eps (1-delta)) / ((1+delta) ||x||)."""
    if eps <= 0 or x_norm <= 0:
        raise ValueError("eps and x_norm must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rho, _ = rho_gamma(delta)
    if rho >= 1:
        raise ValueError(f"contraction violated: rho={rho} >= 1")
    g = math.sqrt(eps * (1.0 - delta)) / ((1.0 + delta) * x_norm)
    return int(math.floor(max(0.0, math.log(g) / math.log(rho))))


def t3_pmf(t, kbar):
    """P(T3 = t) = r (1-r)^(t-1), r = 1/(kbar-1)."""
    if kbar < 2:
        raise ValueError("kbar must be at least 2")
    if t < 1:
        raise ValueError("t must be at least 1")
    r = 1.0 / (kbar - 1)
    return r * (1.0 - r) ** (t - 1)


def expected_waiting_time(K, kbar, eps, delta, x_norm):
    """(1-1/kbar)(K-1)/(kbar-K+1) + T2 bound + kbar - 1."""
    phase_params(K, kbar)
    return t1_mean_bound(K, kbar) + t2_upper_bound(eps, delta, x_norm) + (kbar - 1)


@dataclass
class DecayReport:
    passed: bool
    certified: bool
    rows: list
    checked: int
    vacuous: int
    min_margin: float

    def to_dict(self):
        margin = self.min_margin if math.isfinite(self.min_margin) else None
        return {"passed": self.passed, "certified": self.certified, "checked": self.checked,
                "vacuous": self.vacuous, "min_margin": margin}


def decay_bound_check(trace, instance, ric_table, rtol=1e-9):
    """Replay the per-iteration decay inequality on an MCHTP trace.

    For every iteration t and candidate i checks
    ||x_i^t - x|| <= rho_{t,i} ||x^{t-1} - x|| + gamma_{t,i} ||x outside Gamma_{t,i}||
    where Gamma_{t,i} holds the K_{t,i} largest entries of the true signal and
    rho_{t,i} = sqrt(2) d_{K_{t,i}+K_{t-1}+K} / sqrt(1 - d_{K_{t,i}+K}^2),
    gamma_{t,i} = sqrt(2) / sqrt(1 - d_{K_{t,i}+K}^2).
    The kept iterate is checked through its candidate. When
    d_{K_{t,i}+K} >= 1 the bound is infinite and the row counts as vacuous.

    The right-hand side grows with every delta, so a pass computed from
    lower-bound entries of ``ric_table`` still certifies the inequality for
    the true constants; a failure is conclusive only if every order used is
    exact.
    """
    if not isinstance(ric_table, RicTable):
        # plain mapping s -> delta_s, taken as exact values
        ric_table = RicTable(dict(ric_table), set(ric_table))
    x = np.asarray(instance.x, dtype=float)
    K = int(np.count_nonzero(x))
    n = x.size
    order = np.argsort(-np.abs(x), kind="stable")
    x_prev = np.zeros(n)
    k_prev = 0
    rows = []
    all_exact = True
    for rec in trace.records:
        err_prev = float(np.linalg.norm(x_prev - x))
        for i, k in ((0, rec.k0), (1, rec.k1)):
            big, small = k + k_prev + K, k + K
            for s in (big, small):
                if s not in ric_table:
                    raise ValueError(f"RIC order {s} missing from table")
            d_big, d_small = ric_table[big], ric_table[small]
            lhs = float(np.linalg.norm(rec.candidate(i, n) - x))
            tail = float(np.linalg.norm(x[order[k:]]))
            if d_small >= 1.0:
                rhs, vacuous = math.inf, True
            else:
                root = math.sqrt(1.0 - d_small**2)
                rhs = math.sqrt(2.0) * d_big / root * err_prev + math.sqrt(2.0) / root * tail
                vacuous = False
            ok = lhs <= rhs * (1 + rtol) + rtol * float(np.linalg.norm(x))
            if not ok and not (ric_table.is_exact(big) and ric_table.is_exact(small)):
                all_exact = False
            rows.append({"t": rec.t, "i": i, "k": k, "chosen": rec.chosen == i,
                         "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
                         "vacuous": vacuous, "ok": ok})
        x_prev = rec.estimate(n)
        k_prev = rec.k
    passed = all(r["ok"] for r in rows)
    finite = [r["margin"] for r in rows if not r["vacuous"]]
    return DecayReport(
        passed=passed,
        certified=passed or all_exact,
        rows=rows,
        checked=len(rows),
        vacuous=sum(r["vacuous"] for r in rows),
        min_margin=min(finite) if finite else math.inf,
    )


def best_support_exhaustive(phi, y, k):
    """Least-squares fit over every support of size ``k``; returns the best (x, residual)."""
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[1]
    best_x, best_e = None, math.inf
    for supp in itertools.combinations(range(n), k):
        z = least_squares_on_support(phi, y, np.array(supp, dtype=np.int64))
        r = y - phi @ z
        e = float(r @ r)
        if e < best_e:
            best_x, best_e = z, e
    return best_x, best_e
