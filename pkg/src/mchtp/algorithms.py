"""Greedy recovery algorithms: HTP, MCHTP and the GHTP / SP / MSP baselines.

All algorithms start from the zero vector and return a :class:`RunTrace`.
"""
import time
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import least_squares_on_support, magnitude_order, top_k_support
from .trace import IterationRecord, RunTrace

__all__ = [
    "AlgoConfig",
    "DEFAULT_EPS_REL",
    "htp_step",
    "select_candidate",
    "run_htp",
    "run_mchtp",
    "run_ghtp",
    "run_sp",
    "run_msp",
    "ALGORITHMS",
]

# Benchmark-mode threshold relative to ||y||^2 when no explicit eps is given.
DEFAULT_EPS_REL = 1e-10
DEFAULT_MSP_TOL_REL = 1e-6


@dataclass
class AlgoConfig:
    """Parameters shared by every algorithm.

    ``eps=None`` resolves to ``DEFAULT_EPS_REL * ||y||^2`` per instance.
    ``tol`` is an absolute residual-energy stopping level; at 0 a run only
    stops early on an exactly zero residual. ``selection`` is ``"sparsity"``
    (small-error-gap branch keeps the smaller sparsity) or ``"argmax"``
    (literal argmax of the two energies).
    """
    kbar: int = 2
    mu: float = 1.0
    eps: float = None
    T: int = 1000
    seed: int = 0
    tol: float = 0.0
    early_stop: bool = False
    stable_window: int = 10
    selection: str = "sparsity"

    def validate(self, M=None, N=None):
        if self.kbar < 2:
            raise ValueError("kbar must be at least 2")
        if M is not None and self.kbar > min(M, N):
            raise ValueError(f"kbar={self.kbar} exceeds min(M, N)={min(M, N)}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.selection not in ("sparsity", "argmax"):
            raise ValueError(f"unknown selection rule {self.selection!r}")
        return self

    def to_dict(self):
        return asdict(self)


def _unpack(instance):
    return np.asarray(instance.phi, dtype=float), np.asarray(instance.y, dtype=float)


def _proxy(phi, y, x_prev, mu):
    return x_prev + mu * (phi.T @ (y - phi @ x_prev))


def _fit(phi, y, support):
    z = least_squares_on_support(phi, y, support)
    r = y - phi @ z
    return z, float(r @ r)


def htp_step(phi, y, x_prev, k, mu):
    """One HTP iteration at sparsity ``k``.

    Returns the top-``k`` support of the gradient proxy
    ``x_prev + mu * phi^T (y - phi x_prev)``, the least-squares fit on it and
    the fit's residual energy.
    """
    if k < 0 or k > phi.shape[0]:
        raise ValueError(f"k={k} outside [0, M={phi.shape[0]}]")
    supp = top_k_support(_proxy(phi, y, x_prev, mu), k)
    z, e = _fit(phi, y, supp)
    return supp, z, e


def select_candidate(k0, k1, e0, e1, eps, rule="sparsity"):
    """Index (0 or 1) of the MCHTP candidate kept for the next iteration.

    A gap ``|e1 - e0| > eps`` keeps the lower-error candidate. Otherwise the
    smaller sparsity is kept; with ``rule="argmax"`` the higher-error
    candidate is kept instead, which agrees in exact arithmetic.
    """
    if abs(e1 - e0) > eps:
        return 0 if e0 <= e1 else 1
    if rule == "argmax":
        return 0 if e0 >= e1 else 1
    return 0 if k0 < k1 else 1


def _sample_other(rng, kbar, exclude):
    """Uniform draw from {1..kbar} minus ``exclude``."""
    if exclude < 1 or exclude > kbar:
        return int(rng.integers(1, kbar + 1))
    u = int(rng.integers(1, kbar))
    return u + 1 if u >= exclude else u


def _sparse(z, support):
    return support, z[support].copy()


def run_htp(instance, k, config=None):
    """HTP with known sparsity ``k`` from x^0 = 0.

    Stops after ``config.T`` iterations, when the support repeats (the
    iterate is then a fixed point) or when the residual energy drops to
    ``config.tol``.
    """
    config = config or AlgoConfig()
    phi, y = _unpack(instance)
    M, N = phi.shape
    if k < 0 or k > M:
        raise ValueError(f"k={k} outside [0, M={M}]")
    trace = RunTrace("htp", N, {**config.to_dict(), "k": k})
    x = np.zeros(N)
    prev_supp = None
    stop = "budget"
    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        supp, x, e = htp_step(phi, y, x, k, config.mu)
        trace.append(IterationRecord(t, k, *_sparse(x, supp), e,
                                     (time.perf_counter() - t0) * 1e6))
        if e <= config.tol:
            stop = "residual"
            break
        if prev_supp is not None and np.array_equal(supp, prev_supp):
            stop = "support"
            break
        prev_supp = supp
    trace.info["stop"] = stop
    return trace


def run_mchtp(instance, config, selector=None):
    """Multiple Choice HTP: joint sparsity-order estimation and recovery.

    Each iteration fits the carried sparsity K_{t-1} and a fresh uniform draw
    from {1..kbar} \\ {K_{t-1}} on the same gradient proxy and keeps one of
    them via ``selector`` (default :func:`select_candidate`). At t = 1 the
    carried candidate is the empty support with energy ||y||^2.

    ``selector(k0, k1, e0, e1, eps)`` may be replaced to audit the selection
    checks against a deliberately wrong rule.
    """
    phi, y = _unpack(instance)
    M, N = phi.shape
    config.validate(M, N)
    if selector is None:
        def selector(k0, k1, e0, e1, eps):
            return select_candidate(k0, k1, e0, e1, eps, config.selection)
    y_energy = float(y @ y)
    eps = config.eps if config.eps is not None else DEFAULT_EPS_REL * y_energy
    rng = np.random.default_rng(config.seed)
    trace = RunTrace("mchtp", N, config.to_dict(), info={"eps": eps})

    x = np.zeros(N)
    k_prev = 0
    stable = 0
    stop = "budget"
    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        k0 = k_prev
        k1 = _sample_other(rng, config.kbar, k0)
        order = magnitude_order(_proxy(phi, y, x, config.mu))
        cands = []
        for k in (k0, k1):
            supp = np.sort(order[:k]).astype(np.int64)
            z, e = _fit(phi, y, supp)
            cands.append((supp, z, e))
        (s0, z0, e0), (s1, z1, e1) = cands
        i = selector(k0, k1, e0, e1, eps)
        supp, x, e = cands[i]
        k_new = (k0, k1)[i]
        trace.append(IterationRecord(
            t, k_new, *_sparse(x, supp), e, (time.perf_counter() - t0) * 1e6,
            k0=k0, k1=k1, e0=e0, e1=e1, de=abs(e1 - e0), chosen=i,
            support0=s0, support1=s1, values0=z0[s0].copy(), values1=z1[s1].copy(),
        ))
        stable = stable + 1 if k_new == k_prev else 0
        k_prev = k_new
        if config.early_stop and config.tol > 0 and e <= config.tol \
                and stable >= config.stable_window:
            stop = "stable"
            break
    trace.info["stop"] = stop
    return trace


def run_ghtp(instance, config=None):
    """Graded HTP: iteration t runs one HTP step at sparsity t.

    Runs until the residual energy reaches ``config.tol`` or
    t = min(T, kbar); the reported sparsity is the stopping index.
    """
    config = config or AlgoConfig()
    phi, y = _unpack(instance)
    M, N = phi.shape
    trace = RunTrace("ghtp", N, config.to_dict())
    x = np.zeros(N)
    stop = "budget"
    for t in range(1, min(config.T, config.kbar, M) + 1):
        t0 = time.perf_counter()
        supp, x, e = htp_step(phi, y, x, t, config.mu)
        trace.append(IterationRecord(t, t, *_sparse(x, supp), e,
                                     (time.perf_counter() - t0) * 1e6))
        if e <= config.tol:
            stop = "residual"
            break
    trace.info["stop"] = stop
    return trace


def run_sp(instance, k, config=None, initial_support=None):
    """Subspace pursuit at sparsity ``k``.

    Each iteration merges the current support with the top-``k`` correlations
    of the residual, fits on the union, prunes to the ``k`` largest
    coefficients and refits. Stops once the residual energy fails to
    decrease (the previous estimate is kept), reaches ``config.tol``, or
    after ``config.T`` iterations.
    """
    config = config or AlgoConfig()
    phi, y = _unpack(instance)
    M, N = phi.shape
    if k < 1 or 2 * k > M:
        raise ValueError(f"subspace pursuit needs 1 <= k <= M/2, got k={k}, M={M}")
    trace = RunTrace("sp", N, {**config.to_dict(), "k": k})
    if initial_support is None:
        supp = top_k_support(phi.T @ y, k)
    else:
        supp = np.sort(np.asarray(initial_support, dtype=np.int64))
    x, e = _fit(phi, y, supp)
    stop = "budget"
    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        grown = np.union1d(supp, top_k_support(phi.T @ (y - phi @ x), k))
        wide = least_squares_on_support(phi, y, grown)
        cand_supp = top_k_support(wide, k)
        cand_x, cand_e = _fit(phi, y, cand_supp)
        improved = cand_e < e
        if improved:
            supp, x, e = cand_supp, cand_x, cand_e
        trace.append(IterationRecord(t, k, *_sparse(x, supp), e,
                                     (time.perf_counter() - t0) * 1e6))
        if not improved:
            stop = "stalled"
            break
        if e <= config.tol:
            stop = "residual"
            break
    if not trace.records:
        trace.append(IterationRecord(0, k, *_sparse(x, supp), e, 0.0))
    trace.info["stop"] = stop
    return trace


def run_msp(instance, config=None, tol=None):
    """Modified SP: run SP at k = 1, 2, ... and stop at the first good fit.

    ``tol`` defaults to ``config.tol`` when positive, else
    ``1e-6 * ||y||^2``. If no k up to min(kbar, M/2) reaches it, the
    lowest-residual run is returned with ``info["converged"] = False``.
    """
    config = config or AlgoConfig()
    phi, y = _unpack(instance)
    M, N = phi.shape
    if tol is None:
        tol = config.tol if config.tol > 0 else DEFAULT_MSP_TOL_REL * float(y @ y)
    trace = RunTrace("msp", N, {**config.to_dict(), "msp_tol": tol})
    per_k = {}
    inner_iters = {}
    best = None
    converged = False
    cumulative = 0
    for k in range(1, min(config.kbar, M // 2) + 1):
        inner = run_sp(instance, k, config)
        e = inner.final.residual
        per_k[k] = e
        inner_iters[k] = len(inner)
        for rec in inner.records:
            cumulative += 1
            rec.t = cumulative
            trace.append(rec)
        if best is None or e < best.residual:
            best = inner.final
        if e <= tol:
            converged = True
            break
    if not converged and best is not None:
        # keep the lowest-residual estimate as the reported result
        trace.append(IterationRecord(cumulative + 1, best.k, best.support, best.values,
                                     best.residual, 0.0))
    trace.info.update(converged=converged, per_k_residual=per_k,
                      per_k_iterations=inner_iters, cumulative_iterations=cumulative,
                      k=trace.final_sparsity)
    return trace


ALGORITHMS = ("mchtp", "htp", "ghtp", "sp", "msp")
