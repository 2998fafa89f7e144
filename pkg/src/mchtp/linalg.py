"""Dense primitives shared by the recovery algorithms.

Matrices are plain ``numpy`` arrays of shape ``(M, N)`` in numpy's default
row-major layout. Supports are sorted ``int64`` index arrays.
"""
import numpy as np
import scipy.linalg as sla

__all__ = [
    "top_k_support",
    "hard_threshold",
    "least_squares_on_support",
    "residual_energy",
    "magnitude_order",
]

_EMPTY = np.zeros(0, dtype=np.int64)


def _check_k(k, n):
    if k < 0 or k > n:
        raise ValueError(f"k={k} outside [0, {n}]")


def magnitude_order(v):
    """Indices of ``v`` sorted by decreasing magnitude, lowest index first on ties."""
    return np.argsort(-np.abs(v), kind="stable")


def top_k_support(v, k):
    """Sorted indices of the ``k`` largest-magnitude entries of ``v``.

    Ties are broken in favour of the lower index, so the result is a
    deterministic function of ``v``.
    """
    v = np.asarray(v, dtype=float)
    _check_k(k, v.size)
    if k == 0:
        return _EMPTY.copy()
    return np.sort(magnitude_order(v)[:k]).astype(np.int64)


def hard_threshold(v, k):
    """Best k-sparse approximation of ``v`` (entries off the top-k support zeroed)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    supp = top_k_support(v, k)
    out[supp] = v[supp]
    return out


def least_squares_on_support(phi, y, support, return_rank=False):
    """Minimise ``||y - phi z||`` over vectors ``z`` supported on ``support``.

    Solved with a column-pivoted complete orthogonal factorization (LAPACK
    ``gelsy``). Columns whose pivot falls below
    ``eps * max(M, |support|) * (largest column norm)`` are treated as
    dependent and the minimum-norm solution is returned.

    With ``return_rank=True`` the numerical rank of ``phi[:, support]`` is
    returned as well; ``rank < len(support)`` flags a degenerate fit.
    """
    m, n = phi.shape
    support = np.asarray(support, dtype=np.int64)
    z = np.zeros(n)
    if support.size == 0:
        return (z, 0) if return_rank else z
    if support.size > m:
        raise ValueError(f"support of size {support.size} exceeds M={m}")
    cond = np.finfo(float).eps * max(m, support.size)
    coef, _, rank, _ = sla.lstsq(
        phi[:, support], y, cond=cond, lapack_driver="gelsy", check_finite=False
    )
    z[support] = coef
    return (z, int(rank)) if return_rank else z


def residual_energy(phi, z, y):
    """Squared residual norm ``||y - phi z||^2``."""
    if phi.shape[1] != np.shape(z)[0] or phi.shape[0] != np.shape(y)[0]:
        raise ValueError("dimension mismatch")
    r = y - phi @ z
    return float(r @ r)
