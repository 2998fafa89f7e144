"""Synthetic compressed-sensing instances.

All randomness goes through ``numpy.random.default_rng`` (PCG64), seeded
explicitly, so every generator is a pure function of its arguments.
"""
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SignalStructure",
    "ProblemInstance",
    "gen_gaussian_matrix",
    "gen_tight_frame",
    "gen_signal",
    "make_instance",
    "generate_instance",
    "signal_ratio",
    "linear_scale",
    "decaying_max",
    "instance_to_dict",
    "instance_from_dict",
]

KINDS = ("flat", "linear", "decaying", "gaussian")


@dataclass(frozen=True)
class SignalStructure:
    kind: str = "gaussian"
    alpha: float = None
    norm: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal structure {self.kind!r}")
        if self.kind == "decaying":
            if self.alpha is None or not 0 < self.alpha <= 1:
                raise ValueError("decaying structure needs alpha in (0, 1]")
        if not self.norm > 0:
            raise ValueError("target norm must be positive")

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "norm": self.norm}


@dataclass
class ProblemInstance:
    phi: np.ndarray
    x: np.ndarray
    y: np.ndarray
    seed: int = None
    structure: SignalStructure = field(default_factory=SignalStructure)
    noise_std: float = 0.0

    @property
    def K(self):
        return int(np.count_nonzero(self.x))

    @property
    def support(self):
        return np.flatnonzero(self.x)

    @property
    def shape(self):
        return self.phi.shape


def gen_gaussian_matrix(M, N, seed, normalize=False):
    """M x N matrix with i.i.d. N(0, 1/M) entries.

    ``normalize=True`` rescales every column to unit norm.
    """
    if M < 1 or N < 1:
        raise ValueError("dimensions must be positive")
    if M > N:
        raise ValueError(f"need M <= N for an underdetermined system, got M={M}, N={N}")
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((M, N)) / np.sqrt(M)
    if normalize:
        phi /= np.linalg.norm(phi, axis=0)
    return phi


def gen_tight_frame(M, N, seed, unit_columns=True):
    """Polar factor of a Gaussian matrix: orthonormal rows, so phi phi^T = I.

    With ``unit_columns`` the columns are then rescaled to unit norm, which
    keeps the frame close to tight.
    """
    g = gen_gaussian_matrix(M, N, seed)
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    phi = u @ vt
    if unit_columns:
        phi /= np.linalg.norm(phi, axis=0)
    return phi


def linear_scale(K, norm=1.0):
    """Step of the linear profile alpha*j, j=1..K, with total norm ``norm``."""
    return np.sqrt(6.0 * norm**2 / (K * (K + 1) * (2 * K + 1)))


def decaying_max(K, alpha, norm=1.0):
    """Largest magnitude of the geometric profile x_max*alpha^(j-1), j=1..K."""
    if alpha == 1.0:
        return norm / np.sqrt(K)
    return norm * np.sqrt((1 - alpha**2) / (1 - alpha ** (2 * K)))


def _magnitudes(K, structure, rng):
    kind, norm = structure.kind, structure.norm
    j = np.arange(1, K + 1, dtype=float)
    if kind == "flat":
        mags = np.full(K, norm / np.sqrt(K))
    elif kind == "linear":
        mags = linear_scale(K, norm) * j
    elif kind == "decaying":
        mags = decaying_max(K, structure.alpha, norm) * structure.alpha ** (j - 1)
    else:
        return rng.standard_normal(K)
    # random order on the support, independent uniform signs
    mags = mags[rng.permutation(K)]
    return mags * rng.choice([-1.0, 1.0], size=K)


def gen_signal(N, K, structure=None, seed=None):
    """K-sparse vector of length N on a uniformly random support.

    The nonzero profile follows ``structure`` and the result has Euclidean
    norm ``structure.norm`` up to rounding.
    """
    structure = structure or SignalStructure()
    if K < 1 or K > N:
        raise ValueError(f"need 1 <= K <= N, got K={K}, N={N}")
    rng = np.random.default_rng(seed)
    supp = np.sort(rng.choice(N, size=K, replace=False))
    vals = _magnitudes(K, structure, rng)
    if structure.kind == "gaussian":
        vals *= structure.norm / np.linalg.norm(vals)
    x = np.zeros(N)
    x[supp] = vals
    return x


def make_instance(phi, x, noise_std=0.0, seed=None, structure=None):
    """Measure ``x`` through ``phi``: y = phi x + e, e ~ N(0, noise_std^2 I)."""
    phi = np.asarray(phi, dtype=float)
    x = np.asarray(x, dtype=float)
    if phi.shape[1] != x.shape[0]:
        raise ValueError("phi and x have inconsistent dimensions")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    y = phi @ x
    if noise_std > 0:
        y = y + noise_std * np.random.default_rng(seed).standard_normal(phi.shape[0])
    return ProblemInstance(
        phi=phi, x=x, y=y, seed=seed,
        structure=structure or SignalStructure(), noise_std=noise_std,
    )


def _sub_seeds(seed):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(3)]


def generate_instance(M, N, K, structure=None, seed=0, noise_std=0.0, normalize=False):
    """Matrix, signal and noise drawn from three streams derived from ``seed``."""
    structure = structure or SignalStructure()
    s_phi, s_x, s_e = _sub_seeds(seed)
    phi = gen_gaussian_matrix(M, N, s_phi, normalize=normalize)
    x = gen_signal(N, K, structure, s_x)
    inst = make_instance(phi, x, noise_std, s_e, structure)
    inst.seed = seed
    return inst


def signal_ratio(x):
    """(x_min, x_max, R) over the nonzero magnitudes of ``x``."""
    mags = np.abs(np.asarray(x, dtype=float))
    mags = mags[mags > 0]
    if mags.size == 0:
        raise ValueError("signal_ratio of the zero vector")
    x_min, x_max = float(mags.min()), float(mags.max())
    return x_min, x_max, x_max / x_min


def instance_to_dict(inst, include_entries=False, normalize=False):
    """JSON-ready description; without entries the instance is replayed from the seed."""
    M, N = inst.phi.shape
    d = {
        "M": M,
        "N": N,
        "K": inst.K,
        "seed": inst.seed,
        "structure": inst.structure.to_dict(),
        "noise_std": inst.noise_std,
        "normalize": normalize,
    }
    if include_entries:
        d["phi"] = inst.phi.tolist()
        d["x"] = inst.x.tolist()
        d["y"] = inst.y.tolist()
    return d


def instance_from_dict(d):
    structure = SignalStructure(**d["structure"])
    if "phi" in d:
        return ProblemInstance(
            phi=np.array(d["phi"], dtype=float),
            x=np.array(d["x"], dtype=float),
            y=np.array(d["y"], dtype=float),
            seed=d.get("seed"),
            structure=structure,
            noise_std=d.get("noise_std", 0.0),
        )
    return generate_instance(
        d["M"], d["N"], d["K"], structure, d["seed"],
        d.get("noise_std", 0.0), d.get("normalize", False),
    )
