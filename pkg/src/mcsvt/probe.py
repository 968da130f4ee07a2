"""Monte Carlo probes of the stochastic terms, packing sets and a USVT baseline."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import numerical_rank, sup_norm
from .sampling import NoiseModel, ObservationSet, SamplingModel, check_rng, draw_mask, marginals

__all__ = [
    "StochasticTermSample",
    "ProbeReport",
    "PackingSet",
    "sample_sigma",
    "sigma_bound",
    "count_violations",
    "check_sigma_bound",
    "estimate_expected_sigma_r",
    "packing_entry_value",
    "packing_separation",
    "build_packing_set",
    "usvt_baseline",
    "check_packing",
]


@dataclass(frozen=True)
class StochasticTermSample:
    """One draw of the noise-on-mask matrix and the Rademacher-on-mask matrix."""

    sigma_matrix: np.ndarray
    sigma_r_matrix: np.ndarray
    opnorm_sigma: float
    opnorm_sigma_r: float


@dataclass
class ProbeReport:
    reps: int
    bound: float
    violations: int | None = None
    mean_opnorm: float | None = None
    ratio_to_bound: float | None = None
    calibrated_constant: float | None = None
    quantile_99: float | None = None
    opnorms: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "bound": self.bound,
            "violations": self.violations,
            "mean_opnorm": self.mean_opnorm,
            "ratio_to_bound": self.ratio_to_bound,
            "calibrated_constant": self.calibrated_constant,
            "quantile_99": self.quantile_99,
        }


def _opnorm(A: np.ndarray) -> float:
    return float(np.linalg.svd(A, compute_uv=False)[0])


def sample_sigma(model: SamplingModel, noise: NoiseModel, rng) -> StochasticTermSample:
    rng = check_rng(rng)
    eta = draw_mask(model, rng).mask
    xi = noise.sample(model.shape, rng)
    eps = 2.0 * rng.integers(0, 2, size=model.shape) - 1.0
    S = np.where(eta, xi, 0.0)
    S_R = np.where(eta, eps, 0.0)
    return StochasticTermSample(S, S_R, _opnorm(S), _opnorm(S_R))


def sigma_bound(sigma: float, b: float, L: float, t: float, c_star: float) -> float:
    """High-probability bound 3 sigma sqrt(2L) + c_star b t on the noise-matrix operator norm."""
    return 3.0 * sigma * math.sqrt(2.0 * L) + c_star * b * t


def count_violations(opnorms, sigma: float, b: float, L: float, t: float, c_star: float) -> int:
    return int(np.sum(np.asarray(opnorms) > sigma_bound(sigma, b, L, t, c_star)))


def check_sigma_bound(model: SamplingModel, noise: NoiseModel, t: float, c_star: float, reps: int,
                      rng) -> ProbeReport:
    """Count replicates whose noise-matrix operator norm exceeds the bound.

    ``calibrated_constant`` is the smallest ``c_star`` giving zero violations
    on these replicates.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not t > 0:
        raise ValueError("t must be positive")
    rng = check_rng(rng)
    L = marginals(model).L
    norms = np.array([sample_sigma(model, noise, rng).opnorm_sigma for _ in range(reps)])
    bound = sigma_bound(noise.sigma, noise.b, L, t, c_star)
    excess = norms.max() - 3.0 * noise.sigma * math.sqrt(2.0 * L)
    if noise.b > 0:
        calibrated = max(excess, 0.0) / (noise.b * t)
    else:
        calibrated = 0.0
    mean = float(norms.mean())
    return ProbeReport(
        reps=reps,
        bound=bound,
        violations=int(np.sum(norms > bound)),
        mean_opnorm=mean,
        ratio_to_bound=mean / bound if bound > 0 else None,
        calibrated_constant=float(calibrated),
        quantile_99=float(np.quantile(norms, 0.99)),
        opnorms=norms,
    )


def estimate_expected_sigma_r(model: SamplingModel, reps: int, rng) -> ProbeReport:
    """Monte Carlo mean of the Rademacher-matrix operator norm over sqrt(L) + sqrt(log m)."""
    if reps < 30:
        raise ValueError("reps must be >= 30 for a usable mean")
    rng = check_rng(rng)
    L = marginals(model).L
    m = min(model.shape)
    norms = np.empty(reps)
    for k in range(reps):
        eta = draw_mask(model, rng).mask
        eps = 2.0 * rng.integers(0, 2, size=model.shape) - 1.0
        norms[k] = _opnorm(np.where(eta, eps, 0.0))
    bound = math.sqrt(L) + math.sqrt(math.log(m))
    mean = float(norms.mean())
    ratio = mean / bound
    return ProbeReport(
        reps=reps,
        bound=bound,
        mean_opnorm=mean,
        ratio_to_bound=ratio,
        calibrated_constant=ratio,
        quantile_99=float(np.quantile(norms, 0.99)),
        opnorms=norms,
    )


@dataclass
class PackingSet:
    members: list
    r: int
    a: float
    gamma: float
    separation: float
    value: float
    requested: int
    shortfall: bool

    def __len__(self) -> int:
        return len(self.members)

    def manifest(self) -> dict:
        return {
            "r": self.r,
            "a": self.a,
            "gamma": self.gamma,
            "separation": self.separation,
            "count": len(self.members),
            "shortfall": self.shortfall,
        }

    def min_pairwise_sq_distance(self) -> float:
        best = math.inf
        for A, B in itertools.combinations(self.members, 2):
            D = A - B
            best = min(best, float(np.sum(D * D)))
        return best


def packing_entry_value(m1: int, m2: int, r: int, p: float, sigma: float, a: float, gamma: float) -> float:
    """Nonzero entry value gamma * min(sigma, a) * sqrt(r / (p m)), m = min(m1, m2)."""
    return gamma * min(sigma, a) * math.sqrt(r / (p * min(m1, m2)))


def packing_separation(m1: int, m2: int, r: int, p: float, sigma: float, a: float, gamma: float) -> float:
    """Guaranteed pairwise squared Frobenius distance (gamma^2/16) (sigma^a)^2 m1 m2 r / (p m)."""
    return gamma**2 / 16.0 * min(sigma, a) ** 2 * m1 * m2 * r / (p * min(m1, m2))


def build_packing_set(m1: int, m2: int, r: int, p: float, sigma: float, a: float, gamma: float,
                      target_count: int, rng, max_tries: int = 10_000) -> PackingSet:
    """Random search for well-separated block matrices of rank <= r.

    For ``m1 >= m2`` each member is ``(B | B | ... | B | 0)``: a random binary
    ``m1 x r`` block ``B`` scaled to the two-point entry set and repeated
    ``floor(m2 / (2r))`` times, then zero-padded. For ``m1 < m2`` the same
    construction is built transposed. Candidates are kept only if their
    squared distance to every accepted member (the zero matrix included)
    reaches the separation. If ``max_tries`` candidates are exhausted first,
    the partial set is returned with ``shortfall=True``.
    """
    m = min(m1, m2)
    if not 1 <= r <= m:
        raise ValueError(f"need 1 <= r <= min(m1, m2), got r={r}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if p < r / m:
        raise ValueError(f"need p >= r/m = {r / m:.6g} for admissible entries, got p={p}")
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if not (sigma > 0 and a > 0):
        raise ValueError("sigma and a must be positive")
    if target_count < 2:
        raise ValueError("target_count must be >= 2")
    rng = check_rng(rng)

    value = packing_entry_value(m1, m2, r, p, sigma, a, gamma)
    if value > a:
        raise AssertionError(f"entry value {value} exceeds sup bound {a}")
    separation = packing_separation(m1, m2, r, p, sigma, a, gamma)

    tall, wide = max(m1, m2), m
    reps = wide // (2 * r)
    if reps < 1:
        raise ValueError(f"min(m1, m2) = {m} too small to hold two copies of an r = {r} block")

    def assemble(block: np.ndarray) -> np.ndarray:
        A = np.zeros((tall, wide))
        A[:, : r * reps] = np.tile(block * value, (1, reps))
        return A if m1 >= m2 else A.T

    blocks = [np.zeros((tall, r), dtype=bool)]
    members = [assemble(blocks[0])]
    # pairwise squared distance = reps * value^2 * Hamming distance of blocks
    need = separation / (reps * value**2)
    tries = 0
    while len(members) < target_count and tries < max_tries:
        tries += 1
        cand = rng.random((tall, r)) < 0.5
        if all(np.count_nonzero(cand != B) >= need - 1e-9 for B in blocks):
            blocks.append(cand)
            members.append(assemble(cand))
    return PackingSet(members, r, a, gamma, separation, value, target_count, len(members) < target_count)


USVT_ETA = 2.01


def usvt_baseline(Y: ObservationSet, a: float, eta: float = USVT_ETA) -> np.ndarray:
    """Universal singular value thresholding (one step, hard threshold).

    Observations are scaled into ``[-1, 1]`` by ``a``; singular values of the
    zero-filled matrix above ``eta * sqrt(max(m1, m2) * p_hat)`` are kept,
    the truncated reconstruction is divided by ``p_hat`` and clipped to
    ``[-a, a]``. The default ``eta = 2 + 0.01`` is Chatterjee's usual choice.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    n_obs = len(Y.mask)
    if n_obs == 0:
        raise ValueError("USVT needs at least one observation")
    m1, m2 = Y.shape
    p_hat = n_obs / (m1 * m2)
    Z = np.clip(Y.to_dense() / a, -1.0, 1.0)
    U, d, Vt = np.linalg.svd(Z, full_matrices=False)
    keep = d > eta * math.sqrt(max(m1, m2) * p_hat)
    W = (U[:, keep] * d[keep]) @ Vt[keep] / p_hat
    return np.clip(W, -1.0, 1.0) * a


def check_packing(ps: PackingSet) -> dict:
    """Per-member rank / sup-norm / entry checks plus the minimum pairwise distance."""
    ranks = [numerical_rank(A, 1e-10 * max(1.0, sup_norm(A))) if np.any(A) else 0 for A in ps.members]
    sups = [float(np.abs(A).max()) for A in ps.members]
    two_valued = all(np.all((A == 0) | (A == ps.value)) for A in ps.members)
    return {
        "max_rank": max(ranks),
        "max_sup": max(sups),
        "two_valued": bool(two_valued),
        "contains_zero": any(not np.any(A) for A in ps.members),
        "min_sq_distance": ps.min_pairwise_sq_distance(),
    }
