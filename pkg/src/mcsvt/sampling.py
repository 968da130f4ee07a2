"""Bernoulli observation model: sampling probabilities, bounded noise, observations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .linalg import IndexSet, as_matrix

__all__ = [
    "SamplingModel",
    "NoiseModel",
    "ObservationSet",
    "MarginalSummary",
    "FeasibilityReport",
    "check_rng",
    "draw_mask",
    "observe",
    "weighted_norm_sq",
    "marginals",
    "empirical_marginals",
    "feasibility_check",
]


def check_rng(rng) -> np.random.Generator:
    """Turn a seed / Generator / None into a ``numpy.random.Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class SamplingModel:
    """Entrywise observation probabilities.

    ``p`` is set for the uniform kind; ``probs`` always holds the full matrix.
    """

    probs: np.ndarray
    p: float | None = None

    def __post_init__(self):
        probs = as_matrix(self.probs, "probs")
        if np.any(probs <= 0):
            raise ValueError(
                "sampling probabilities must be strictly positive: every entry needs "
                "a positive chance of being observed (pi_ij >= p > 0)"
            )
        if np.any(probs > 1):
            raise ValueError("sampling probabilities must not exceed 1")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, p: float, shape: tuple[int, int]) -> "SamplingModel":
        if not 0 < p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {p}")
        return cls(np.full(shape, float(p)), p=float(p))

    @classmethod
    def general(cls, probs) -> "SamplingModel":
        return cls(np.asarray(probs, dtype=float))

    @property
    def kind(self) -> str:
        return "uniform" if self.p is not None else "general"

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def floor(self) -> float:
        return float(self.p) if self.p is not None else float(self.probs.min())

    def expected_count(self) -> float:
        return float(self.probs.sum())


_NOISE_KINDS = ("none", "uniform_bounded", "scaled_rademacher", "truncated_gaussian")


def _truncated_sd(scale: float, b: float) -> float:
    return float(stats.truncnorm.std(-b / scale, b / scale, scale=scale))


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean noise bounded by ``b`` with standard deviation ``sigma``.

    Build instances with the class constructors; ``sigma`` is derived for the
    uniform and Rademacher kinds.
    """

    kind: str = "none"
    sigma: float = 0.0
    b: float = 0.0
    _scale: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and not self.b > 0:
            raise ValueError(f"noise bound b must be positive, got {self.b}")
        if self.sigma < 0 or self.sigma > self.b + 1e-15:
            raise ValueError(f"need 0 <= sigma <= b, got sigma={self.sigma}, b={self.b}")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("none", 0.0, 0.0)

    @classmethod
    def uniform_bounded(cls, b: float) -> "NoiseModel":
        return cls("uniform_bounded", b / math.sqrt(3.0), b)

    @classmethod
    def scaled_rademacher(cls, b: float) -> "NoiseModel":
        return cls("scaled_rademacher", b, b)

    @classmethod
    def truncated_gaussian(cls, sigma: float, b: float) -> "NoiseModel":
        """Gaussian truncated to ``[-b, b]`` whose standard deviation is ``sigma``.

        The underlying normal scale is solved for numerically. A truncated
        normal on ``[-b, b]`` has sd strictly below ``b / sqrt(3)``, so larger
        ``sigma`` is rejected.
        """
        if not b > 0:
            raise ValueError(f"noise bound b must be positive, got {b}")
        if not 0 < sigma < b / math.sqrt(3.0):
            raise ValueError(
                f"truncated Gaussian needs 0 < sigma < b/sqrt(3) = {b / math.sqrt(3.0):.6g}, got {sigma}"
            )
        hi = sigma
        while _truncated_sd(hi, b) < sigma:
            hi *= 2.0
        scale = optimize.brentq(lambda s: _truncated_sd(s, b) - sigma, sigma * 1e-3, hi, xtol=1e-14, rtol=1e-14)
        return cls("truncated_gaussian", sigma, b, scale)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        kind = d.get("kind", "none")
        if kind == "none":
            return cls.none()
        if kind == "uniform_bounded":
            return cls.uniform_bounded(float(d["b"]))
        if kind == "scaled_rademacher":
            return cls.scaled_rademacher(float(d["b"]))
        if kind == "truncated_gaussian":
            return cls.truncated_gaussian(float(d["sigma"]), float(d["b"]))
        raise ValueError(f"unknown noise kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "b": self.b}

    def sample(self, size, rng) -> np.ndarray:
        rng = check_rng(rng)
        if self.kind == "none":
            return np.zeros(size)
        if self.kind == "uniform_bounded":
            x = rng.uniform(-self.b, self.b, size=size)
        elif self.kind == "scaled_rademacher":
            x = self.b * (2.0 * rng.integers(0, 2, size=size) - 1.0)
        else:
            lim = self.b / self._scale
            x = stats.truncnorm.rvs(-lim, lim, scale=self._scale, size=size, random_state=rng)
        # hard guarantee |xi| <= b
        return np.clip(x, -self.b, self.b)


@dataclass(frozen=True)
class ObservationSet:
    """Observed entries: the mask and one value per masked position (row-major order)."""

    mask: IndexSet
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size != len(self.mask):
            raise ValueError(f"expected {len(self.mask)} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observed values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_dense(cls, Y, mask: IndexSet) -> "ObservationSet":
        Y = np.asarray(Y, dtype=float)
        if Y.shape != mask.shape:
            raise ValueError(f"shape mismatch: {Y.shape} vs mask {mask.shape}")
        return cls(mask, Y[mask.mask])

    @classmethod
    def from_nan(cls, X) -> "ObservationSet":
        """Observed entries are the non-NaN ones."""
        X = np.asarray(X, dtype=float)
        observed = ~np.isnan(X)
        if np.any(np.isinf(X)):
            raise ValueError("input contains infinite entries")
        return cls(IndexSet(observed), X[observed])

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def to_dense(self) -> np.ndarray:
        """Zero-filled observation matrix Y."""
        Y = np.zeros(self.shape)
        Y[self.mask.mask] = self.values
        return Y

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return self.mask == other.mask and bool(np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class MarginalSummary:
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    L: float


@dataclass(frozen=True)
class FeasibilityReport:
    expected_n: float
    threshold: float
    feasible: bool
    dense_threshold: float
    dense: bool


def draw_mask(model: SamplingModel, rng) -> IndexSet:
    rng = check_rng(rng)
    return IndexSet(rng.random(model.shape) < model.probs)


def observe(M0, noise: NoiseModel, mask: IndexSet, rng) -> ObservationSet:
    M0 = as_matrix(M0, "M0")
    if M0.shape != mask.shape:
        raise ValueError(f"shape mismatch: M0 {M0.shape} vs mask {mask.shape}")
    rng = check_rng(rng)
    xi = noise.sample(M0.shape, rng)
    return ObservationSet(mask, (M0 + xi)[mask.mask])


def weighted_norm_sq(A, model: SamplingModel) -> float:
    """Squared L2(Pi) norm: sum of pi_ij * A_ij**2."""
    A = as_matrix(A)
    if A.shape != model.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs sampling model {model.shape}")
    return float(np.sum(model.probs * A * A))


def marginals(model: SamplingModel) -> MarginalSummary:
    rows = model.probs.sum(axis=1)
    cols = model.probs.sum(axis=0)
    return MarginalSummary(rows, cols, float(max(rows.max(), cols.max())))


def empirical_marginals(mask: IndexSet) -> tuple[np.ndarray, np.ndarray]:
    total = len(mask)
    if total == 0:
        raise ValueError("empirical marginals are undefined for an empty mask")
    counts = mask.mask.astype(float)
    return counts.sum(axis=1) / total, counts.sum(axis=0) / total


def feasibility_check(r: int, model: SamplingModel, C: float = 1.0, dense_constant: float = 1.0) -> FeasibilityReport:
    """Compare the expected observation count with ``C * r * max(m1, m2)``.

    Also reports whether ``n > dense_constant * min(m1, m2) * log(m1 + m2)``,
    the regime where the simpler dense lambda rule applies. Advisory only.
    """
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    m1, m2 = model.shape
    n = model.expected_count()
    threshold = C * r * max(m1, m2)
    dense_threshold = dense_constant * min(m1, m2) * math.log(m1 + m2)
    return FeasibilityReport(n, threshold, n >= threshold, dense_threshold, n > dense_threshold)
