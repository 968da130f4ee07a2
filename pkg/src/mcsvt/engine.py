"""Iterative impute / soft-threshold / clip completion loop.

Each iteration fills the unobserved entries of ``Y`` with the current guess,
soft-thresholds the singular values, tests the two-part exit rule and finally
clips the guess entrywise to ``[-a, a]`` before the next pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .linalg import (
    IndexSet,
    RANK_TOL,
    as_matrix,
    clip,
    nuclear_norm,
    operator_norm,
    restrict,
    soft_threshold,
    svd,
)
from .sampling import MarginalSummary, ObservationSet

logger = logging.getLogger(__name__)

__all__ = [
    "GeneralRule",
    "DenseRule",
    "CompletionConfig",
    "IterationTrace",
    "CompletionResult",
    "impute_step",
    "stop_check",
    "objective_f",
    "q_value",
    "select_lambda_general",
    "select_lambda_dense",
    "resolve_lambda",
    "run",
]

STOPPING_MODES = ("paper", "fixed_point", "none")


@dataclass(frozen=True)
class GeneralRule:
    """lambda = 3 * (3 sigma sqrt(2L) + c_star b sqrt(2 log d))."""

    sigma: float
    b: float
    c_star: float = 3.0


@dataclass(frozen=True)
class DenseRule:
    """lambda = 18 b sqrt(2L); meant for n > m log d."""

    b: float


LambdaSpec = Union[float, GeneralRule, DenseRule]


def select_lambda_general(sigma: float, b: float, L: float, d: int, c_star: float = 3.0) -> float:
    if sigma < 0 or b < 0 or L < 0 or c_star < 0:
        raise ValueError("sigma, b, L and c_star must be non-negative")
    if d < 2:
        raise ValueError(f"d = m1 + m2 must be >= 2, got {d}")
    return 3.0 * (3.0 * sigma * math.sqrt(2.0 * L) + c_star * b * math.sqrt(2.0 * math.log(d)))


def select_lambda_dense(b: float, L: float) -> float:
    if not b > 0 or not L > 0:
        raise ValueError(f"b and L must be positive, got b={b}, L={L}")
    return 18.0 * b * math.sqrt(2.0 * L)


@dataclass(frozen=True)
class CompletionConfig:
    """Parameters of one completion run.

    ``stopping`` selects the exit rule: ``"paper"`` is the two-part test on the
    unobserved operator-norm change and the sup-norm change; ``"fixed_point"``
    runs until the Frobenius change drops below ``fro_tol``; ``"none"`` runs
    exactly ``max_iters`` passes. ``post_clip`` clips the returned estimate,
    which the base algorithm does not do.
    """

    lam: LambdaSpec
    a: float
    max_iters: int = 5000
    extra_tol: float = 0.0
    post_clip: bool = False
    stopping: str = "paper"
    fro_tol: float = 1e-6

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.extra_tol < 0:
            raise ValueError("extra_tol must be non-negative")
        if self.stopping not in STOPPING_MODES:
            raise ValueError(f"stopping must be one of {STOPPING_MODES}, got {self.stopping!r}")
        if isinstance(self.lam, (int, float)) and not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @classmethod
    def from_dict(cls, d: dict) -> "CompletionConfig":
        d = dict(d)
        lam = d.pop("lambda")
        if isinstance(lam, dict):
            rule = lam.get("rule")
            if rule == "general":
                lam = GeneralRule(float(lam["sigma"]), float(lam["b"]), float(lam.get("c_star", 3.0)))
            elif rule == "dense":
                lam = DenseRule(float(lam["b"]))
            else:
                raise ValueError(f"unknown lambda rule {rule!r}")
        else:
            lam = float(lam)
        known = {"a", "max_iters", "extra_tol", "post_clip", "stopping", "fro_tol"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(lam=lam, **d)

    def to_dict(self) -> dict:
        if isinstance(self.lam, GeneralRule):
            lam = {"rule": "general", "sigma": self.lam.sigma, "b": self.lam.b, "c_star": self.lam.c_star}
        elif isinstance(self.lam, DenseRule):
            lam = {"rule": "dense", "b": self.lam.b}
        else:
            lam = float(self.lam)
        return {
            "lambda": lam,
            "a": self.a,
            "max_iters": self.max_iters,
            "extra_tol": self.extra_tol,
            "post_clip": self.post_clip,
            "stopping": self.stopping,
            "fro_tol": self.fro_tol,
        }


TRACE_COLUMNS = ("iter", "delta_opnorm_unobs", "delta_sup", "delta_fro", "f_lambda", "q_value", "rank")


@dataclass
class IterationTrace:
    """Per-iteration diagnostics.

    Row ``k`` (1-based ``iter``) describes the pass that produced the
    pre-clip iterate ``T_k`` from the clipped iterate ``C_{k-1}``:

    * ``delta_opnorm_unobs``, ``delta_sup``: the exit-rule quantities for
      ``T_k - C_{k-1}``;
    * ``delta_fro``: ``||T_k - T_{k-1}||_F`` with ``T_0 = C_0``;
    * ``f_lambda``: the prox objective minimised by ``T_k``, i.e. ``Q(C_{k-1}, T_k)``;
    * ``q_value``: ``Q(C_k, T_k)`` with ``C_k = clip(T_k, a)``.

    Both ``delta_fro`` and ``q_value`` are non-increasing along any run.
    """

    delta_opnorm_unobs: list = field(default_factory=list)
    delta_sup: list = field(default_factory=list)
    delta_fro: list = field(default_factory=list)
    f_lambda: list = field(default_factory=list)
    q_value: list = field(default_factory=list)
    rank: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.delta_fro)

    def append(self, **row) -> None:
        for k, v in row.items():
            getattr(self, k).append(v)

    def rows(self):
        for k in range(len(self)):
            yield (
                k + 1,
                self.delta_opnorm_unobs[k],
                self.delta_sup[k],
                self.delta_fro[k],
                self.f_lambda[k],
                self.q_value[k],
                self.rank[k],
            )

    def as_arrays(self) -> dict:
        return {name: np.asarray(getattr(self, name)) for name in TRACE_COLUMNS[1:]}


@dataclass
class CompletionResult:
    estimate: np.ndarray
    iterations: int
    converged: bool
    trace: IterationTrace
    lam: float
    a: float


def _check_shapes(*shapes):
    if len(set(shapes)) != 1:
        raise ValueError(f"shape mismatch: {shapes}")


def _filled(Y: ObservationSet, M_old: np.ndarray) -> np.ndarray:
    """Y on the observed set, M_old elsewhere."""
    return np.where(Y.mask.mask, Y.to_dense(), M_old)


def impute_step(Y: ObservationSet, M_old, lam: float) -> np.ndarray:
    M_old = as_matrix(M_old, "M_old")
    _check_shapes(Y.shape, M_old.shape)
    return soft_threshold(_filled(Y, M_old), lam)


def stop_check(M_new, M_old, mask: IndexSet, lam: float, a: float, extra_tol: float = 0.0) -> bool:
    """Two-part exit rule; equality on either bound means keep iterating."""
    delta = as_matrix(M_new, "M_new") - as_matrix(M_old, "M_old")
    _check_shapes(delta.shape, mask.shape)
    unobs = restrict(delta, mask.complement())
    return operator_norm(unobs) < lam / 3.0 + extra_tol and float(np.abs(delta).max()) < a


def objective_f(M, Y: ObservationSet, M_old, lam: float) -> float:
    """0.5 * ||Y + (M_old) on unobserved - M||_F^2 + lam * ||M||_*."""
    M = as_matrix(M, "M")
    M_old = as_matrix(M_old, "M_old")
    _check_shapes(M.shape, M_old.shape, Y.shape)
    R = _filled(Y, M_old) - M
    return 0.5 * float(np.sum(R * R)) + lam * nuclear_norm(M)


def q_value(A, B, Y: ObservationSet, lam: float) -> float:
    """0.5 ||(Y - B) on observed||^2 + 0.5 ||(A - B) on unobserved||^2 + lam ||B||_*."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    _check_shapes(A.shape, B.shape, Y.shape)
    obs = Y.mask.mask
    R = np.where(obs, Y.to_dense() - B, A - B)
    return 0.5 * float(np.sum(R * R)) + lam * nuclear_norm(B)


def _empirical_L(Y: ObservationSet) -> float:
    m = Y.mask.mask
    return float(max(m.sum(axis=1).max(), m.sum(axis=0).max()))


def resolve_lambda(lam: LambdaSpec, shape: tuple[int, int], summary: MarginalSummary | None = None,
                   Y: ObservationSet | None = None) -> float:
    """Turn a number or rule into a numeric lambda.

    Rules need the marginal bound ``L``; it comes from ``summary`` when given,
    otherwise from the observed row/column counts of ``Y``.
    """
    if isinstance(lam, (GeneralRule, DenseRule)):
        if summary is not None:
            L = summary.L
        elif Y is not None:
            L = _empirical_L(Y)
        else:
            raise ValueError("a lambda rule needs a MarginalSummary or observations to estimate L")
        if isinstance(lam, DenseRule):
            return select_lambda_dense(lam.b, L)
        return select_lambda_general(lam.sigma, lam.b, L, shape[0] + shape[1], lam.c_star)
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return lam


def run(Y: ObservationSet, config: CompletionConfig, summary: MarginalSummary | None = None,
        init=None) -> CompletionResult:
    """Run the clipped soft-impute loop on the observations ``Y``.

    ``init`` is an optional warm start (clipped to ``[-a, a]``); by default the
    loop starts from the zero matrix. Exhausting ``max_iters`` yields a
    result with ``converged=False`` rather than an error.
    """
    lam = resolve_lambda(config.lam, Y.shape, summary, Y)
    a = config.a
    obs = Y.mask.mask
    unobs = ~obs
    Y_dense = Y.to_dense()

    if init is None:
        M_old = np.zeros(Y.shape)
    else:
        M_old = clip(init, a)
        _check_shapes(M_old.shape, Y.shape)
    T_prev = M_old
    trace = IterationTrace()
    converged = False
    M_new = M_old

    for k in range(1, config.max_iters + 1):
        f = svd(np.where(obs, Y_dense, M_old))
        d = np.maximum(f.singular_values - lam, 0.0)
        M_new = f.reconstruct(d)
        if not np.all(np.isfinite(M_new)):
            raise FloatingPointError(f"non-finite iterate at iteration {k}")

        delta = M_new - M_old
        d_unobs = operator_norm(np.where(unobs, delta, 0.0))
        d_sup = float(np.abs(delta).max())
        step = M_new - T_prev
        d_fro = float(np.sqrt(np.sum(step * step)))
        nuc = float(d.sum())
        R = np.where(obs, Y_dense - M_new, M_old - M_new)
        f_val = 0.5 * float(np.sum(R * R)) + lam * nuc
        C_new = np.clip(M_new, -a, a)
        R = np.where(obs, Y_dense - M_new, C_new - M_new)
        q_val = 0.5 * float(np.sum(R * R)) + lam * nuc
        trace.append(delta_opnorm_unobs=d_unobs, delta_sup=d_sup, delta_fro=d_fro,
                     f_lambda=f_val, q_value=q_val, rank=int((d > RANK_TOL).sum()))

        if config.stopping == "paper":
            done = d_unobs < lam / 3.0 + config.extra_tol and d_sup < a
        elif config.stopping == "fixed_point":
            done = d_fro < config.fro_tol
        else:
            done = False
        if done:
            converged = True
            break
        M_old = C_new
        T_prev = M_new

    logger.debug("run finished: %d iterations, converged=%s, lambda=%.6g", len(trace), converged, lam)
    estimate = np.clip(M_new, -a, a) if config.post_clip else M_new
    return CompletionResult(estimate, len(trace), converged, trace, lam, a)
