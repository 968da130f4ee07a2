"""Dense linear-algebra primitives: SVD, matrix norms, restriction, shrinkage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

# shared numerical tolerances
ORTHO_TOL = 1e-10
RECON_TOL = 1e-8
RANK_TOL = 1e-10


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Coerce ``A`` to a finite 2-D float array with positive dimensions."""
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must have positive dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdFactors:
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self, values: np.ndarray | None = None) -> np.ndarray:
        d = self.singular_values if values is None else values
        return (self.left_vectors * d) @ self.right_vectors.T


class IndexSet:
    """A set of (row, col) positions in an ``rows x cols`` grid.

    Stored as a boolean mask; positions are 0-indexed internally.
    """

    __slots__ = ("_mask",)

    def __init__(self, mask):
        m = np.array(mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
        m.setflags(write=False)
        self._mask = m

    @classmethod
    def from_pairs(cls, rows: int, cols: int, pairs: Iterable[tuple[int, int]]) -> "IndexSet":
        m = np.zeros((rows, cols), dtype=bool)
        for i, j in pairs:
            if not (0 <= i < rows and 0 <= j < cols):
                raise ValueError(f"index ({i}, {j}) out of range for {rows}x{cols}")
            if m[i, j]:
                raise ValueError(f"duplicate index ({i}, {j})")
            m[i, j] = True
        return cls(m)

    @classmethod
    def full(cls, rows: int, cols: int) -> "IndexSet":
        return cls(np.ones((rows, cols), dtype=bool))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "IndexSet":
        return cls(np.zeros((rows, cols), dtype=bool))

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def shape(self) -> tuple[int, int]:
        return self._mask.shape

    def complement(self) -> "IndexSet":
        return IndexSet(~self._mask)

    def pairs(self) -> Iterator[tuple[int, int]]:
        for i, j in zip(*np.nonzero(self._mask)):
            yield int(i), int(j)

    def __len__(self) -> int:
        return int(self._mask.sum())

    def __contains__(self, ij) -> bool:
        i, j = ij
        return bool(self._mask[i, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexSet):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._mask, other._mask))

    def __hash__(self):
        return hash((self.shape, self._mask.tobytes()))

    def __repr__(self) -> str:
        return f"IndexSet(shape={self.shape}, size={len(self)})"


def svd(A) -> SvdFactors:
    """Thin SVD with singular values in non-increasing order."""
    A = as_matrix(A)
    try:
        U, d, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD did not converge on {A.shape} input") from exc
    return SvdFactors(U, d, Vt.T)


def singular_values(A) -> np.ndarray:
    # same LAPACK path as svd(), so thresholds compare exactly against soft_threshold
    return svd(A).singular_values


def soft_threshold(W, lam: float) -> np.ndarray:
    """Shrink every singular value of ``W`` by ``lam``, flooring at zero.

    This is the proximal map of ``lam * ||.||_*``: it returns the minimiser of
    ``0.5 * ||W - M||_F^2 + lam * ||M||_*``.
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    f = svd(W)
    return f.reconstruct(np.maximum(f.singular_values - lam, 0.0))


def operator_norm(A) -> float:
    return float(singular_values(A)[0])


def nuclear_norm(A) -> float:
    return float(singular_values(A).sum())


def frobenius_norm(A) -> float:
    return float(np.linalg.norm(as_matrix(A)))


def sup_norm(A) -> float:
    return float(np.abs(as_matrix(A)).max())


def restrict(A, index: IndexSet) -> np.ndarray:
    A = as_matrix(A)
    if A.shape != index.shape:
        raise ValueError(f"shape mismatch: matrix {A.shape} vs index set {index.shape}")
    return np.where(index.mask, A, 0.0)


def clip(A, a: float) -> np.ndarray:
    """Entrywise projection onto ``[-a, a]``."""
    if not a > 0:
        raise ValueError(f"clip bound must be positive, got {a}")
    return np.clip(as_matrix(A), -a, a)


def numerical_rank(A, tol: float = RANK_TOL) -> int:
    return int((singular_values(A) > tol).sum())
