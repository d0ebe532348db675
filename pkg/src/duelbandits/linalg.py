"""Rank-one inverse maintenance, weighted norms, and a matrix-free CG solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from .exceptions import NumericFailure

__all__ = [
    "sherman_morrison",
    "mahalanobis_inv",
    "cg_solve",
    "LocalNormMatrix",
]


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def sherman_morrison(inv: np.ndarray, z: np.ndarray, w: float) -> np.ndarray:
    """Return (A + w*z*z^T)^-1 given inv = A^-1, in O(d^2) arithmetic.

    The output is explicitly symmetrized so long update chains keep the
    positive-definiteness detectable.
    """
    if w < 0:
        raise ValueError(f"rank-one weight must be nonnegative, got {w}")
    if w == 0.0:
        return inv.copy()
    u = inv @ z
    denom = 1.0 + w * float(z @ u)
    if not np.isfinite(denom) or denom <= 0:
        raise NumericFailure(
            f"Sherman-Morrison denominator {denom} is not positive; inverse state corrupted"
        )
    out = inv - (w / denom) * np.outer(u, u)
    return _symmetrize(out)


def mahalanobis_inv(v: np.ndarray, inv: np.ndarray) -> float:
    """Weighted norm sqrt(v^T inv v) for a symmetric PSD matrix inv.

    Quadratic forms in [-1e-12, 0) are rounding noise and clamp to zero;
    anything more negative means the matrix is not PSD.
    """
    q = float(v @ inv @ v)
    if q < -1e-12:
        raise NumericFailure(f"quadratic form {q} is negative; matrix not PSD")
    return float(np.sqrt(max(q, 0.0)))


def cg_solve(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    max_iters: int,
    tol: float,
) -> Tuple[np.ndarray, float]:
    """Conjugate gradient for A v = b with A given only through ``apply``.

    Starts from v = 0 and stops after ``max_iters`` rounds or as soon as the
    residual norm drops to ``tol``. Returns (v, final residual norm). A must be
    symmetric positive definite; a nonpositive curvature p^T A p or a non-finite
    intermediate raises NumericFailure.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    b = np.asarray(b, dtype=float)
    v = np.zeros_like(b)
    r = b.copy()
    rs = float(r @ r)
    if np.sqrt(rs) <= tol:
        return v, float(np.sqrt(rs))
    p = r.copy()
    for _ in range(max_iters):
        ap = apply(p)
        curv = float(p @ ap)
        if not np.isfinite(curv) or curv <= 0:
            raise NumericFailure(f"CG curvature {curv} is not positive; operator not PD")
        alpha = rs / curv
        v = v + alpha * p
        r = r - alpha * ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise NumericFailure("CG residual became non-finite")
        if np.sqrt(rs_new) <= tol:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return v, float(np.sqrt(rs))


@dataclass
class LocalNormMatrix:
    """A symmetric PD matrix and its inverse, kept in lockstep under rank-one updates.

    Both sides are retained: quadratic forms in the matrix itself feed the
    coverage and domination diagnostics, while the inverse drives the update
    step and the uncertainty norms.
    """

    mat: np.ndarray
    inv: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self) -> None:
        self.mat = np.asarray(self.mat, dtype=float)
        self.inv = np.asarray(self.inv, dtype=float)
        if self.dim == 0:
            self.dim = self.mat.shape[0]
        if self.mat.shape != (self.dim, self.dim) or self.inv.shape != (self.dim, self.dim):
            raise ValueError("matrix and inverse must both be dim x dim")

    @classmethod
    def scaled_identity(cls, dim: int, scale: float) -> "LocalNormMatrix":
        if dim < 1 or scale <= 0:
            raise ValueError(f"need dim >= 1 and scale > 0, got dim={dim}, scale={scale}")
        return cls(mat=scale * np.eye(dim), inv=(1.0 / scale) * np.eye(dim), dim=dim)

    def copy(self) -> "LocalNormMatrix":
        return LocalNormMatrix(mat=self.mat.copy(), inv=self.inv.copy(), dim=self.dim)

    def rank_one_update(self, z: np.ndarray, w: float) -> None:
        """Add w * z z^T to the matrix and apply the paired inverse update."""
        new_inv = sherman_morrison(self.inv, z, w)
        if w != 0.0:
            self.mat = _symmetrize(self.mat + w * np.outer(z, z))
        self.inv = new_inv

    def norm(self, v: np.ndarray) -> float:
        """sqrt(v^T M v)."""
        return mahalanobis_inv(v, self.mat)

    def inv_norm(self, v: np.ndarray) -> float:
        """sqrt(v^T M^-1 v)."""
        return mahalanobis_inv(v, self.inv)

    def inverse_drift(self) -> float:
        """Relative Frobenius distance between the maintained inverse and a fresh one."""
        fresh = np.linalg.inv(self.mat)
        return float(np.linalg.norm(self.inv - fresh) / np.linalg.norm(fresh))
