"""Dense kernels and the incrementally updated orthogonal projection.

The projector onto the orthogonal complement of the selected columns is never
formed. Instead an orthonormal basis of the selected span is grown by modified
Gram-Schmidt with one reorthogonalization pass, and the projected measurement
(the residual) is updated as each column is appended.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEGENERATE_TOL = 1e-12
RANK_TOL = 1e-10
ZERO_RESIDUAL_TOL = 1e-14


class DegenerateColumn(ValueError):
    """Raised when an appended column already lies in the selected span."""


class ZeroResidual(ArithmeticError):
    """Raised when the projected measurement has (numerically) vanished."""


class RankDeficient(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ProjectionState:
    """Selected indices, orthonormal basis of their span and projected ``y``.

    ``basis`` is an ``m x t`` array whose columns are orthonormal. ``residual``
    equals ``P y`` where ``P`` projects onto the orthogonal complement of the
    basis. ``y_norm_sq`` keeps ``||y||^2`` so that a vanishing residual can be
    judged relative to the original measurement.
    """

    selected: tuple[int, ...]
    basis: np.ndarray
    residual: np.ndarray
    y_norm_sq: float = field(default=0.0)

    @classmethod
    def initial(cls, y) -> ProjectionState:
        y = np.asarray(y, dtype=float)
        return cls((), np.empty((y.shape[0], 0)), y.copy(), float(y @ y))

    @property
    def residual_norm_sq(self) -> float:
        return float(self.residual @ self.residual)

    def is_zero_residual(self) -> bool:
        return self.residual_norm_sq <= ZERO_RESIDUAL_TOL * self.y_norm_sq


def _orthogonalize(basis: np.ndarray, column: np.ndarray) -> np.ndarray:
    q = column.copy()
    if basis.shape[1] == 0:
        return q
    # two passes of classical GS are as stable as MGS plus reorthogonalization
    for _ in range(2):
        q -= basis @ (basis.T @ q)
    return q


def project_append(state: ProjectionState, column, index: int = -1) -> ProjectionState:
    """Return a new state with ``column`` added to the selected span."""
    column = np.asarray(column, dtype=float)
    if column.shape != state.residual.shape:
        raise ValueError(
            f"column has length {column.shape}, expected {state.residual.shape}"
        )
    cnorm = np.linalg.norm(column)
    q = _orthogonalize(state.basis, column)
    qnorm = np.linalg.norm(q)
    if cnorm == 0.0 or qnorm < DEGENERATE_TOL * cnorm:
        raise DegenerateColumn(f"column {index} is already in the selected span")
    q /= qnorm
    residual = state.residual - (q @ state.residual) * q
    return ProjectionState(
        state.selected + (index,),
        np.column_stack([state.basis, q]),
        residual,
        state.y_norm_sq,
    )


def selection_ratios(state: ProjectionState, columns) -> np.ndarray:
    """Vectorized ``|a_j' P y|^2 / ||P y||^2`` for every column of ``columns``.

    ``a_j' P y = a_j' r`` because ``P`` is a symmetric idempotent and ``r = P y``.
    """
    rnorm_sq = state.residual_norm_sq
    if state.is_zero_residual() or rnorm_sq <= 0.0:
        raise ZeroResidual("projected measurement is zero")
    corr = np.asarray(columns, dtype=float).T @ state.residual
    return corr * corr / rnorm_sq


def selection_ratio(state: ProjectionState, column) -> float:
    return float(selection_ratios(state, np.asarray(column, dtype=float)[:, None])[0])


def _column_rank(phi: np.ndarray, tol: float = RANK_TOL) -> int:
    if phi.shape[1] == 0:
        return 0
    r = scipy.linalg.qr(phi, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.sum(diag > tol * diag[0]))


def decompose_noise(phi, w) -> tuple[np.ndarray, np.ndarray]:
    """Split ``w`` into its component in range(phi) and the orthogonal rest.

    Returns ``(v, w_perp)`` with ``w = phi @ v + w_perp`` and
    ``phi.T @ w_perp = 0``.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    w = np.asarray(w, dtype=float)
    k = phi.shape[1]
    if _column_rank(phi) < k:
        raise RankDeficient(f"phi has rank below its {k} columns")
    q, r = np.linalg.qr(phi)
    v = scipy.linalg.solve_triangular(r, q.T @ w)
    w_perp = w - phi @ v
    # one refinement step removes the residual component left by rounding
    dv = scipy.linalg.solve_triangular(r, q.T @ w_perp)
    v += dv
    w_perp = w - phi @ v
    return v, w_perp


def singular_value_extremes(phi) -> tuple[float, float]:
    s = np.linalg.svd(np.atleast_2d(np.asarray(phi, dtype=float)), compute_uv=False)
    return float(s[-1]), float(s[0])


def lstsq_on_support(a, y, support) -> np.ndarray:
    """Least-squares fit of ``y`` on the columns in ``support``; zero elsewhere."""
    a = np.asarray(a, dtype=float)
    support = np.asarray(sorted(support), dtype=int)
    x = np.zeros(a.shape[1])
    if support.size == 0:
        return x
    phi = a[:, support]
    if support.size > a.shape[0] or _column_rank(phi) < support.size:
        raise RankDeficient("selected columns are not linearly independent")
    x[support] = np.linalg.lstsq(phi, y, rcond=None)[0]
    return x
