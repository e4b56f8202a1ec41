"""Reference estimators: Flegg's location quotient (FLQ) and RAS."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np


class UndefinedQuotientError(ZeroDivisionError):
    pass


class InconsistentMarginsError(ValueError):
    pass


class RASNonConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class FLQInputs:
    """Gross outputs of the region (``x_r``) and the nation (``x_n``).

    ``exponent_mode="printed"`` squares ``log2(1 + x_r/x_n)``;
    ``"delta"`` raises it to ``delta`` instead (Flegg's usual convention).
    """

    x_r: np.ndarray
    x_n: np.ndarray
    x_r_total: float | None = None
    x_n_total: float | None = None
    delta: float = 0.1
    exponent_mode: Literal["printed", "delta"] = "printed"

    def __post_init__(self):
        x_r = np.asarray(self.x_r, dtype=np.float64)
        x_n = np.asarray(self.x_n, dtype=np.float64)
        object.__setattr__(self, "x_r", x_r)
        object.__setattr__(self, "x_n", x_n)
        if self.x_r_total is None:
            object.__setattr__(self, "x_r_total", float(x_r.sum()))
        if self.x_n_total is None:
            object.__setattr__(self, "x_n_total", float(x_n.sum()))
        if (x_r < 0).any() or (x_n < 0).any():
            raise ValueError("gross outputs must be non-negative")
        if not self.x_n_total > 0:
            raise ValueError("national total output must be positive")
        if self.x_r_total > self.x_n_total:
            raise ValueError("regional total output exceeds the national total")
        if self.exponent_mode not in ("printed", "delta"):
            raise ValueError(f"unknown exponent mode {self.exponent_mode!r}")

    @property
    def size_factor(self) -> float:
        base = np.log2(1.0 + self.x_r_total / self.x_n_total)
        power = 2.0 if self.exponent_mode == "printed" else self.delta
        return float(base**power)

    def shares(self) -> np.ndarray:
        if (self.x_n == 0).any():
            raise UndefinedQuotientError("national output is zero for some industry")
        return self.x_r / self.x_n


def flq_coefficient(i: int, j: int, inputs: FLQInputs) -> float:
    """FLQ for supplying industry ``i`` and purchasing industry ``j`` (0-based)."""
    ni, nj = inputs.x_n[i], inputs.x_n[j]
    if ni == 0 or nj == 0:
        raise UndefinedQuotientError(f"national output of industry {i if ni == 0 else j} is zero")
    si = inputs.x_r[i] / ni
    if i == j:
        den = inputs.x_r_total / inputs.x_n_total
    else:
        den = inputs.x_r[j] / nj
    if den == 0:
        raise UndefinedQuotientError(f"zero regional share in the FLQ denominator (j={j})")
    return inputs.size_factor * si / den


def flq_matrix(inputs: FLQInputs) -> np.ndarray:
    s = inputs.shares()
    den_mat = np.tile(s, (len(s), 1))
    np.fill_diagonal(den_mat, inputs.x_r_total / inputs.x_n_total)
    if (den_mat == 0).any():
        cols = sorted({int(j) for j in np.argwhere(den_mat == 0)[:, 1]})
        raise UndefinedQuotientError(f"zero regional share in the FLQ denominator for industries {cols}")
    return inputs.size_factor * s[:, None] / den_mat


def flq_regionalize(national_coeffs: np.ndarray, inputs: FLQInputs) -> np.ndarray:
    """National coefficients scaled down by FLQ where FLQ < 1."""
    flq = flq_matrix(inputs)
    a = np.asarray(national_coeffs, dtype=np.float64)
    return np.where(flq < 1, a * flq, a)


def flq_nationalize(regional_coeffs: np.ndarray, inputs: FLQInputs) -> np.ndarray:
    """Invert :func:`flq_regionalize`: recover national coefficients from a
    region's."""
    flq = flq_matrix(inputs)
    a = np.asarray(regional_coeffs, dtype=np.float64)
    if ((flq == 0) & (a > 0)).any():
        raise UndefinedQuotientError("FLQ is zero where the regional coefficient is positive")
    safe = np.where(flq == 0, 1.0, flq)
    return np.where(flq < 1, np.where(flq == 0, 0.0, a / safe), a)


@dataclass(frozen=True)
class RASProblem:
    initial: np.ndarray  # non-negative flows
    row_targets: np.ndarray  # total intermediate demand by supplying industry
    col_targets: np.ndarray  # total intermediate input by purchasing industry
    gross_outputs: np.ndarray
    tolerance: float = 1e-9
    max_iterations: int = 10000

    @classmethod
    def from_coefficients(cls, coeffs, row_targets, col_targets, gross_outputs, **kw) -> "RASProblem":
        y = np.asarray(gross_outputs, dtype=np.float64)
        return cls(np.asarray(coeffs, dtype=np.float64) * y[None, :], row_targets, col_targets, y, **kw)


@dataclass(frozen=True)
class RASResult:
    coefficients: np.ndarray
    flows: np.ndarray
    iterations: int
    residual: float


def _margin_residual(X, u, v) -> float:
    return float(max(np.abs(X.sum(axis=1) - u).max(), np.abs(X.sum(axis=0) - v).max()))


def ras_fit(problem: RASProblem) -> RASResult:
    """Biproportional fit of the initial flows to the row/column targets.

    One iteration scales rows onto ``row_targets`` then columns onto
    ``col_targets``.  Converged flows are divided columnwise by gross output.

    Raises:
        InconsistentMarginsError: row and column targets have different totals.
        RASNonConvergenceError: residual still above tolerance, typically
            because zero cells block a target.
    """
    X = np.array(problem.initial, dtype=np.float64)
    u = np.asarray(problem.row_targets, dtype=np.float64)
    v = np.asarray(problem.col_targets, dtype=np.float64)
    y = np.asarray(problem.gross_outputs, dtype=np.float64)
    if (X < 0).any() or (u < 0).any() or (v < 0).any():
        raise ValueError("RAS needs non-negative flows and targets")
    su, sv = u.sum(), v.sum()
    if abs(su - sv) > 1e-6 * max(abs(su), abs(sv), np.finfo(float).tiny):
        raise InconsistentMarginsError(f"row targets sum to {su}, column targets to {sv}")
    blocked_rows = (X.sum(axis=1) == 0) & (u > 0)
    blocked_cols = (X.sum(axis=0) == 0) & (v > 0)
    if blocked_rows.any() or blocked_cols.any():
        raise RASNonConvergenceError(
            f"all-zero rows {np.flatnonzero(blocked_rows).tolist()} / columns "
            f"{np.flatnonzero(blocked_cols).tolist()} have positive targets",
            residual=_margin_residual(X, u, v),
            iterations=0,
        )

    residual = np.inf
    for it in range(1, problem.max_iterations + 1):
        rows = X.sum(axis=1)
        X *= np.divide(u, rows, out=np.ones_like(u), where=rows > 0)[:, None]
        cols = X.sum(axis=0)
        X *= np.divide(v, cols, out=np.ones_like(v), where=cols > 0)[None, :]
        residual = _margin_residual(X, u, v)
        if residual < problem.tolerance:
            coeffs = np.divide(X, y[None, :], out=np.zeros_like(X), where=y[None, :] > 0)
            return RASResult(coeffs, X, it, residual)
    raise RASNonConvergenceError(
        f"RAS residual {residual:.3e} after {problem.max_iterations} iterations",
        residual=residual,
        iterations=problem.max_iterations,
    )
