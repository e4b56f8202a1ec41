"""Explanatory variables, their principal-component scores, and the
rescaling applied to input coefficients before training."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .iodata import RegionLayout, RegionRecord, region_layout

logger = logging.getLogger(__name__)

RatioBasis = Literal["pool", "region"]


@dataclass(frozen=True)
class ClassTotals:
    """Denominators of the establishment and employee composition ratios."""

    sfirm: np.ndarray
    semp: np.ndarray

    @classmethod
    def from_pool(cls, pool: Sequence[RegionRecord]) -> "ClassTotals":
        return cls(
            sfirm=np.sum([r.sfirm for r in pool], axis=0),
            semp=np.sum([r.semp for r in pool], axis=0),
        )


def feature_names(n_minor: int, n_large: int) -> list[str]:
    names = [f"sfirm_{k:03d}" for k in range(1, n_minor + 1)]
    names += [f"sfirm_ratio_{k:03d}" for k in range(1, n_minor + 1)]
    names += [f"semp_{k:03d}" for k in range(1, n_minor + 1)]
    names += [f"semp_ratio_{k:03d}" for k in range(1, n_minor + 1)]
    for base in ("va", "va_per_firm", "sales", "sales_per_firm"):
        names += [f"{base}_{k:02d}" for k in range(1, n_large + 1)]
    names += ["income", "income_per_taxpayer", "poplf", "labor_force_ratio", "unemployment_rate"]
    return names


def _ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    num, den = np.broadcast_arrays(np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64))
    undefined = den == 0
    if (undefined & (num != 0)).any():
        raise ValueError(f"{what}: nonzero numerator over zero denominator")
    if undefined.any():
        logger.warning("%s: %d zero-over-zero ratios set to 0", what, int(undefined.sum()))
    return np.divide(num, den, out=np.zeros_like(num), where=~undefined)


def feature_matrix(
    vectors: np.ndarray,
    layout: RegionLayout,
    totals: ClassTotals | None = None,
    ratio_basis: RatioBasis = "pool",
) -> np.ndarray:
    """Explanatory variables for many regions given as flat vectors (rows).

    Composition ratios divide each class count by ``totals`` when
    ``ratio_basis="pool"``, or by the region's own total over classes when
    ``ratio_basis="region"``.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    s = layout.slices
    if (v[:, : s["A"].start] < 0).any():
        raise ValueError("explanatory source variables must be non-negative")
    sfirm, semp = v[:, s["sfirm"]], v[:, s["semp"]]
    va, sales, firm = v[:, s["va"]], v[:, s["sales"]], v[:, s["firm"]]
    income, tp, poplf, unemp, pop15 = (v[:, s[n]][:, 0] for n in ("income", "tp", "poplf", "unemp", "pop15"))

    if ratio_basis == "pool":
        if totals is None:
            raise ValueError("pool-basis composition ratios need class totals")
        firm_den, emp_den = totals.sfirm[None, :], totals.semp[None, :]
    elif ratio_basis == "region":
        firm_den, emp_den = sfirm.sum(axis=1, keepdims=True), semp.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown ratio basis {ratio_basis!r}")

    cols = [
        sfirm,
        _ratio(sfirm, firm_den, "establishment composition"),
        semp,
        _ratio(semp, emp_den, "employee composition"),
        va,
        _ratio(va, firm, "value added per firm"),
        sales,
        _ratio(sales, firm, "sales per firm"),
        income[:, None],
        _ratio(income, tp, "income per taxpayer")[:, None],
        poplf[:, None],
        _ratio(poplf, pop15, "labor force ratio")[:, None],
        _ratio(unemp, poplf, "unemployment rate")[:, None],
    ]
    return np.hstack(cols)


def compute_features(
    region: RegionRecord, totals: ClassTotals | None = None, ratio_basis: RatioBasis = "pool"
) -> np.ndarray:
    """Explanatory variables of one region, in :func:`feature_names` order."""
    return feature_matrix(region.to_vector(), region_layout(region), totals, ratio_basis)[0]


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray  # (n_components, n_features), rows orthonormal
    explained_variance: np.ndarray
    explained_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def fit_pca(X: np.ndarray, n_components: int = 50) -> PCAModel:
    """Principal components of the standardized feature matrix.

    Each feature is centered and divided by its standard deviation (features
    with zero spread keep scale 1).  Component signs are fixed so that the
    largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < n_components + 1:
        raise ValueError(f"need at least {n_components + 1} rows, got {n}")
    if n_components > d:
        raise ValueError(f"cannot keep {n_components} components of {d} features")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix has non-finite entries")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    _, sv, vt = np.linalg.svd(Z, full_matrices=False)
    total = np.sum(sv**2)
    if total == 0:
        raise ValueError("zero total variance")
    vt = vt[:n_components]
    pivot = np.argmax(np.abs(vt), axis=1)
    vt = vt * np.sign(vt[np.arange(len(vt)), pivot])[:, None]
    return PCAModel(
        mean=mean,
        scale=scale,
        components=vt,
        explained_variance=sv[:n_components] ** 2 / (n - 1),
        explained_ratio=sv[:n_components] ** 2 / total,
    )


def project(model: PCAModel, f: np.ndarray) -> np.ndarray:
    """Principal-component scores of one feature vector or a matrix of rows."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"expected {model.mean.shape[0]} features, got {f.shape[-1]}")
    return ((f - model.mean) / model.scale) @ model.components.T


@dataclass(frozen=True)
class TargetTransform:
    """Maps a coefficient from ``[a_L, a_U]`` onto ``[0, 1]``.

    ``a_U`` extends the training maximum by half the training range (capped
    at 1), leaving headroom for regions beyond the training data.
    """

    a_min: float
    a_max: float

    @property
    def a_L(self) -> float:
        return max(0.0, self.a_min)

    @property
    def a_U(self) -> float:
        return min(1.0, self.a_max + 0.5 * (self.a_max - self.a_min))

    @property
    def degenerate(self) -> bool:
        return not self.a_U > self.a_L

    @classmethod
    def fit(cls, coefficients: np.ndarray) -> "TargetTransform":
        coefficients = np.asarray(coefficients, dtype=np.float64)
        return cls(float(coefficients.min()), float(coefficients.max()))


class DegenerateTransformError(ValueError):
    """The coefficient is constant over the training data."""


def transform_target(a, t: TargetTransform):
    if t.degenerate:
        raise DegenerateTransformError(f"a_L = {t.a_L} >= a_U = {t.a_U}; predict the constant instead")
    return (np.asarray(a, dtype=np.float64) - t.a_L) / (t.a_U - t.a_L)


def inverse_transform(a_hat, t: TargetTransform):
    return np.asarray(a_hat, dtype=np.float64) * (t.a_U - t.a_L) + t.a_L
