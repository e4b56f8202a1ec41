"""Error metrics between estimated and published coefficient matrices."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

METRICS = ("stpe", "mad", "u2", "rmse", "mape")
LABELS = {"stpe": "STPE", "mad": "MAD", "u2": "U2", "rmse": "RMSE", "mape": "MAPE"}


@dataclass(frozen=True)
class EvaluationReport:
    stpe: float
    mad: float
    u2: float
    rmse: float
    mape: float
    n_a: int
    mape_excluded: int

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(estimated, actual, mask=None) -> EvaluationReport:
    """STPE, MAD, U2, RMSE and MAPE over the cells selected by ``mask``.

    MAPE skips cells whose actual value is zero; their number is reported
    in ``mape_excluded``.
    """
    est = np.asarray(estimated, dtype=np.float64)
    act = np.asarray(actual, dtype=np.float64)
    if est.shape != act.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {act.shape}")
    sel = np.ones(act.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    e, a = est[sel], act[sel]
    n_a = a.size
    if n_a == 0 or not (a != 0).any():
        raise ZeroDivisionError("actual coefficients are all zero on the evaluated cells")
    diff = e - a
    abs_sum = np.abs(diff).sum()
    sq_sum = np.sum(diff**2)
    nonzero = a != 0
    mape = float(np.mean(np.abs(diff[nonzero] / a[nonzero])))
    return EvaluationReport(
        stpe=float(abs_sum / a.sum()),
        mad=float(abs_sum / n_a),
        u2=float(np.sqrt(sq_sum) / np.sqrt(np.sum(a**2))),
        rmse=float(np.sqrt(sq_sum / n_a)),
        mape=mape,
        n_a=int(n_a),
        mape_excluded=int(n_a - nonzero.sum()),
    )


def format_table(columns: dict[str, EvaluationReport], digits: int = 4) -> str:
    """Metrics as rows, estimators as columns, aligned for a terminal."""
    names = list(columns)
    head = ["", *names]
    rows = [[LABELS[m], *(f"{getattr(columns[n], m):.{digits}f}" for n in names)] for m in METRICS]
    widths = [max(len(r[c]) for r in [head, *rows]) for c in range(len(head))]
    lines = ["  ".join(cell.rjust(w) if c else cell.ljust(w) for c, (cell, w) in enumerate(zip(r, widths))) for r in [head, *rows]]
    return "\n".join(lines)


def summarize(reports: list[EvaluationReport]) -> dict[str, dict[str, float]]:
    """Minimum, mean and maximum of each metric over several reports."""
    if not reports:
        raise ValueError("no reports to summarize")
    out = {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports])
        out[m] = {"min": float(vals.min()), "mean": float(vals.mean()), "max": float(vals.max())}
    return out
