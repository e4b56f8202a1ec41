"""CSV formats: region records and coefficient matrices.

Region CSV columns, in order: ``region_id``, ``parent_id`` (may be empty),
``sfirm_001``..., ``semp_001``..., ``va_01``..., ``sales_01``...,
``firm_01``..., ``income``, ``tp``, ``poplf``, ``unemp``, ``pop15``,
``a_01_01``...``a_12_12`` (row-major) and ``y_01``...``y_12``.  Generated
datasets append ``provenance`` (``id:weight;id:weight``) and
``rescale_factor``.  Floats are written with ``repr`` so that a write/read
round trip is exact.

Coefficient CSV: a header ``industry,<12 sector labels>`` and one row per
supplying industry.
"""
from __future__ import annotations

import csv
import logging
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..iodata import (
    INDUSTRIES,
    N_SECTORS,
    InconsistentTableError,
    RegionLayout,
    RegionRecord,
)
from ..mixup import VirtualRegion

logger = logging.getLogger(__name__)


class IngestError(ValueError):
    def __init__(self, message: str, rows: Sequence[tuple[int, str]] = ()):
        detail = "".join(f"\n  row {n}: {msg}" for n, msg in rows)
        super().__init__(message + detail)
        self.rows = list(rows)


def region_columns(n_minor: int, n_large: int) -> list[str]:
    cols = ["region_id", "parent_id"]
    cols += [f"sfirm_{k:03d}" for k in range(1, n_minor + 1)]
    cols += [f"semp_{k:03d}" for k in range(1, n_minor + 1)]
    for base in ("va", "sales", "firm"):
        cols += [f"{base}_{k:02d}" for k in range(1, n_large + 1)]
    cols += ["income", "tp", "poplf", "unemp", "pop15"]
    cols += [f"a_{i:02d}_{j:02d}" for i in range(1, N_SECTORS + 1) for j in range(1, N_SECTORS + 1)]
    cols += [f"y_{j:02d}" for j in range(1, N_SECTORS + 1)]
    return cols


PROVENANCE_COLUMNS = ["provenance", "rescale_factor"]


def _layout_from_header(header: list[str]) -> RegionLayout:
    n_minor = sum(1 for h in header if re.fullmatch(r"sfirm_\d{3}", h))
    n_large = sum(1 for h in header if re.fullmatch(r"va_\d{2}", h))
    expected = region_columns(n_minor, n_large)
    core = header[: len(expected)]
    extra = header[len(expected) :]
    if core != expected or extra not in ([], PROVENANCE_COLUMNS):
        missing = [c for c in expected if c not in header]
        raise IngestError(
            "header does not match the region CSV schema"
            + (f"; missing {missing[:5]}{'...' if len(missing) > 5 else ''}" if missing else "; columns out of order")
        )
    return RegionLayout(n_minor, n_large)


def write_regions(path: str | Path, regions: Iterable[RegionRecord | VirtualRegion]) -> None:
    regions = list(regions)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not regions:
            w.writerow(region_columns(0, 0))
            return
        virtual = isinstance(regions[0], VirtualRegion)
        first = regions[0].record if virtual else regions[0]
        w.writerow(region_columns(first.n_minor, first.n_large) + (PROVENANCE_COLUMNS if virtual else []))
        for item in regions:
            rec = item.record if virtual else item
            row = [rec.region_id, rec.parent_id or ""] + [repr(float(x)) for x in rec.to_vector()]
            if virtual:
                row.append(";".join(f"{rid}:{wt!r}" for rid, wt in item.provenance))
                row.append(repr(item.rescale_factor))
            w.writerow(row)


def ingest(path: str | Path, strict: bool = True) -> list[RegionRecord]:
    """Read and validate a region CSV.

    Rows with non-numeric cells, negative quantities or inputs into a
    zero-output sector are rejected.  With ``strict`` any rejection raises
    :class:`IngestError` listing every bad row (numbered from 1 after the
    header); otherwise bad rows are skipped with a logged warning.
    Schema mismatches and duplicate ids always raise.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: missing header row") from None
        layout = _layout_from_header(header)
        n_values = layout.size
        records, rejected, seen = [], [], {}
        for n, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                rejected.append((n, f"expected {len(header)} cells, got {len(row)}"))
                continue
            rid, parent = row[0], row[1] or None
            if rid in seen:
                raise IngestError(f"{path}: duplicate region id {rid!r} in rows {seen[rid]} and {n}")
            seen[rid] = n
            try:
                values = np.array([float(x) for x in row[2 : 2 + n_values]])
            except ValueError as exc:
                rejected.append((n, f"non-numeric cell ({exc})"))
                continue
            if not np.isfinite(values).all():
                rejected.append((n, "non-finite value"))
                continue
            try:
                rec = layout.unpack(values, rid, parent)
                rec.io.check_consistent()
            except (ValueError, InconsistentTableError) as exc:
                rejected.append((n, str(exc)))
                continue
            records.append(rec)
    if rejected:
        if strict:
            raise IngestError(f"{path}: {len(rejected)} invalid row(s)", rejected)
        for n, msg in rejected:
            logger.warning("%s: skipping row %d: %s", path, n, msg)
    return records


def write_coefficients(path: str | Path, matrix: np.ndarray, labels: Sequence[str] = INDUSTRIES.sectors) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["industry", *labels])
        for label, row in zip(labels, matrix):
            w.writerow([label, *(repr(float(x)) for x in row)])


def read_coefficients(path: str | Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != N_SECTORS + 1:
        raise IngestError(f"{path}: expected a header with 13 columns")
    body = [r for r in rows[1:] if r]
    if len(body) != N_SECTORS or any(len(r) != N_SECTORS + 1 for r in body):
        raise IngestError(f"{path}: expected 12 rows of 13 cells")
    try:
        return np.array([[float(x) for x in r[1:]] for r in body])
    except ValueError as exc:
        raise IngestError(f"{path}: non-numeric coefficient ({exc})") from None


def read_columns(path: str | Path, columns: Sequence[str]) -> dict[str, np.ndarray]:
    """Named numeric columns of a small per-industry CSV (12 data rows)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if len(rows) != N_SECTORS:
        raise IngestError(f"{path}: expected 12 rows, got {len(rows)}")
    try:
        return {c: np.array([float(r[c]) for r in rows]) for c in columns}
    except ValueError as exc:
        raise IngestError(f"{path}: non-numeric value ({exc})") from None
