"""On-disk model bundles.

A trained run directory holds::

    MANIFEST.txt            run-level manifest (format, config hash, cells)
    config.yaml             the configuration used
    features.txt/.bin       PCA model and composition-ratio totals
    cells/a_II_JJ.txt/.bin  one bundle per input coefficient
    report.csv              per-cell training summary
    histories/a_II_JJ.csv   per-epoch losses of trained cells

Each ``.txt`` is a tensor manifest: ``key: value`` lines followed by one
line per tensor, ``tensor <name> <shape> <offset>``, where shape is
comma-separated (empty for a scalar) and offset counts float64 values into
the sibling ``.bin`` file.  ``.bin`` files are the tensors' row-major values
as little-endian 64-bit floats, concatenated in manifest order.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..features import ClassTotals, PCAModel, TargetTransform
from ..iodata import N_SECTORS
from ..neuralnet import MLPParams

FORMAT = "iomix-bundle/1"
SKIP, CONSTANT, NETWORK = "skip", "constant", "network"


class BundleError(ValueError):
    pass


def write_tensors(stem: str | Path, meta: dict[str, str], tensors: dict[str, np.ndarray]) -> None:
    stem = Path(stem)
    lines = [f"{k}: {v}" for k, v in meta.items()]
    offset = 0
    chunks = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        lines.append(f"tensor {name} {','.join(map(str, arr.shape))} {offset}")
        chunks.append(arr.tobytes(order="C"))
        offset += arr.size
    stem.with_suffix(".txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    stem.with_suffix(".bin").write_bytes(b"".join(chunks))


def read_tensors(stem: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    stem = Path(stem)
    text = stem.with_suffix(".txt").read_text(encoding="utf-8")
    data = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    meta, tensors = {}, {}
    for line in text.splitlines():
        if line.startswith("tensor "):
            parts = line.split(" ")
            if len(parts) != 4:
                raise BundleError(f"{stem}: malformed tensor line {line!r}")
            _, name, shape_s, off_s = parts
            shape = tuple(int(s) for s in shape_s.split(",") if s)
            off, size = int(off_s), int(np.prod(shape, dtype=np.int64))
            if off + size > data.size:
                raise BundleError(f"{stem}: tensor {name} runs past the end of the data file")
            tensors[name] = data[off : off + size].reshape(shape).astype(np.float64)
        elif line.strip():
            key, _, value = line.partition(": ")
            meta[key] = value
    if meta.get("format") != FORMAT:
        raise BundleError(f"{stem}: unsupported format {meta.get('format')!r}")
    return meta, tensors


def cell_name(i: int, j: int) -> str:
    """File stem of coefficient ``(i, j)``; indices are 1-based."""
    return f"a_{i:02d}_{j:02d}"


def all_cells() -> list[tuple[int, int]]:
    """Row-major order over the 12 sectors (1-based)."""
    return [(i, j) for i in range(1, N_SECTORS + 1) for j in range(1, N_SECTORS + 1)]


@dataclass
class ModelBundle:
    """Everything needed to predict one input coefficient."""

    cell: tuple[int, int]
    kind: str
    config_hash: str
    transform: TargetTransform | None = None
    constant: float | None = None
    params: MLPParams | None = None
    extra: dict[str, str] | None = None

    def __post_init__(self):
        if self.kind not in (SKIP, CONSTANT, NETWORK):
            raise BundleError(f"unknown bundle kind {self.kind!r}")
        if self.kind == SKIP and self.params is not None:
            raise BundleError("skip-flagged bundles carry no network parameters")
        if self.kind == NETWORK and (self.params is None or self.transform is None):
            raise BundleError("network bundles need parameters and a target transform")

    def save(self, directory: str | Path) -> None:
        meta = {
            "format": FORMAT,
            "config_hash": self.config_hash,
            "cell": f"{self.cell[0]} {self.cell[1]}",
            "kind": self.kind,
            "skip": "true" if self.kind == SKIP else "false",
        }
        if self.transform is not None:
            meta["a_min"] = repr(self.transform.a_min)
            meta["a_max"] = repr(self.transform.a_max)
        if self.constant is not None:
            meta["constant"] = repr(self.constant)
        meta.update(self.extra or {})
        tensors = self.params.tensors() if self.params is not None else {}
        write_tensors(Path(directory) / cell_name(*self.cell), meta, tensors)

    @classmethod
    def load(cls, directory: str | Path, cell: tuple[int, int]) -> "ModelBundle":
        stem = Path(directory) / cell_name(*cell)
        if not stem.with_suffix(".txt").exists():
            raise BundleError(f"missing bundle {stem.name}")
        meta, tensors = read_tensors(stem)
        i, j = (int(x) for x in meta["cell"].split())
        if (i, j) != tuple(cell):
            raise BundleError(f"{stem.name}: manifest names cell {(i, j)}")
        transform = None
        if "a_min" in meta:
            transform = TargetTransform(float(meta["a_min"]), float(meta["a_max"]))
        params = None
        if tensors:
            params = MLPParams(
                {k: v for k, v in tensors.items() if not k.endswith(("running_mean", "running_var"))},
                {k: v for k, v in tensors.items() if k.endswith(("running_mean", "running_var"))},
            )
        constant = float(meta["constant"]) if "constant" in meta else None
        known = {"format", "config_hash", "cell", "kind", "skip", "a_min", "a_max", "constant"}
        return cls(
            cell=(i, j),
            kind=meta["kind"],
            config_hash=meta["config_hash"],
            transform=transform,
            constant=constant,
            params=params,
            extra={k: v for k, v in meta.items() if k not in known},
        )


def save_feature_model(directory: str | Path, config_hash: str, pca: PCAModel, totals: ClassTotals,
                       n_minor: int, n_large: int, ratio_basis: str) -> None:
    meta = {
        "format": FORMAT,
        "config_hash": config_hash,
        "n_minor": str(n_minor),
        "n_large": str(n_large),
        "ratio_basis": ratio_basis,
        "n_components": str(pca.n_components),
    }
    tensors = {
        "pca.mean": pca.mean,
        "pca.scale": pca.scale,
        "pca.components": pca.components,
        "pca.explained_variance": pca.explained_variance,
        "pca.explained_ratio": pca.explained_ratio,
        "totals.sfirm": totals.sfirm,
        "totals.semp": totals.semp,
    }
    write_tensors(Path(directory) / "features", meta, tensors)


def load_feature_model(directory: str | Path) -> tuple[dict[str, str], PCAModel, ClassTotals]:
    meta, t = read_tensors(Path(directory) / "features")
    pca = PCAModel(
        mean=t["pca.mean"],
        scale=t["pca.scale"],
        components=t["pca.components"],
        explained_variance=t["pca.explained_variance"],
        explained_ratio=t["pca.explained_ratio"],
    )
    return meta, pca, ClassTotals(t["totals.sfirm"], t["totals.semp"])
