"""YAML files of detailed regional flows (origin-split inputs and trade).

One file describes a set of regions::

    regions:
      - id: north
        Y: [120.0, 80.5, ...]            # 12 gross outputs
        m_hat: {"1,1": 10.0, "2,1": 4.5} # intra-region inputs, sparse
        m_tilde: {"3,2": 1.25}           # imports from abroad
        f_own: [...]                     # local final demand
        exports: [...]
        imports: [...]
        m_dot:                           # inputs received, by origin
          south: {"1,2": 3.0}
        f_dot:                           # final demand received, by origin
          south: [...]
        shipping:                        # shipped, by destination
          south: [...]

Vectors are lists of 12 numbers or sparse maps ``"i": value``; matrices are
12 lists of 12 numbers or sparse maps ``"i,j": value`` where ``i`` is the
supplying and ``j`` the using industry.  Industry indices are 1-based.
Omitted entries are zero.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from ..iodata import N_SECTORS, DetailedRegionalFlows

_VECTORS = ("Y", "f_own", "exports", "imports")
_MATRICES = ("m_hat", "m_tilde")


def _index(key, where: str) -> int:
    k = int(key)
    if not 1 <= k <= N_SECTORS:
        raise ValueError(f"{where}: industry index {k} outside 1..{N_SECTORS}")
    return k - 1


def _vector(value, where: str) -> np.ndarray:
    if isinstance(value, dict):
        out = np.zeros(N_SECTORS)
        for k, v in value.items():
            out[_index(k, where)] = float(v)
        return out
    out = np.asarray(value, dtype=np.float64)
    if out.shape != (N_SECTORS,):
        raise ValueError(f"{where}: expected {N_SECTORS} values, got shape {out.shape}")
    return out


def _matrix(value, where: str) -> np.ndarray:
    if isinstance(value, dict):
        out = np.zeros((N_SECTORS, N_SECTORS))
        for key, v in value.items():
            i, j = str(key).split(",")
            out[_index(i, where), _index(j, where)] = float(v)
        return out
    out = np.asarray(value, dtype=np.float64)
    if out.shape != (N_SECTORS, N_SECTORS):
        raise ValueError(f"{where}: expected a {N_SECTORS}x{N_SECTORS} matrix, got shape {out.shape}")
    return out


def flows_from_dict(data: dict) -> list[DetailedRegionalFlows]:
    out = []
    for n, entry in enumerate(data.get("regions") or []):
        rid = str(entry.get("id", ""))
        if not rid:
            raise ValueError(f"region #{n + 1} has no id")
        unknown = set(entry) - {"id", "m_dot", "f_dot", "shipping", *_VECTORS, *_MATRICES}
        if unknown:
            raise ValueError(f"{rid}: unknown keys {sorted(unknown)}")
        if "Y" not in entry:
            raise ValueError(f"{rid}: gross output Y is required")
        kw = {name: _vector(entry[name], f"{rid}.{name}") for name in _VECTORS if name in entry}
        kw.update({name: _matrix(entry.get(name, {}), f"{rid}.{name}") for name in _MATRICES})
        kw["m_dot"] = {str(s): _matrix(v, f"{rid}.m_dot.{s}") for s, v in (entry.get("m_dot") or {}).items()}
        kw["f_dot"] = {str(s): _vector(v, f"{rid}.f_dot.{s}") for s, v in (entry.get("f_dot") or {}).items()}
        kw["shipping"] = {str(d): _vector(v, f"{rid}.shipping.{d}") for d, v in (entry.get("shipping") or {}).items()}
        out.append(DetailedRegionalFlows(region_id=rid, **kw))
    return out


def flows_to_dict(flows: list[DetailedRegionalFlows]) -> dict:
    """Dense representation; floats survive a YAML round trip exactly."""

    def vec(v):
        return [float(x) for x in v]

    def mat(m):
        return [vec(row) for row in m]

    regions = []
    for f in flows:
        regions.append({
            "id": f.region_id,
            **{name: vec(getattr(f, name)) for name in _VECTORS},
            **{name: mat(getattr(f, name)) for name in _MATRICES},
            "m_dot": {k: mat(v) for k, v in f.m_dot.items()},
            "f_dot": {k: vec(v) for k, v in f.f_dot.items()},
            "shipping": {k: vec(v) for k, v in f.shipping.items()},
        })
    return {"regions": regions}


def read_flows(path: str | Path) -> list[DetailedRegionalFlows]:
    with open(path, encoding="utf-8") as fh:
        return flows_from_dict(yaml.safe_load(fh) or {})


def write_flows(path: str | Path, flows: list[DetailedRegionalFlows]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(flows_to_dict(flows), fh, sort_keys=False, default_flow_style=None)
