"""Regions, competitive-import IO tables and the algebra of composing them.

A region is a vector of quantitative macro variables plus a 12-sector table of
intermediate inputs ``A`` and gross outputs ``Y``.  Composition (vector sum)
and scaling (scalar product) act on every quantity at once, which is what
makes virtual regions meaningful: input coefficients ``A[i, j] / Y[j]`` of a
composite are well defined because intermediate inputs and gross outputs of
a competitive-import table are additive over regions (see
:func:`compose_detailed`).
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

N_SECTORS = 12

SECTORS = (
    "Agriculture",
    "Mining",
    "Manufacturing",
    "Construction",
    "Energy",
    "Trade",
    "Finance",
    "Transportation",
    "Communication",
    "Public business",
    "Services",
    "Other industry",
)

# Quantitative fields of a RegionRecord, in flattening order.
VECTOR_FIELDS = ("sfirm", "semp", "va", "sales", "firm")
SCALAR_FIELDS = ("income", "tp", "poplf", "unemp", "pop15")


class InconsistentTableError(ValueError):
    """A column with zero gross output receives intermediate inputs."""


class CompositionConflictError(ValueError):
    """Two regions in an inclusion relationship were composed together."""


class ReconciliationError(ValueError):
    """Cross-region flow ledgers of composed regions disagree."""


@dataclass(frozen=True)
class IndustryClassification:
    sectors: tuple[str, ...] = SECTORS

    def __post_init__(self):
        if len(self.sectors) != N_SECTORS or len(set(self.sectors)) != N_SECTORS:
            raise ValueError("industry classification needs 12 distinct sectors")

    def order(self, label: str) -> int:
        """1-based order index of ``label``."""
        return self.sectors.index(label) + 1

    def __len__(self):
        return len(self.sectors)

    def __iter__(self):
        return iter(self.sectors)


INDUSTRIES = IndustryClassification()


def _frozen(x, ndim: int | None = None) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IOTable:
    """Intermediate inputs ``A`` (row = supplying industry, column = using
    industry) and gross outputs ``Y`` of one region."""

    region_id: str
    A: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, 2)
        Y = _frozen(self.Y, 1)
        if A.shape != (N_SECTORS, N_SECTORS) or Y.shape != (N_SECTORS,):
            raise ValueError(f"IO table must be 12x12 / 12, got {A.shape} / {Y.shape}")
        if (A < 0).any() or (Y < 0).any():
            raise ValueError(f"negative entries in IO table of {self.region_id!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y", Y)

    def check_consistent(self) -> None:
        bad = (self.Y == 0) & (self.A > 0).any(axis=0)
        if bad.any():
            cols = [int(j) + 1 for j in np.flatnonzero(bad)]
            raise InconsistentTableError(
                f"{self.region_id!r}: inputs into zero-output sectors {cols}"
            )

    def __eq__(self, other):
        if not isinstance(other, IOTable):
            return NotImplemented
        return (
            self.region_id == other.region_id
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.Y, other.Y)
        )


def coefficient_matrix(table: IOTable) -> np.ndarray:
    """Input coefficients ``A[i, j] / Y[j]``; zero-output columns give zeros."""
    table.check_consistent()
    Y = table.Y
    safe = np.where(Y > 0, Y, 1.0)
    coeffs = np.where(Y > 0, table.A / safe, 0.0)
    if (coeffs > 1).any():
        warnings.warn(
            f"{table.region_id!r}: input coefficients above 1, data may be corrupt",
            stacklevel=2,
        )
    return coeffs


@dataclass(frozen=True, eq=False)
class RegionRecord:
    """Raw quantitative macro data of one region.

    ``sfirm``/``semp`` are establishment and employee counts by minor class;
    ``va``/``sales``/``firm`` are value added, sales and establishment counts
    by large class.  ``parent_id`` names a containing region (for a city, its
    prefecture).
    """

    region_id: str
    sfirm: np.ndarray
    semp: np.ndarray
    va: np.ndarray
    sales: np.ndarray
    firm: np.ndarray
    income: float
    tp: float
    poplf: float
    unemp: float
    pop15: float
    io: IOTable
    parent_id: str | None = None

    def __post_init__(self):
        for name in VECTOR_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))
        if self.sfirm.shape != self.semp.shape:
            raise ValueError("sfirm and semp must share the minor-class dimension")
        if not self.va.shape == self.sales.shape == self.firm.shape:
            raise ValueError("va, sales and firm must share the large-class dimension")
        for name in SCALAR_FIELDS:
            object.__setattr__(self, name, float(getattr(self, name)))
        negative = [n for n in VECTOR_FIELDS if (getattr(self, n) < 0).any()]
        negative += [n for n in SCALAR_FIELDS if getattr(self, n) < 0]
        if negative:
            raise ValueError(f"{self.region_id!r}: negative values in {negative}")
        if self.parent_id == "":
            object.__setattr__(self, "parent_id", None)

    @property
    def n_minor(self) -> int:
        return self.sfirm.shape[0]

    @property
    def n_large(self) -> int:
        return self.va.shape[0]

    def to_vector(self) -> np.ndarray:
        """All quantitative fields flattened (see :func:`region_layout`)."""
        parts = [getattr(self, n) for n in VECTOR_FIELDS]
        parts.append(np.array([getattr(self, n) for n in SCALAR_FIELDS]))
        parts += [self.io.A.ravel(), self.io.Y]
        return np.concatenate(parts)

    def __eq__(self, other):
        if not isinstance(other, RegionRecord):
            return NotImplemented
        return (
            self.region_id == other.region_id
            and self.parent_id == other.parent_id
            and self.io.Y.shape == other.io.Y.shape
            and self.to_vector().shape == other.to_vector().shape
            and np.array_equal(self.to_vector(), other.to_vector())
        )


@dataclass(frozen=True)
class RegionLayout:
    """Slices of the flat quantitative vector of a region."""

    n_minor: int
    n_large: int

    @property
    def slices(self) -> dict[str, slice]:
        sizes = [self.n_minor] * 2 + [self.n_large] * 3 + [1] * len(SCALAR_FIELDS)
        names = list(VECTOR_FIELDS) + list(SCALAR_FIELDS) + ["A", "Y"]
        sizes += [N_SECTORS * N_SECTORS, N_SECTORS]
        bounds = np.cumsum([0] + sizes)
        return {n: slice(int(a), int(b)) for n, a, b in zip(names, bounds[:-1], bounds[1:])}

    @property
    def size(self) -> int:
        return 2 * self.n_minor + 3 * self.n_large + len(SCALAR_FIELDS) + N_SECTORS * (N_SECTORS + 1)

    def unpack(self, vec: np.ndarray, region_id: str, parent_id: str | None = None) -> RegionRecord:
        s = self.slices
        kwargs = {n: vec[s[n]] for n in VECTOR_FIELDS}
        kwargs.update({n: vec[s[n]][0] for n in SCALAR_FIELDS})
        io = IOTable(region_id, vec[s["A"]].reshape(N_SECTORS, N_SECTORS), vec[s["Y"]])
        return RegionRecord(region_id=region_id, io=io, parent_id=parent_id, **kwargs)


def region_layout(region: RegionRecord) -> RegionLayout:
    return RegionLayout(region.n_minor, region.n_large)


def ancestors(region_id: str, parents: Mapping[str, str | None]) -> list[str]:
    """Walk the parent chain of ``region_id``; cycles raise ``ValueError``."""
    chain = []
    current = parents.get(region_id)
    while current is not None:
        if current in chain or current == region_id:
            raise ValueError(f"cyclic parent chain at {region_id!r}")
        chain.append(current)
        current = parents.get(current)
    return chain


def inclusion_conflicts(
    region_ids: Sequence[str], parents: Mapping[str, str | None]
) -> list[tuple[str, str]]:
    """Pairs in ``region_ids`` where one region contains the other."""
    ids = set(region_ids)
    pairs = []
    for rid in region_ids:
        for anc in ancestors(rid, parents):
            if anc in ids:
                pairs.append((anc, rid))
    return pairs


def scale_region(region: RegionRecord, lam: float) -> RegionRecord:
    """Multiply every quantitative field by ``lam`` (a hypothetical
    expansion or contraction of the region)."""
    if not lam >= 0:
        raise ValueError(f"scale factor must be non-negative, got {lam}")
    layout = region_layout(region)
    return layout.unpack(region.to_vector() * lam, region.region_id, region.parent_id)


_synthetic_ids = itertools.count()


def linear_interpolate(
    regions: Sequence[RegionRecord],
    weights: Sequence[float],
    region_id: str | None = None,
) -> RegionRecord:
    """Weighted sum of regions, field by field.

    Raises:
        CompositionConflictError: two of the regions are nested.
    """
    if len(regions) == 0 or len(regions) != len(weights):
        raise ValueError("need equally many regions and weights, at least one")
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise ValueError("interpolation weights must be non-negative")
    parents = {r.region_id: r.parent_id for r in regions}
    conflicts = inclusion_conflicts([r.region_id for r in regions], parents)
    if conflicts:
        raise CompositionConflictError(f"nested regions selected together: {conflicts}")
    layout = region_layout(regions[0])
    stacked = np.stack([r.to_vector() for r in regions])
    if region_id is None:
        region_id = f"virtual-{next(_synthetic_ids)}"
    return layout.unpack(w @ stacked, region_id)


# -- detailed regional flows (competitive-import accounting) -----------------


def _vec(x) -> np.ndarray:
    return _frozen(np.broadcast_to(np.asarray(x, dtype=np.float64), (N_SECTORS,)), 1)


def _mat(x) -> np.ndarray:
    return _frozen(np.broadcast_to(np.asarray(x, dtype=np.float64), (N_SECTORS, N_SECTORS)), 2)


@dataclass(frozen=True, eq=False)
class DetailedRegionalFlows:
    """Intermediate inputs of a region split by origin.

    ``m_hat`` is input produced within the region, ``m_dot[src]`` the input
    received from another domestic region ``src`` and ``m_tilde`` imports
    from abroad.  Final demand is ``f_own`` (met locally or from abroad)
    plus ``f_dot[src]`` received from domestic region ``src``.
    ``shipping[dst]`` is what each industry ships to domestic region ``dst``
    (intermediate and final use together).
    """

    region_id: str
    m_hat: np.ndarray
    m_tilde: np.ndarray
    Y: np.ndarray
    m_dot: Mapping[str, np.ndarray] = field(default_factory=dict)
    f_own: np.ndarray = field(default_factory=lambda: np.zeros(N_SECTORS))
    f_dot: Mapping[str, np.ndarray] = field(default_factory=dict)
    shipping: Mapping[str, np.ndarray] = field(default_factory=dict)
    exports: np.ndarray = field(default_factory=lambda: np.zeros(N_SECTORS))
    imports: np.ndarray = field(default_factory=lambda: np.zeros(N_SECTORS))

    def __post_init__(self):
        for name in ("m_hat", "m_tilde"):
            object.__setattr__(self, name, _mat(getattr(self, name)))
        for name in ("Y", "f_own", "exports", "imports"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "m_dot", {k: _mat(v) for k, v in self.m_dot.items()})
        object.__setattr__(self, "f_dot", {k: _vec(v) for k, v in self.f_dot.items()})
        object.__setattr__(self, "shipping", {k: _vec(v) for k, v in self.shipping.items()})
        partners = set(self.m_dot) | set(self.f_dot) | set(self.shipping)
        if self.region_id in partners:
            raise ValueError(f"{self.region_id!r} lists itself as a trading partner")

    @property
    def m_dot_total(self) -> np.ndarray:
        return sum(self.m_dot.values(), np.zeros((N_SECTORS, N_SECTORS)))

    @property
    def m(self) -> np.ndarray:
        """Intermediate inputs as published in the competitive-import table."""
        return self.m_hat + self.m_dot_total + self.m_tilde

    @property
    def F(self) -> np.ndarray:
        return self.f_own + sum(self.f_dot.values(), np.zeros(N_SECTORS))

    @property
    def L(self) -> np.ndarray:
        """Shipping to other domestic regions, by supplying industry."""
        return sum(self.shipping.values(), np.zeros(N_SECTORS))

    @property
    def N(self) -> np.ndarray:
        """Receiving from other domestic regions, by supplying industry."""
        total = np.zeros(N_SECTORS)
        for src in set(self.m_dot) | set(self.f_dot):
            total = total + self.received_from(src)
        return total

    def received_from(self, src: str) -> np.ndarray:
        rec = np.zeros(N_SECTORS)
        if src in self.m_dot:
            rec = rec + self.m_dot[src].sum(axis=1)
        if src in self.f_dot:
            rec = rec + self.f_dot[src]
        return rec

    def balance_residual(self) -> np.ndarray:
        """``Y`` minus (intermediate demand + final demand + net transfers +
        net exports); zero for a balanced table."""
        supply_use = self.m.sum(axis=1) + self.F + (self.L - self.N) + (self.exports - self.imports)
        return self.Y - supply_use

    def io_table(self) -> IOTable:
        return IOTable(self.region_id, self.m, self.Y)


def compose_detailed(
    flows: Sequence[DetailedRegionalFlows], atol: float = 1e-9
) -> tuple[DetailedRegionalFlows, IOTable]:
    """Merge regions into one and rebuild its detailed accounts.

    Flows between members become intra-region input (or local final demand)
    of the merged region and drop out of shipping and receiving; everything
    exchanged with non-members or abroad carries over as a sum.

    Raises:
        ReconciliationError: what one member reports receiving from another
            differs from what the other reports shipping to it.
    """
    if not flows:
        raise ValueError("nothing to compose")
    ids = [f.region_id for f in flows]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate region ids in composition: {ids}")
    members = set(ids)
    by_id = {f.region_id: f for f in flows}

    for dst in flows:
        for src in members - {dst.region_id}:
            received = dst.received_from(src)
            shipped = by_id[src].shipping.get(dst.region_id, np.zeros(N_SECTORS))
            if not np.allclose(received, shipped, rtol=0, atol=atol):
                raise ReconciliationError(
                    f"{dst.region_id!r} receives {received.tolist()} from {src!r}, "
                    f"which ships {shipped.tolist()}"
                )

    zero_m = np.zeros((N_SECTORS, N_SECTORS))
    zero_v = np.zeros(N_SECTORS)
    m_hat = sum((f.m_hat for f in flows), zero_m)
    m_tilde = sum((f.m_tilde for f in flows), zero_m)
    f_own = sum((f.f_own for f in flows), zero_v)
    m_dot: dict[str, np.ndarray] = {}
    f_dot: dict[str, np.ndarray] = {}
    shipping: dict[str, np.ndarray] = {}
    for f in flows:
        for src, block in f.m_dot.items():
            if src in members:
                m_hat = m_hat + block
            else:
                m_dot[src] = m_dot.get(src, zero_m) + block
        for src, vec in f.f_dot.items():
            if src in members:
                f_own = f_own + vec
            else:
                f_dot[src] = f_dot.get(src, zero_v) + vec
        for dst, vec in f.shipping.items():
            if dst not in members:
                shipping[dst] = shipping.get(dst, zero_v) + vec

    merged = DetailedRegionalFlows(
        region_id="+".join(ids),
        m_hat=m_hat,
        m_tilde=m_tilde,
        Y=sum((f.Y for f in flows), zero_v),
        m_dot=m_dot,
        f_own=f_own,
        f_dot=f_dot,
        shipping=shipping,
        exports=sum((f.exports for f in flows), zero_v),
        imports=sum((f.imports for f in flows), zero_v),
    )
    return merged, merged.io_table()


def aggregate_sectors(matrix: np.ndarray, mapping: Sequence[int], n_groups: int = N_SECTORS) -> np.ndarray:
    """Sum a fine-grained flow matrix (or vector) into sector groups.

    ``mapping[k]`` is the 0-based target sector of source sector ``k``.
    """
    mapping = np.asarray(mapping)
    agg = np.zeros((n_groups, len(mapping)))
    agg[mapping, np.arange(len(mapping))] = 1.0
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        return agg @ matrix
    return agg @ matrix @ agg.T
