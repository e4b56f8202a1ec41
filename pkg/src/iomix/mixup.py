"""Virtual regions by Dirichlet-weighted composition of real regions.

Regions are first standardized to a unit population aged 15+, so that large
prefectures do not dominate small cities.  Each virtual region then mixes
``K ~ U{k_min..k_max}`` distinct, non-nested pool regions with weights drawn
from a symmetric Dirichlet, and is finally rescaled to the population level
of the region being predicted.

Randomness comes from numpy's PCG64.  Virtual region ``n`` is drawn from the
generator of chunk ``n // CHUNK_SIZE``, seeded by ``SeedSequence([seed,
chunk])``, so a dataset does not depend on how chunks are spread over
workers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .iodata import (
    RegionLayout,
    RegionRecord,
    ancestors,
    linear_interpolate,
    region_layout,
    scale_region,
)

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1024
MAX_REDRAWS = 1000


class SamplingError(RuntimeError):
    """No valid set of regions could be drawn."""


@dataclass(frozen=True)
class FixedPop15:
    value: float


@dataclass(frozen=True)
class UniformPop15:
    lower: float
    upper: float


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 1.0
    k_min: int = 2
    k_max: int = 5
    count: int = 50000
    target_mode: FixedPop15 | UniformPop15 = FixedPop15(1.0)
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Dirichlet alpha must be positive")
        if not 2 <= self.k_min <= self.k_max:
            raise ValueError("need 2 <= k_min <= k_max")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        mode = self.target_mode
        if isinstance(mode, UniformPop15) and not 0 < mode.lower <= mode.upper:
            raise ValueError("need 0 < lower <= upper for the target population range")
        if isinstance(mode, FixedPop15) and not mode.value > 0:
            raise ValueError("target population must be positive")


@dataclass(frozen=True)
class VirtualRegion:
    record: RegionRecord
    provenance: tuple[tuple[str, float], ...]
    rescale_factor: float


def standardize_by_pop15(region: RegionRecord) -> RegionRecord:
    """Scale a region to a population aged 15+ of exactly one."""
    if not region.pop15 > 0:
        raise ValueError(f"{region.region_id!r}: pop15 must be positive, got {region.pop15}")
    return scale_region(region, 1.0 / region.pop15)


def sample_weights(k: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Dirichlet(alpha) draw via normalized Gamma(alpha, 1) variates."""
    if k < 1 or not alpha > 0:
        raise ValueError("need k >= 1 and alpha > 0")
    if k == 1:
        return np.ones(1)
    g = rng.standard_gamma(alpha, size=k)
    total = g.sum()
    if total == 0:
        # every gamma variate underflowed (tiny alpha); fall back to a vertex
        g = np.zeros(k)
        g[rng.integers(k)] = 1.0
        total = 1.0
    return g / total


def _conflict_mask(pool_ids: Sequence[str], parents: dict[str, str | None]) -> np.ndarray:
    """Boolean matrix, True where two pool regions are nested."""
    index = {rid: n for n, rid in enumerate(pool_ids)}
    conflict = np.zeros((len(pool_ids), len(pool_ids)), dtype=bool)
    for rid in pool_ids:
        for anc in ancestors(rid, parents):
            if anc in index:
                conflict[index[rid], index[anc]] = conflict[index[anc], index[rid]] = True
    return conflict


class _Sampler:
    """Draws (members, weights, target pop15) triples for one pool."""

    def __init__(self, pool_ids: Sequence[str], parents: dict[str, str | None], config: MixupConfig):
        if len(pool_ids) < config.k_max:
            raise SamplingError(f"pool of {len(pool_ids)} regions is smaller than k_max={config.k_max}")
        self.n = len(pool_ids)
        self.config = config
        self.conflict = _conflict_mask(pool_ids, parents)

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
        cfg = self.config
        k = int(rng.integers(cfg.k_min, cfg.k_max + 1))
        for _ in range(MAX_REDRAWS):
            members = rng.choice(self.n, size=k, replace=False)
            if not self.conflict[np.ix_(members, members)].any():
                break
        else:
            raise SamplingError(
                f"no conflict-free set of {k} regions found in {MAX_REDRAWS} draws"
            )
        weights = sample_weights(k, cfg.alpha, rng)
        mode = cfg.target_mode
        if isinstance(mode, FixedPop15):
            target = mode.value
        else:
            target = float(rng.uniform(mode.lower, mode.upper))
        return members, weights, target


def sample_virtual_region(
    pool: Sequence[RegionRecord], config: MixupConfig, rng: np.random.Generator
) -> VirtualRegion:
    """One virtual region from a pool of standardized regions."""
    sampler = _Sampler([r.region_id for r in pool], {r.region_id: r.parent_id for r in pool}, config)
    members, weights, target = sampler.draw(rng)
    return _assemble(pool, members, weights, target)


def _assemble(pool, members, weights, target, region_id=None) -> VirtualRegion:
    chosen = [pool[m] for m in members]
    mixed = linear_interpolate(chosen, weights, region_id=region_id)
    factor = target / mixed.pop15
    return VirtualRegion(
        record=scale_region(mixed, factor),
        provenance=tuple((r.region_id, float(w)) for r, w in zip(chosen, weights)),
        rescale_factor=float(factor),
    )


@dataclass(frozen=True)
class MixupDraws:
    """A generated dataset in array form.

    Row ``n`` of ``members``/``weights`` lists the pool indices and Dirichlet
    weights of virtual region ``n`` (padded with -1 / 0 up to ``k_max``).
    """

    members: np.ndarray
    weights: np.ndarray
    rescale: np.ndarray

    def __len__(self):
        return self.members.shape[0]

    def vectors(self, pool_matrix: np.ndarray, rows: slice = slice(None)) -> np.ndarray:
        """Flat quantitative vectors of the virtual regions in ``rows``."""
        members = self.members[rows]
        idx = np.where(members >= 0, members, 0)
        weights = self.weights[rows]
        mixed = np.zeros((len(members), pool_matrix.shape[1]))
        for k in range(members.shape[1]):
            mixed += weights[:, k, None] * pool_matrix[idx[:, k]]
        return mixed * self.rescale[rows, None]


def _draw_chunk(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sampler, pop15, seed, chunk, size = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
    k_max = sampler.config.k_max
    members = np.full((size, k_max), -1, dtype=np.int64)
    weights = np.zeros((size, k_max))
    rescale = np.zeros(size)
    for n in range(size):
        m, w, target = sampler.draw(rng)
        members[n, : len(m)] = m
        weights[n, : len(w)] = w
        rescale[n] = target / (w @ pop15[m])
    return members, weights, rescale


def draw_dataset(pool: Sequence[RegionRecord], config: MixupConfig, workers: int = 1) -> MixupDraws:
    """Draw member sets, weights and rescale factors for ``config.count`` regions."""
    sampler = _Sampler([r.region_id for r in pool], {r.region_id: r.parent_id for r in pool}, config)
    pop15 = np.array([r.pop15 for r in pool])
    if (pop15 <= 0).any():
        raise ValueError("every pool region needs a positive pop15")
    n_chunks = -(-config.count // CHUNK_SIZE)
    jobs = [
        (sampler, pop15, config.seed, c, min(CHUNK_SIZE, config.count - c * CHUNK_SIZE))
        for c in range(n_chunks)
    ]
    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_draw_chunk, jobs))
    else:
        parts = [_draw_chunk(j) for j in jobs]
    if not parts:
        k = config.k_max
        return MixupDraws(np.zeros((0, k), dtype=np.int64), np.zeros((0, k)), np.zeros(0))
    return MixupDraws(*(np.concatenate(p) for p in zip(*parts)))


def generate_dataset(
    pool: Sequence[RegionRecord], config: MixupConfig, workers: int = 1
) -> list[VirtualRegion]:
    """``config.count`` virtual regions, reproducible from ``config.seed``.

    ``pool`` must already be standardized (see :func:`standardize_by_pop15`).
    """
    if config.count == 0:
        return []
    draws = draw_dataset(pool, config, workers=workers)
    layout: RegionLayout = region_layout(pool[0])
    vectors = draws.vectors(np.stack([r.to_vector() for r in pool]))
    out = []
    for n in range(len(draws)):
        k = int((draws.members[n] >= 0).sum())
        members = draws.members[n, :k]
        out.append(
            VirtualRegion(
                record=layout.unpack(vectors[n], f"virtual-{n:06d}"),
                provenance=tuple(
                    (pool[m].region_id, float(w)) for m, w in zip(members, draws.weights[n, :k])
                ),
                rescale_factor=float(draws.rescale[n]),
            )
        )
    return out
