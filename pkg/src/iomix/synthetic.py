"""A synthetic economy for end-to-end checks.

Every region is a blend of a few archetypal local economies.  An archetype
fixes, per person aged 15+, the establishment/employee counts, value added,
sales, income, labour force, gross outputs and input coefficients.  A
region with blend weights ``w`` and size ``P`` holds ``P * sum_m w_m x_m``
of every quantity, and its coefficients are the output-weighted average of
the archetypes' plus Gaussian noise.  Coefficients are therefore smooth
functions of the explanatory variables, and composing regions stays inside
the same world.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .iodata import N_SECTORS, IOTable, RegionLayout, RegionRecord, coefficient_matrix


@dataclass(frozen=True)
class Archetype:
    sfirm: np.ndarray
    semp: np.ndarray
    va: np.ndarray
    sales: np.ndarray
    firm: np.ndarray
    income: float
    tp: float
    poplf: float
    unemp: float
    output: np.ndarray  # gross output per person aged 15+
    coefficients: np.ndarray


@dataclass
class SyntheticWorld:
    archetypes: list[Archetype]
    pool: list[RegionRecord]
    nation: RegionRecord
    zero_cells: np.ndarray  # boolean 12x12, zero in every region
    noise: float
    seed: int

    def blend(self, weights: np.ndarray, pop15: float, region_id: str,
              rng: np.random.Generator | None = None, parent_id: str | None = None) -> RegionRecord:
        """A region of ``pop15`` people blending the archetypes by ``weights``.

        With ``rng`` the coefficients get noise of standard deviation
        ``self.noise`` on every non-structural cell.
        """
        w = np.asarray(weights, dtype=np.float64)
        arch = self.archetypes

        def mix(attr):
            return pop15 * sum(wm * np.asarray(getattr(a, attr)) for wm, a in zip(w, arch))

        Y = mix("output")
        out_w = np.array([wm * a.output for wm, a in zip(w, arch)])  # (M, 12)
        coefs = np.einsum("mj,mij->ij", out_w, np.array([a.coefficients for a in arch])) / out_w.sum(axis=0)
        if rng is not None:
            coefs = coefs + rng.normal(0.0, self.noise, size=coefs.shape)
            coefs = np.clip(coefs, 1e-4, None)
        coefs[self.zero_cells] = 0.0
        return RegionRecord(
            region_id=region_id,
            parent_id=parent_id,
            sfirm=mix("sfirm"),
            semp=mix("semp"),
            va=mix("va"),
            sales=mix("sales"),
            firm=mix("firm"),
            income=float(mix("income")),
            tp=float(mix("tp")),
            poplf=float(mix("poplf")),
            unemp=float(mix("unemp")),
            pop15=float(pop15),
            io=IOTable(region_id, coefs * Y[None, :], Y),
        )


def _archetype(rng: np.random.Generator, base: np.ndarray, zero: np.ndarray, n_minor: int, n_large: int) -> Archetype:
    coefs = base * np.exp(rng.normal(0.0, 0.5, size=base.shape))
    coefs[zero] = 0.0
    coefs *= rng.uniform(0.3, 0.6, size=N_SECTORS) / coefs.sum(axis=0)
    sfirm = np.exp(rng.normal(-6.0, 1.0, size=n_minor))
    firm_size = np.exp(rng.normal(2.0, 0.5, size=n_minor))
    firm = np.exp(rng.normal(-4.5, 0.7, size=n_large))
    poplf = rng.uniform(0.55, 0.68)
    tp = rng.uniform(0.4, 0.55)
    return Archetype(
        sfirm=sfirm,
        semp=sfirm * firm_size,
        va=firm * np.exp(rng.normal(4.0, 0.6, size=n_large)),
        sales=firm * np.exp(rng.normal(5.5, 0.6, size=n_large)),
        firm=firm,
        income=tp * rng.uniform(2.5, 4.5),
        tp=tp,
        poplf=poplf,
        unemp=poplf * rng.uniform(0.02, 0.06),
        output=np.exp(rng.normal(1.0, 0.8, size=N_SECTORS)),
        coefficients=coefs,
    )


def make_world(
    seed: int = 0,
    n_prefectures: int = 42,
    n_cities: int = 4,
    n_minor: int = 30,
    n_large: int = 6,
    n_archetypes: int = 6,
    n_zero_cells: int = 13,
    noise: float = 0.01,
    blend_alpha: float = 0.5,
) -> SyntheticWorld:
    """A pool of ``n_prefectures`` prefectures and ``n_cities`` cities (each
    inside a prefecture) plus the nation, the sum of all prefectures."""
    rng = np.random.default_rng(seed)
    off_diag = np.flatnonzero(~np.eye(N_SECTORS, dtype=bool).ravel())
    zero = np.zeros(N_SECTORS * N_SECTORS, dtype=bool)
    zero[rng.choice(off_diag, size=n_zero_cells, replace=False)] = True
    zero = zero.reshape(N_SECTORS, N_SECTORS)
    base = rng.dirichlet(np.full(N_SECTORS, 0.8), size=N_SECTORS).T
    archetypes = [_archetype(rng, base, zero, n_minor, n_large) for _ in range(n_archetypes)]
    world = SyntheticWorld(archetypes, [], None, zero, noise, seed)

    prefectures = []
    for k in range(n_prefectures):
        w = rng.dirichlet(np.full(n_archetypes, blend_alpha))
        size = float(np.exp(rng.normal(np.log(1.5e6), 0.7)))
        prefectures.append(world.blend(w, size, f"pref{k + 1:02d}", rng))
    cities = []
    for k in range(n_cities):
        w = rng.dirichlet(np.full(n_archetypes, blend_alpha))
        size = float(np.exp(rng.normal(np.log(6e5), 0.5)))
        parent = prefectures[int(rng.integers(n_prefectures))].region_id
        cities.append(world.blend(w, size, f"city{k + 1:02d}", rng, parent_id=parent))
    world.pool = prefectures + cities

    vec = np.sum([p.to_vector() for p in prefectures], axis=0)
    world.nation = RegionLayout(n_minor, n_large).unpack(vec, "nation")
    return world


def ground_truth(region: RegionRecord) -> np.ndarray:
    return coefficient_matrix(region.io)
