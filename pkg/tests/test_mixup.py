from dataclasses import replace

import numpy as np
import pytest

from builders import random_pool, random_region
from iomix.iodata import coefficient_matrix, inclusion_conflicts, scale_region
from iomix.mixup import (
    CHUNK_SIZE,
    FixedPop15,
    MixupConfig,
    SamplingError,
    UniformPop15,
    draw_dataset,
    generate_dataset,
    sample_virtual_region,
    sample_weights,
    standardize_by_pop15,
)


def standardized_pool(seed, n):
    return [standardize_by_pop15(r) for r in random_pool(np.random.default_rng(seed), n)]


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 0.0},
            {"k_min": 1},
            {"k_min": 4, "k_max": 3},
            {"count": -1},
            {"target_mode": UniformPop15(2.0, 1.0)},
            {"target_mode": FixedPop15(0.0)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            MixupConfig(**kwargs)

    def test_defaults(self):
        c = MixupConfig()
        assert (c.alpha, c.k_min, c.k_max, c.count) == (1.0, 2, 5, 50000)


class TestStandardize:
    def test_unit_population_unchanged(self):
        r = replace(random_region(np.random.default_rng(0)), pop15=1.0)
        assert standardize_by_pop15(r) == r

    def test_halves_income(self):
        r = random_region(np.random.default_rng(1))
        r2 = scale_region(r, 2.0 / r.pop15)
        s = standardize_by_pop15(r2)
        assert s.pop15 == pytest.approx(1.0, abs=1e-12)
        assert s.income == pytest.approx(r2.income / 2.0, rel=1e-14)

    def test_every_field_divided(self):
        r = random_region(np.random.default_rng(2))
        np.testing.assert_allclose(standardize_by_pop15(r).to_vector(), r.to_vector() / r.pop15, rtol=1e-15)

    def test_zero_population(self):
        r = scale_region(random_region(np.random.default_rng(3)), 0.0)
        with pytest.raises(ValueError):
            standardize_by_pop15(r)


class TestSampleWeights:
    def test_single_member(self):
        assert np.array_equal(sample_weights(1, 1.0, np.random.default_rng(0)), [1.0])

    def test_on_simplex(self):
        rng = np.random.default_rng(1)
        for k in range(2, 7):
            w = sample_weights(k, 0.7, rng)
            assert (w >= 0).all() and abs(w.sum() - 1) < 1e-12

    def test_uniform_dirichlet_moments(self):
        rng = np.random.default_rng(2)
        draws = np.array([sample_weights(3, 1.0, rng) for _ in range(100_000)])
        np.testing.assert_allclose(draws.mean(axis=0), 1 / 3, atol=0.01)
        # Dirichlet(1,1,1) component variance is 2/36
        np.testing.assert_allclose(draws.var(axis=0), 2 / 36, atol=0.002)


class TestSampleVirtualRegion:
    def test_symmetric_average_of_two(self):
        pool = standardized_pool(0, 2)
        cfg = MixupConfig(k_min=2, k_max=2, count=1, alpha=1e6)
        v = sample_virtual_region(pool, cfg, np.random.default_rng(0))
        # a huge alpha concentrates the Dirichlet at (1/2, 1/2)
        expected = 0.5 * (pool[0].to_vector() + pool[1].to_vector())
        np.testing.assert_allclose(v.record.to_vector(), expected, rtol=1e-3)
        assert abs(sum(w for _, w in v.provenance) - 1) < 1e-12

    def test_nested_pair_never_drawn(self):
        rng = np.random.default_rng(4)
        pool = [standardize_by_pop15(random_region(rng, "hokkaido"))]
        pool.append(standardize_by_pop15(random_region(rng, "sapporo", parent_id="hokkaido")))
        pool += [standardize_by_pop15(random_region(rng, f"p{k}")) for k in range(3)]
        parents = {r.region_id: r.parent_id for r in pool}
        cfg = MixupConfig(k_min=2, k_max=4, count=1)
        for _ in range(300):
            v = sample_virtual_region(pool, cfg, rng)
            assert not inclusion_conflicts([rid for rid, _ in v.provenance], parents)

    def test_no_valid_subset(self):
        rng = np.random.default_rng(5)
        pool = [standardize_by_pop15(random_region(rng, "root"))]
        pool += [standardize_by_pop15(random_region(rng, f"c{k}", parent_id="root")) for k in range(2)]
        with pytest.raises(SamplingError):
            sample_virtual_region(pool, MixupConfig(k_min=3, k_max=3, count=1), rng)

    def test_pool_smaller_than_k_max(self):
        with pytest.raises(SamplingError):
            sample_virtual_region(standardized_pool(1, 3), MixupConfig(count=1), np.random.default_rng(0))

    @pytest.mark.parametrize("target", [1.0, 37.5, 2.5e6])
    def test_fixed_population(self, target):
        pool = standardized_pool(2, 6)
        rng = np.random.default_rng(6)
        cfg = MixupConfig(count=1, target_mode=FixedPop15(target))
        for _ in range(20):
            assert sample_virtual_region(pool, cfg, rng).record.pop15 == pytest.approx(target, rel=1e-9)

    def test_uniform_population_range(self):
        pool = standardized_pool(3, 6)
        rng = np.random.default_rng(7)
        cfg = MixupConfig(count=1, target_mode=UniformPop15(10.0, 20.0))
        sizes = [sample_virtual_region(pool, cfg, rng).record.pop15 for _ in range(200)]
        assert 10.0 <= min(sizes) and max(sizes) <= 20.0
        assert max(sizes) - min(sizes) > 5.0

    def test_coefficients_inside_member_envelope(self):
        pool = standardized_pool(4, 8)
        by_id = {r.region_id: coefficient_matrix(r.io) for r in pool}
        rng = np.random.default_rng(8)
        cfg = MixupConfig(count=1, target_mode=FixedPop15(123.0))
        for _ in range(50):
            v = sample_virtual_region(pool, cfg, rng)
            members = np.stack([by_id[rid] for rid, _ in v.provenance])
            c = coefficient_matrix(v.record.io)
            assert (c >= members.min(axis=0) * (1 - 1e-12)).all()
            assert (c <= members.max(axis=0) * (1 + 1e-12)).all()


class TestGenerateDataset:
    def test_empty(self):
        assert generate_dataset(standardized_pool(0, 5), MixupConfig(count=0)) == []

    def test_deterministic(self):
        pool = standardized_pool(1, 7)
        cfg = MixupConfig(count=300, seed=42)
        a, b = generate_dataset(pool, cfg), generate_dataset(pool, cfg)
        assert all(x.record == y.record and x.provenance == y.provenance for x, y in zip(a, b))

    def test_seed_changes_data(self):
        pool = standardized_pool(1, 7)
        a = generate_dataset(pool, MixupConfig(count=5, seed=1))
        b = generate_dataset(pool, MixupConfig(count=5, seed=2))
        assert a[0].provenance != b[0].provenance

    def test_independent_of_worker_count(self):
        pool = standardized_pool(2, 6)
        cfg = MixupConfig(count=2 * CHUNK_SIZE + 17, seed=3)
        one, many = draw_dataset(pool, cfg, workers=1), draw_dataset(pool, cfg, workers=2)
        assert np.array_equal(one.members, many.members)
        assert np.array_equal(one.weights, many.weights)

    def test_member_count_uniform(self):
        pool = standardized_pool(3, 5)
        draws = draw_dataset(pool, MixupConfig(count=10_000, seed=4))
        k = (draws.members >= 0).sum(axis=1)
        freq = np.bincount(k, minlength=6)[2:] / len(k)
        np.testing.assert_allclose(freq, 0.25, atol=0.02)

    def test_array_form_matches_records(self):
        pool = standardized_pool(5, 6)
        cfg = MixupConfig(count=40, seed=5, target_mode=UniformPop15(0.5, 3.0))
        regions = generate_dataset(pool, cfg)
        draws = draw_dataset(pool, cfg)
        vec = draws.vectors(np.stack([r.to_vector() for r in pool]))
        for n, v in enumerate(regions):
            assert np.array_equal(v.record.to_vector(), vec[n])
            assert v.rescale_factor == draws.rescale[n]
            assert v.record.region_id == f"virtual-{n:06d}"
