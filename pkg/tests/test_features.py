import logging
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import random_pool, random_region
from iomix.features import (
    ClassTotals,
    DegenerateTransformError,
    TargetTransform,
    compute_features,
    feature_names,
    fit_pca,
    inverse_transform,
    project,
    transform_target,
)
from iomix.iodata import scale_region


def spreadsheet_features(r, totals):
    """Table of explanatory variables recomputed cell by cell."""
    row = []
    row += [r.sfirm[k] for k in range(r.n_minor)]
    row += [r.sfirm[k] / totals.sfirm[k] for k in range(r.n_minor)]
    row += [r.semp[k] for k in range(r.n_minor)]
    row += [r.semp[k] / totals.semp[k] for k in range(r.n_minor)]
    row += [r.va[k] for k in range(r.n_large)]
    row += [r.va[k] / r.firm[k] for k in range(r.n_large)]
    row += [r.sales[k] for k in range(r.n_large)]
    row += [r.sales[k] / r.firm[k] for k in range(r.n_large)]
    row += [r.income, r.income / r.tp, r.poplf, r.poplf / r.pop15, r.unemp / r.poplf]
    return np.array(row)


class TestComputeFeatures:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.pool = random_pool(rng, 6)
        self.totals = ClassTotals.from_pool(self.pool)

    def test_spreadsheet_oracle(self):
        for r in self.pool:
            got = compute_features(r, self.totals)
            np.testing.assert_allclose(got, spreadsheet_features(r, self.totals), rtol=1e-15)
            assert len(got) == len(feature_names(r.n_minor, r.n_large))

    def test_no_unemployment(self):
        r = replace(self.pool[0], unemp=0.0)
        assert compute_features(r, self.totals)[-1] == 0.0

    def test_income_per_taxpayer(self):
        r = replace(self.pool[0], income=10.0, tp=4.0)
        names = feature_names(r.n_minor, r.n_large)
        assert compute_features(r, self.totals)[names.index("income_per_taxpayer")] == 2.5

    def test_region_basis_ratios_sum_to_one(self):
        f = compute_features(self.pool[1], ratio_basis="region")
        n = self.pool[1].n_minor
        assert f[n : 2 * n].sum() == pytest.approx(1.0, rel=1e-14)

    def test_zero_over_zero_is_zero_and_logged(self, caplog):
        r = self.pool[2]
        firm = r.firm.copy()
        va, sales = r.va.copy(), r.sales.copy()
        firm[0] = va[0] = sales[0] = 0.0
        r0 = replace(r, firm=firm, va=va, sales=sales)
        with caplog.at_level(logging.WARNING, logger="iomix.features"):
            f = compute_features(r0, self.totals)
        names = feature_names(r.n_minor, r.n_large)
        assert f[names.index("va_per_firm_01")] == 0.0
        assert "zero-over-zero" in caplog.text

    def test_nonzero_over_zero_raises(self):
        firm = self.pool[0].firm.copy()
        firm[1] = 0.0
        with pytest.raises(ValueError, match="zero denominator"):
            compute_features(replace(self.pool[0], firm=firm), self.totals)

    def test_pool_basis_needs_totals(self):
        with pytest.raises(ValueError):
            compute_features(self.pool[0])

    def test_ratios_invariant_under_scaling(self):
        r = self.pool[3]
        names = feature_names(r.n_minor, r.n_large)
        ratios = [k for k, n in enumerate(names) if "per_" in n or n in ("labor_force_ratio", "unemployment_rate")]
        quantities = [k for k, n in enumerate(names) if "ratio" not in n and "per_" not in n and "rate" not in n]
        f, g = compute_features(r, self.totals), compute_features(scale_region(r, 3.5), self.totals)
        np.testing.assert_allclose(g[ratios], f[ratios], rtol=1e-14)
        np.testing.assert_allclose(g[quantities], 3.5 * f[quantities], rtol=1e-14)


class TestPCA:
    def test_identical_rows(self):
        with pytest.raises(ValueError, match="zero total variance"):
            fit_pca(np.ones((20, 4)), n_components=2)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit_pca(np.random.default_rng(0).normal(size=(3, 5)), n_components=3)

    def test_independent_columns_share_variance_equally(self):
        # standardization gives every column unit variance, so independent
        # columns split the variance evenly whatever their raw spread
        X = np.random.default_rng(1).normal(size=(20000, 3)) * [1.0, 5.0, 0.2]
        m = fit_pca(X, n_components=3)
        np.testing.assert_allclose(m.scale, [1.0, 5.0, 0.2], rtol=0.03)
        np.testing.assert_allclose(m.explained_ratio, 1 / 3, atol=0.01)

    def test_block_correlation_axes(self):
        # correlation [[1, .8, 0], [.8, 1, 0], [0, 0, 1]] has eigenvectors
        # (1,1,0)/sqrt2, (0,0,1), (1,-1,0)/sqrt2 with eigenvalues 1.8, 1, 0.2
        rng = np.random.default_rng(13)
        cov = np.array([[1.0, 0.8, 0.0], [0.8, 1.0, 0.0], [0.0, 0.0, 1.0]])
        X = rng.multivariate_normal(np.zeros(3), cov, size=50000) * [2.0, 0.5, 7.0]
        m = fit_pca(X, n_components=3)
        np.testing.assert_allclose(m.explained_ratio, np.array([1.8, 1.0, 0.2]) / 3, atol=0.01)
        r = 2**-0.5
        expected = np.array([[r, r, 0], [0, 0, 1], [r, -r, 0]])
        np.testing.assert_allclose(np.abs(m.components), np.abs(expected), atol=0.02)

    def test_correlated_analytic(self):
        rng = np.random.default_rng(2)
        cov = np.array([[1.0, 0.8], [0.8, 1.0]])
        X = rng.multivariate_normal([0, 0], cov, size=20000)
        m = fit_pca(X, n_components=2)
        # standardized correlation matrix eigenvalues 1.8 and 0.2
        np.testing.assert_allclose(m.explained_ratio, [0.9, 0.1], atol=0.01)
        np.testing.assert_allclose(np.abs(m.components[0]), [2**-0.5, 2**-0.5], atol=1e-2)

    def test_orthonormal_and_sorted(self):
        X = np.random.default_rng(3).normal(size=(200, 12)) @ np.random.default_rng(4).normal(size=(12, 12))
        m = fit_pca(X, n_components=8)
        np.testing.assert_allclose(m.components @ m.components.T, np.eye(8), atol=1e-10)
        assert (np.diff(m.explained_ratio) <= 0).all()
        assert (m.components[np.arange(8), np.abs(m.components).argmax(axis=1)] > 0).all()

    def test_scores_diagonal_covariance(self):
        X = np.random.default_rng(5).normal(size=(300, 10)) @ np.random.default_rng(6).normal(size=(10, 10))
        m = fit_pca(X, n_components=6)
        cov = np.cov(project(m, X), rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 1e-8
        np.testing.assert_allclose(np.diag(cov), m.explained_variance, rtol=1e-10)

    def test_zero_variance_feature_clamped(self):
        X = np.random.default_rng(7).normal(size=(50, 4))
        X[:, 2] = 3.0
        m = fit_pca(X, n_components=2)
        assert m.scale[2] == 1.0

    def test_reconstruction_error_nonincreasing(self):
        X = np.random.default_rng(8).normal(size=(100, 8)) @ np.random.default_rng(9).normal(size=(8, 8))
        errs = []
        for k in range(1, 9):
            m = fit_pca(X, n_components=k)
            Z = (X - m.mean) / m.scale
            recon = project(m, X) @ m.components
            errs.append(np.sum((Z - recon) ** 2))
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


class TestProject:
    def setup_method(self):
        X = np.random.default_rng(10).normal(size=(80, 6)) * [1, 2, 3, 4, 5, 6]
        self.m = fit_pca(X, n_components=4)

    def test_mean_maps_to_origin(self):
        assert np.allclose(project(self.m, self.m.mean), 0.0, atol=1e-15)

    def test_unit_first_score(self):
        f = self.m.mean + self.m.scale * self.m.components[0]
        np.testing.assert_allclose(project(self.m, f), [1, 0, 0, 0], atol=1e-12)

    def test_dense_oracle(self):
        f = np.random.default_rng(11).normal(size=6)
        z = [(f[k] - self.m.mean[k]) / self.m.scale[k] for k in range(6)]
        expected = [sum(c[k] * z[k] for k in range(6)) for c in self.m.components]
        np.testing.assert_allclose(project(self.m, f), expected, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(self.m, np.zeros(5))


class TestTargetTransform:
    def test_lower_bound_maps_to_zero(self):
        t = TargetTransform(0.1, 0.3)
        assert transform_target(t.a_L, t) == 0.0

    def test_worked_example(self):
        t = TargetTransform(0.1, 0.3)
        assert t.a_L == 0.1 and t.a_U == pytest.approx(0.4, abs=1e-15)
        assert transform_target(0.25, t) == pytest.approx(0.5, abs=1e-15)

    def test_upper_clamp(self):
        t = TargetTransform(0.8, 0.9)
        assert t.a_U == pytest.approx(0.95, abs=1e-15)
        assert TargetTransform(0.5, 0.9).a_U == 1.0

    def test_training_values_at_most_two_thirds(self):
        a = np.random.default_rng(0).uniform(0.02, 0.3, 500)
        t = TargetTransform.fit(a)
        assert transform_target(a, t).max() == pytest.approx(2 / 3, rel=1e-12)

    def test_inverse_endpoints(self):
        t = TargetTransform(0.05, 0.2)
        assert inverse_transform(0.0, t) == t.a_L
        assert inverse_transform(1.0, t) == pytest.approx(t.a_U, abs=1e-15)

    def test_degenerate(self):
        t = TargetTransform(0.2, 0.2)
        assert t.degenerate
        with pytest.raises(DegenerateTransformError):
            transform_target(0.2, t)

    @settings(max_examples=100, deadline=None)
    @given(lo=st.floats(0.0, 0.9), width=st.floats(1e-4, 0.5), u=st.floats(0.0, 1.0))
    def test_round_trip(self, lo, width, u):
        t = TargetTransform(lo, min(lo + width, 1.0))
        if t.degenerate:
            return
        a = t.a_L + u * (t.a_U - t.a_L)
        assert abs(inverse_transform(transform_target(a, t), t) - a) <= 1e-12
