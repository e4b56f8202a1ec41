import csv
import filecmp
from dataclasses import replace

import numpy as np
import pytest

from builders import random_flows, random_pool, random_region
from iomix.iodata import IOTable, coefficient_matrix
from iomix.metrics import evaluate
from iomix.pipeline import (
    PipelineConfig,
    ingest,
    read_coefficients,
    run_baselines,
    run_inference,
    run_training,
    write_coefficients,
    write_regions,
)
from iomix.pipeline.bundle import NETWORK, SKIP, BundleError, ModelBundle, all_cells, cell_name
from iomix.pipeline.flows import flows_from_dict, read_flows, write_flows
from iomix.pipeline.run import build_dataset, load_models, mixup_config
from iomix.pipeline.tables import IngestError, region_columns
from iomix.features import ClassTotals

SMALL = {
    "seed": 3,
    "mixup": {"count": 300, "target_pop15": 150.0},
    "split": {"train": 200, "test": 50},
    "features": {"n_components": 5},
    "network": {"blocks": 1, "block_width": 8},
    "training": {"max_epochs": 3, "batch_size": 16},
}


def edit_cell(path, row, column, value):
    """Overwrite one cell of a region CSV; ``row`` counts data rows from 1."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows[row][rows[0].index(column)] = value
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def pool_without_cell(seed, n=8, cell=(2, 5)):
    """Random pool in which coefficient ``cell`` (1-based) is zero everywhere."""
    i, j = cell[0] - 1, cell[1] - 1
    out = []
    for r in random_pool(np.random.default_rng(seed), n):
        A = r.io.A.copy()
        A[i, j] = 0.0
        out.append(replace(r, io=IOTable(r.region_id, A, r.io.Y)))
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    pool = pool_without_cell(0)
    cfg = PipelineConfig.from_dict(SMALL)
    out = tmp_path_factory.mktemp("run")
    run = run_training(cfg, pool=pool, output=out)
    return cfg, pool, run, out


class TestConfig:
    def test_defaults(self):
        c = PipelineConfig()
        assert (c.split.train, c.split.test, c.split.validation_fraction) == (40000, 10000, 0.2)
        assert c.features.n_components == 50 and c.mixup.count == 50000

    def test_yaml_round_trip(self, tmp_path):
        c = PipelineConfig.from_dict(SMALL)
        c.dump(tmp_path / "c.yaml")
        back = PipelineConfig.load(tmp_path / "c.yaml")
        assert back == c and back.digest() == c.digest()

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown keys"):
            PipelineConfig.from_dict({"network": {"depth": 3}})

    def test_split_larger_than_count(self):
        with pytest.raises(ValueError):
            PipelineConfig.from_dict({"mixup": {"count": 100}, "split": {"train": 90, "test": 20}})

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            PipelineConfig.from_dict({**SMALL, "split": {"train": 200, "test": 50, "validation_fraction": 1.0}})

    def test_digest_ignores_paths_and_workers(self):
        c = PipelineConfig.from_dict(SMALL)
        d = PipelineConfig.from_dict({**SMALL, "workers": 4, "paths": {"output": "elsewhere"}})
        assert c.digest() == d.digest()
        assert c.digest() != PipelineConfig.from_dict({**SMALL, "seed": 4}).digest()


class TestRegionCSV:
    def test_empty_data_section(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(",".join(region_columns(3, 2)) + "\n")
        assert ingest(p) == []

    def test_round_trip_46_regions(self, tmp_path):
        pool = random_pool(np.random.default_rng(1), 46)
        pool[3] = replace(pool[3], parent_id="p00")
        write_regions(tmp_path / "a.csv", pool)
        back = ingest(tmp_path / "a.csv")
        assert back == pool
        write_regions(tmp_path / "b.csv", back)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_negative_population_row_numbered(self, tmp_path):
        write_regions(tmp_path / "r.csv", random_pool(np.random.default_rng(2), 4))
        edit_cell(tmp_path / "r.csv", 3, "pop15", "-5.0")
        with pytest.raises(IngestError) as info:
            ingest(tmp_path / "r.csv")
        assert [n for n, _ in info.value.rows] == [3]
        assert "row 3" in str(info.value)

    def test_lenient_mode_skips(self, tmp_path):
        write_regions(tmp_path / "r.csv", random_pool(np.random.default_rng(2), 4))
        edit_cell(tmp_path / "r.csv", 1, "income", "-1.0")
        assert [r.region_id for r in ingest(tmp_path / "r.csv", strict=False)] == ["p01", "p02", "p03"]

    def test_non_numeric_cell(self, tmp_path):
        write_regions(tmp_path / "r.csv", random_pool(np.random.default_rng(3), 2))
        edit_cell(tmp_path / "r.csv", 2, "semp_001", "n/a")
        with pytest.raises(IngestError, match="row 2: non-numeric"):
            ingest(tmp_path / "r.csv")

    def test_duplicate_ids(self, tmp_path):
        pool = random_pool(np.random.default_rng(4), 3)
        pool[2] = replace(pool[2], region_id="p00")
        write_regions(tmp_path / "r.csv", pool)
        with pytest.raises(IngestError, match="duplicate"):
            ingest(tmp_path / "r.csv")

    def test_schema_mismatch(self, tmp_path):
        (tmp_path / "r.csv").write_text("region_id,income\nx,1\n")
        with pytest.raises(IngestError, match="header"):
            ingest(tmp_path / "r.csv")


class TestOtherFormats:
    def test_coefficient_csv(self, tmp_path):
        a = np.random.default_rng(5).uniform(0, 0.3, (12, 12))
        write_coefficients(tmp_path / "a.csv", a)
        assert np.array_equal(read_coefficients(tmp_path / "a.csv"), a)
        header = (tmp_path / "a.csv").read_text().splitlines()[0].split(",")
        assert len(header) == 13 and header[0] == "industry"

    def test_flows_yaml_round_trip(self, tmp_path):
        flows = random_flows(np.random.default_rng(6), 3)
        write_flows(tmp_path / "f.yaml", flows)
        back = read_flows(tmp_path / "f.yaml")
        for a, b in zip(flows, back):
            assert a.region_id == b.region_id
            assert np.array_equal(a.m_hat, b.m_hat) and np.array_equal(a.Y, b.Y)
            assert a.m_dot.keys() == b.m_dot.keys() and a.shipping.keys() == b.shipping.keys()

    def test_flows_sparse_entries(self):
        (f,) = flows_from_dict({"regions": [{"id": "r", "Y": {"3": 7.0}, "m_hat": {"1,2": 4.0}}]})
        assert f.Y[2] == 7.0 and f.Y.sum() == 7.0
        assert f.m_hat[0, 1] == 4.0 and f.m_hat.sum() == 4.0

    def test_flows_unknown_key(self):
        with pytest.raises(ValueError):
            flows_from_dict({"regions": [{"id": "r", "tariffs": [1.0]}]})


class TestDataset:
    def test_split_partitions_exactly(self):
        pool = random_pool(np.random.default_rng(7), 6)
        cfg = PipelineConfig.from_dict(SMALL)
        data = build_dataset(pool, cfg, mixup_config(cfg), ClassTotals.from_pool(pool))
        sizes = [s.stop - s.start for s in (data.fit, data.val, data.test)]
        assert sizes == [160, 40, 50]
        assert data.fit.stop == data.val.start and data.val.stop == data.test.start
        assert len(data.features) == 300 and data.coefficients.shape == (300, 144)


class TestTraining:
    def test_skip_flag_for_absent_cell(self, trained):
        _, _, run, out = trained
        bundle = ModelBundle.load(out / "cells", (2, 5))
        assert bundle.kind == SKIP and bundle.params is None
        assert run.n_skipped == 1 and run.n_trained == 143

    def test_manifest_and_report(self, trained):
        cfg, _, _, out = trained
        manifest = (out / "MANIFEST.txt").read_text()
        assert f"config_hash: {cfg.digest()}" in manifest
        assert "skipped: 1" in manifest
        rows = list(csv.DictReader(open(out / "report.csv")))
        assert [r["cell"] for r in rows] == [cell_name(*c) for c in all_cells()]
        assert len(list((out / "histories").glob("*.csv"))) == 143

    def test_prediction_zero_for_skip_cell(self, trained):
        _, pool, _, out = trained
        assert run_inference(out, pool[0])[1, 4] == 0.0

    def test_prediction_within_transform_range(self, trained):
        _, pool, _, out = trained
        models = load_models(out)
        pred = run_inference(models, pool[1])
        for (i, j), b in models.bundles.items():
            if b.kind == NETWORK:
                assert b.transform.a_L <= pred[i - 1, j - 1] <= b.transform.a_U

    def test_no_leakage_from_target_table(self, trained):
        _, pool, _, out = trained
        target = pool[2]
        blank = replace(target, io=IOTable(target.region_id, np.zeros((12, 12)), np.zeros(12)))
        assert np.array_equal(run_inference(out, target), run_inference(out, blank))

    def test_seeded_rerun_identical(self, trained, tmp_path):
        cfg, pool, _, out = trained
        run_training(cfg, pool=pool, output=tmp_path)
        names = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
        assert names == sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
        _, mismatch, errors = filecmp.cmpfiles(out, tmp_path, [str(n) for n in names], shallow=False)
        assert mismatch == [] and errors == []

    def test_missing_bundle(self, trained, tmp_path):
        _, pool, _, out = trained
        import shutil

        copy = tmp_path / "copy"
        shutil.copytree(out, copy)
        for suffix in (".txt", ".bin"):
            p = copy / "cells" / f"a_07_03{suffix}"
            if p.exists():
                p.unlink()
        with pytest.raises(BundleError, match="a_07_03"):
            run_inference(copy, pool[0])

    def test_all_skip_predicts_zero(self, tmp_path):
        bundles = [ModelBundle(c, SKIP, "h", constant=0.0) for c in all_cells()]
        pool = random_pool(np.random.default_rng(8), 6)
        cfg = PipelineConfig.from_dict(SMALL)
        run = run_training(cfg, pool=pool, output=tmp_path)
        for b in bundles:
            b.config_hash = cfg.digest()
            b.save(tmp_path / "cells")
        assert run.n_trained > 0
        assert np.array_equal(run_inference(tmp_path, pool[0]), np.zeros((12, 12)))


class TestBaselines:
    def setup_method(self):
        self.cfg = PipelineConfig.from_dict(SMALL)
        rng = np.random.default_rng(9)
        self.target = random_region(rng, "t")
        self.refs = random_pool(rng, 5)

    def test_single_reference_summary(self):
        s = run_baselines(self.cfg, self.target, self.refs[:1]).summary()
        for est in ("flq", "ras"):
            for m in s[est].values():
                assert m["min"] == m["mean"] == m["max"]

    def test_identical_reference_is_fixed_point(self):
        b = run_baselines(self.cfg, self.target, [self.target])
        r = b.ras_reports[0]
        assert r.stpe < 1e-12 and r.rmse < 1e-12
        assert b.ras_iterations == [1]
        assert b.flq_reports[0].stpe == 0.0

    def test_aggregation_oracle(self):
        b = run_baselines(self.cfg, self.target, self.refs)
        actual = coefficient_matrix(self.target.io)
        stpe = [evaluate(m, actual).stpe for m in b.ras]
        s = b.summary()["ras"]["stpe"]
        assert s["min"] == min(stpe) and s["max"] == max(stpe)
        assert s["mean"] == pytest.approx(sum(stpe) / 5, rel=1e-14)
        assert b.reference_ids == [r.region_id for r in self.refs]

    def test_ras_hits_target_margins(self):
        b = run_baselines(self.cfg, self.target, self.refs[:2])
        A, Y = self.target.io.A, self.target.io.Y
        for coefs in b.ras:
            flows = coefs * Y[None, :]
            np.testing.assert_allclose(flows.sum(axis=1), A.sum(axis=1), rtol=1e-7)
            np.testing.assert_allclose(flows.sum(axis=0), A.sum(axis=0), rtol=1e-7)

    def test_no_references(self):
        with pytest.raises(ValueError):
            run_baselines(self.cfg, self.target, [])
