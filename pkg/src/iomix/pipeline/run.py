"""Training, inference and baseline runs over a region pool."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..baselines import FLQInputs, RASProblem, flq_nationalize, flq_regionalize, ras_fit
from ..features import (
    ClassTotals,
    PCAModel,
    TargetTransform,
    feature_matrix,
    fit_pca,
    project,
    transform_target,
)
from ..iodata import N_SECTORS, RegionRecord, coefficient_matrix, region_layout
from ..metrics import EvaluationReport, evaluate, summarize
from ..mixup import FixedPop15, MixupConfig, MixupDraws, UniformPop15, draw_dataset, standardize_by_pop15
from ..neuralnet import MLPConfig, TrainConfig, TrainHistory, mse, predict, train
from .bundle import (
    CONSTANT,
    FORMAT,
    NETWORK,
    SKIP,
    BundleError,
    ModelBundle,
    all_cells,
    cell_name,
    load_feature_model,
    save_feature_model,
)
from .config import PipelineConfig
from .tables import ingest

logger = logging.getLogger(__name__)

FEATURE_CHUNK = 4096


def load_pool(config: PipelineConfig) -> list[RegionRecord]:
    if not config.paths.pool:
        raise ValueError("no pool CSV configured (paths.pool)")
    return exclude(ingest(config.paths.pool), config.exclude)


def exclude(pool: Sequence[RegionRecord], ids: Sequence[str]) -> list[RegionRecord]:
    drop = set(ids)
    unknown = drop - {r.region_id for r in pool}
    if unknown:
        logger.warning("excluded ids not in the pool: %s", sorted(unknown))
    return [r for r in pool if r.region_id not in drop]


def mixup_config(config: PipelineConfig, target: RegionRecord | None = None) -> MixupConfig:
    """Mixup settings, sized to ``target`` unless a size is configured."""
    m = config.mixup
    if m.target_pop15_range is not None:
        mode = UniformPop15(*map(float, m.target_pop15_range))
    elif m.target_pop15 is not None:
        mode = FixedPop15(float(m.target_pop15))
    elif target is not None:
        mode = FixedPop15(target.pop15)
    else:
        raise ValueError("set mixup.target_pop15, mixup.target_pop15_range or give a target region")
    return MixupConfig(alpha=m.alpha, k_min=m.k_min, k_max=m.k_max, count=m.count, target_mode=mode, seed=config.seed)


def coefficient_rows(vectors: np.ndarray, layout) -> np.ndarray:
    """Row-major flattened coefficient matrices of flat region vectors."""
    s = layout.slices
    A = vectors[:, s["A"]].reshape(-1, N_SECTORS, N_SECTORS)
    Y = vectors[:, s["Y"]][:, None, :]
    return np.divide(A, Y, out=np.zeros_like(A), where=Y > 0).reshape(len(vectors), -1)


@dataclass
class Dataset:
    """Mixup-generated training data, already split.

    Rows ``[0, n_fit)`` train the networks, ``[n_fit, n_train)`` validate
    them and ``[n_train, n_train + n_test)`` are held out for testing.
    """

    draws: MixupDraws
    features: np.ndarray
    coefficients: np.ndarray
    n_fit: int
    n_train: int
    n_test: int

    @property
    def fit(self) -> slice:
        return slice(0, self.n_fit)

    @property
    def val(self) -> slice:
        return slice(self.n_fit, self.n_train)

    @property
    def test(self) -> slice:
        return slice(self.n_train, self.n_train + self.n_test)


def build_dataset(
    pool: Sequence[RegionRecord], config: PipelineConfig, mcfg: MixupConfig, totals: ClassTotals
) -> Dataset:
    std_pool = [standardize_by_pop15(r) for r in pool]
    draws = draw_dataset(std_pool, mcfg, workers=config.workers)
    layout = region_layout(pool[0])
    pool_matrix = np.stack([r.to_vector() for r in std_pool])
    n = len(draws)
    feats, coefs = [], []
    for start in range(0, n, FEATURE_CHUNK):
        vec = draws.vectors(pool_matrix, slice(start, start + FEATURE_CHUNK))
        feats.append(feature_matrix(vec, layout, totals, config.features.ratio_basis))
        coefs.append(coefficient_rows(vec, layout))
    split = config.split
    n_val = round(split.train * split.validation_fraction)
    return Dataset(
        draws=draws,
        features=np.concatenate(feats),
        coefficients=np.concatenate(coefs),
        n_fit=split.train - n_val,
        n_train=split.train,
        n_test=split.test,
    )


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, 1, index]).generate_state(1, np.uint64)[0])


@dataclass
class CellResult:
    bundle: ModelBundle
    row: dict
    history: TrainHistory | None = None


_SHARED: dict = {}


def _init_worker(shared):
    _SHARED.clear()
    _SHARED.update(shared)


def _train_cell(job) -> CellResult:
    index, cell, kind, y_fit, y_val, y_test, tseed = job
    sh = _SHARED
    digest = sh["digest"]
    row = {"cell": cell_name(*cell), "kind": kind}
    if kind == SKIP:
        return CellResult(ModelBundle(cell, SKIP, digest, constant=0.0), row)
    transform = TargetTransform.fit(y_fit)
    row.update(a_min=transform.a_min, a_max=transform.a_max)
    if transform.degenerate:
        logger.warning("%s: constant over the training data, predicting %r", cell_name(*cell), transform.a_min)
        row["kind"] = CONSTANT
        return CellResult(ModelBundle(cell, CONSTANT, digest, transform=transform, constant=transform.a_min), row)
    mcfg: MLPConfig = sh["mconfig"]
    tcfg: TrainConfig = replace(sh["tconfig"], seed=tseed)
    t_fit, t_val, t_test = (transform_target(y, transform) for y in (y_fit, y_val, y_test))
    params, history = train((sh["X_fit"], t_fit), (sh["X_val"], t_val), mcfg, tcfg)
    val_mse = mse(params, sh["X_val"], t_val, mcfg.bn_eps)
    row.update(
        best_epoch=history.best_epoch,
        epochs_run=len(history.val_loss),
        val_mse=val_mse,
        val_target_var=float(np.var(t_val)),
    )
    if len(t_test):
        pred = predict(params, sh["X_test"], transform, mcfg.bn_eps)
        row["test_rmse"] = float(np.sqrt(np.mean((pred - y_test) ** 2)))
    bundle = ModelBundle(cell, NETWORK, digest, transform=transform, params=params)
    return CellResult(bundle, row, history)


REPORT_COLUMNS = ["cell", "kind", "a_min", "a_max", "best_epoch", "epochs_run", "val_mse", "val_target_var", "test_rmse"]


@dataclass
class TrainingRun:
    output: Path
    pca: PCAModel
    dataset: Dataset
    results: list[CellResult] = field(default_factory=list)

    @property
    def n_trained(self) -> int:
        return sum(1 for r in self.results if r.bundle.kind == NETWORK)

    @property
    def n_skipped(self) -> int:
        return sum(1 for r in self.results if r.bundle.kind == SKIP)


def run_training(
    config: PipelineConfig,
    pool: Sequence[RegionRecord] | None = None,
    target: RegionRecord | None = None,
    output: str | Path | None = None,
) -> TrainingRun:
    """Generate virtual regions, fit PCA, and train one model per
    coefficient; write the bundle directory to ``output``."""
    config.validate()
    pool = exclude(pool, config.exclude) if pool is not None else load_pool(config)
    if target is None and config.paths.target and config.mixup.target_pop15 is None:
        targets = ingest(config.paths.target)
        if len(targets) != 1:
            raise ValueError("target CSV must hold exactly one region to size the mixup data")
        target = targets[0]
    out = Path(output or config.paths.output)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    (out / "histories").mkdir(exist_ok=True)

    mcfg = mixup_config(config, target)
    totals = ClassTotals.from_pool(pool)
    data = build_dataset(pool, config, mcfg, totals)
    pca = fit_pca(data.features[data.fit], config.features.n_components)
    scores = project(pca, data.features)
    digest = config.digest()

    pool_coefs = np.stack([coefficient_matrix(r.io).ravel() for r in pool])
    active = (pool_coefs != 0).any(axis=0)
    net = config.network
    shared = {
        "digest": digest,
        "mconfig": MLPConfig(
            input_dim=pca.n_components,
            blocks=net.blocks,
            block_width=net.block_width,
            l2_lambda=net.l2_lambda,
            bn_momentum=net.bn_momentum,
            bn_eps=net.bn_eps,
        ),
        "tconfig": TrainConfig(**vars(config.training)),
        "X_fit": scores[data.fit],
        "X_val": scores[data.val],
        "X_test": scores[data.test],
    }
    jobs = []
    for index, cell in enumerate(all_cells()):
        c = data.coefficients[:, index]
        jobs.append((
            index, cell, NETWORK if active[index] else SKIP,
            c[data.fit], c[data.val], c[data.test], cell_seed(config.seed, index),
        ))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(shared,)) as ex:
            results = list(ex.map(_train_cell, jobs))
    else:
        _init_worker(shared)
        results = [_train_cell(j) for j in jobs]

    run = TrainingRun(out, pca, data, results)
    _write_run(run, config, pool, totals)
    logger.info("trained %d coefficient models, %d skipped", run.n_trained, run.n_skipped)
    return run


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_run(run: TrainingRun, config: PipelineConfig, pool, totals: ClassTotals) -> None:
    out = run.output
    digest = config.digest()
    config.dump(out / "config.yaml")
    save_feature_model(out, digest, run.pca, totals, pool[0].n_minor, pool[0].n_large, config.features.ratio_basis)
    for r in run.results:
        r.bundle.save(out / "cells")
        if r.history is not None:
            with open(out / "histories" / f"{cell_name(*r.bundle.cell)}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["epoch", "train_loss", "val_mse"])
                for e, (tl, vl) in enumerate(zip(r.history.train_loss, r.history.val_loss)):
                    w.writerow([e, repr(tl), repr(vl)])
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in run.results:
            w.writerow([_fmt(r.row.get(c)) for c in REPORT_COLUMNS])
    counts = {k: sum(1 for r in run.results if r.bundle.kind == k) for k in (NETWORK, CONSTANT, SKIP)}
    manifest = [
        f"format: {FORMAT}",
        f"config_hash: {digest}",
        f"pool_regions: {len(pool)}",
        f"generated_regions: {len(run.dataset.draws)}",
        f"trained: {counts[NETWORK]}",
        f"constant: {counts[CONSTANT]}",
        f"skipped: {counts[SKIP]}",
        "cells: " + " ".join(cell_name(*r.bundle.cell) for r in run.results),
    ]
    (out / "MANIFEST.txt").write_text("\n".join(manifest) + "\n", encoding="utf-8")


@dataclass
class LoadedModels:
    meta: dict
    pca: PCAModel
    totals: ClassTotals
    bundles: dict[tuple[int, int], ModelBundle]
    bn_eps: float


def load_models(directory: str | Path) -> LoadedModels:
    directory = Path(directory)
    meta, pca, totals = load_feature_model(directory)
    missing = [cell_name(*c) for c in all_cells() if not (directory / "cells" / f"{cell_name(*c)}.txt").exists()]
    if missing:
        raise BundleError(f"bundle directory incomplete, missing {len(missing)} cells: {missing}")
    bundles = {c: ModelBundle.load(directory / "cells", c) for c in all_cells()}
    stale = [cell_name(*c) for c, b in bundles.items() if b.config_hash != meta["config_hash"]]
    if stale:
        raise BundleError(f"bundles from a different configuration: {stale}")
    cfg = PipelineConfig.load(directory / "config.yaml") if (directory / "config.yaml").exists() else PipelineConfig()
    return LoadedModels(meta, pca, totals, bundles, cfg.network.bn_eps)


def run_inference(models: LoadedModels | str | Path, target: RegionRecord) -> np.ndarray:
    """Predicted 12x12 coefficient matrix of ``target``.

    Only the target's explanatory variables are read, never its IO table.
    """
    if not isinstance(models, LoadedModels):
        models = load_models(models)
    n_minor, n_large = int(models.meta["n_minor"]), int(models.meta["n_large"])
    if (target.n_minor, target.n_large) != (n_minor, n_large):
        raise ValueError(
            f"target has {target.n_minor}/{target.n_large} classes, models expect {n_minor}/{n_large}"
        )
    vec = target.to_vector()[None, :]
    f = feature_matrix(vec, region_layout(target), models.totals, models.meta["ratio_basis"])
    scores = project(models.pca, f)[0]
    out = np.zeros((N_SECTORS, N_SECTORS))
    for (i, j), b in models.bundles.items():
        if b.kind == SKIP:
            value = 0.0
        elif b.kind == CONSTANT:
            value = b.constant
        else:
            value = predict(b.params, scores, b.transform, models.bn_eps)
        out[i - 1, j - 1] = value
    return out


@dataclass
class BaselineRun:
    """Per-reference FLQ and RAS estimates of one target."""

    target_id: str
    reference_ids: list[str]
    flq: list[np.ndarray]
    ras: list[np.ndarray]
    flq_reports: list[EvaluationReport]
    ras_reports: list[EvaluationReport]
    ras_iterations: list[int]
    flq_direction: list[str]

    def summary(self) -> dict[str, dict]:
        return {"flq": summarize(self.flq_reports), "ras": summarize(self.ras_reports)}


def flq_estimate(reference: RegionRecord, target: RegionRecord, config: PipelineConfig) -> tuple[np.ndarray, str]:
    """FLQ estimate of the target's coefficients from a reference region.

    A target larger than the reference is treated as the nation containing
    it (``nationalize``); a smaller one as a region within it
    (``regionalize``).
    """
    b = config.baselines
    ref_coefs = coefficient_matrix(reference.io)
    if target.io.Y.sum() >= reference.io.Y.sum():
        inputs = FLQInputs(reference.io.Y, target.io.Y, delta=b.flq_delta, exponent_mode=b.flq_exponent_mode)
        return flq_nationalize(ref_coefs, inputs), "nationalize"
    inputs = FLQInputs(target.io.Y, reference.io.Y, delta=b.flq_delta, exponent_mode=b.flq_exponent_mode)
    return flq_regionalize(ref_coefs, inputs), "regionalize"


def ras_estimate(reference: RegionRecord, target: RegionRecord, config: PipelineConfig):
    """RAS fit of the reference's coefficients to the target's margins.

    Flows and margins are divided by the total intermediate input first, so
    the tolerance acts on shares rather than currency units; coefficients do
    not change under this rescaling.
    """
    b = config.baselines
    A, Y = target.io.A, target.io.Y
    total = A.sum()
    if total <= 0:
        raise ValueError(f"{target.region_id!r} has no intermediate flows to fit")
    problem = RASProblem.from_coefficients(
        coefficient_matrix(reference.io), A.sum(axis=1) / total, A.sum(axis=0) / total, Y / total,
        tolerance=b.ras_tolerance, max_iterations=b.ras_max_iterations,
    )
    return ras_fit(problem)


def run_baselines(
    config: PipelineConfig,
    target: RegionRecord,
    references: Sequence[RegionRecord],
    mask: np.ndarray | None = None,
) -> BaselineRun:
    """FLQ and RAS estimates from each reference, scored against the
    target's published coefficients."""
    if not references:
        raise ValueError("need at least one reference region")
    actual = coefficient_matrix(target.io)
    run = BaselineRun(target.region_id, [], [], [], [], [], [], [])
    for ref in references:
        flq, direction = flq_estimate(ref, target, config)
        ras = ras_estimate(ref, target, config)
        run.reference_ids.append(ref.region_id)
        run.flq.append(flq)
        run.flq_direction.append(direction)
        run.ras.append(ras.coefficients)
        run.ras_iterations.append(ras.iterations)
        run.flq_reports.append(evaluate(flq, actual, mask))
        run.ras_reports.append(evaluate(ras.coefficients, actual, mask))
    return run
