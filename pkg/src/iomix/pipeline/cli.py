"""Command-line entry point: ``iomix <subcommand> [options]``.

Subcommands:

    generate   write mixup virtual regions as a region CSV
    train      generate data, fit PCA and train one model per coefficient
    predict    predict a target region's coefficients from trained models
    evaluate   compare two coefficient CSVs with the five error metrics
    baseline   FLQ or RAS estimates from coefficient and margin CSVs

``--config``, ``--seed``, ``--workers`` and ``--output`` are accepted before
or after the subcommand.  Flags given on the command line override the
configuration file.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..baselines import FLQInputs, RASNonConvergenceError, RASProblem, flq_nationalize, flq_regionalize, ras_fit
from ..metrics import LABELS, METRICS, evaluate, format_table
from ..mixup import FixedPop15, MixupConfig, UniformPop15, generate_dataset, standardize_by_pop15
from .bundle import SKIP
from .config import PipelineConfig
from .run import exclude, load_models, run_baselines, run_inference, run_training
from .tables import ingest, read_coefficients, read_columns, write_coefficients, write_regions

logger = logging.getLogger("iomix")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by
    # the subparser's copy of the same option.
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    p.add_argument("--output", help="output file or directory")
    p.add_argument("-v", "--verbose", action="count", help="more logging; repeat for debug output")
    return p


def _load_config(args) -> PipelineConfig:
    path = getattr(args, "config", None)
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _single_region(path: str, region_id: str | None):
    regions = ingest(path)
    if region_id is not None:
        found = [r for r in regions if r.region_id == region_id]
        if not found:
            raise SystemExit(f"{path}: no region {region_id!r}")
        return found[0]
    if len(regions) != 1:
        raise SystemExit(f"{path} holds {len(regions)} regions; pick one with --region")
    return regions[0]


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    m = cfg.mixup
    pool_path = args.pool or cfg.paths.pool
    if not pool_path:
        raise SystemExit("no pool CSV: pass --pool or set paths.pool")
    pool = exclude(ingest(pool_path), cfg.exclude)
    if args.target_range is not None:
        mode = UniformPop15(*args.target_range)
    elif args.target_pop15 is not None:
        mode = FixedPop15(args.target_pop15)
    elif m.target_pop15_range is not None:
        mode = UniformPop15(*map(float, m.target_pop15_range))
    else:
        mode = FixedPop15(float(m.target_pop15) if m.target_pop15 is not None else 1.0)
    mcfg = MixupConfig(
        alpha=args.alpha if args.alpha is not None else m.alpha,
        k_min=args.k_range[0] if args.k_range else m.k_min,
        k_max=args.k_range[1] if args.k_range else m.k_max,
        count=args.count if args.count is not None else m.count,
        target_mode=mode,
        seed=cfg.seed,
    )
    regions = generate_dataset([standardize_by_pop15(r) for r in pool], mcfg, workers=cfg.workers)
    out = getattr(args, "output", None) or "virtual_regions.csv"
    write_regions(out, regions)
    print(f"wrote {len(regions)} virtual regions to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.pool:
        cfg = replace(cfg, paths=replace(cfg.paths, pool=args.pool))
    if args.target:
        cfg = replace(cfg, paths=replace(cfg.paths, target=args.target))
    out = getattr(args, "output", None) or cfg.paths.output
    if not out:
        raise SystemExit("no output directory: pass --output or set paths.output")
    run = run_training(cfg, output=out)
    print(f"trained {run.n_trained} models, {run.n_skipped} cells skipped; bundles in {out}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    target_path = args.target or cfg.paths.target
    if not target_path:
        raise SystemExit("no target CSV: pass --target or set paths.target")
    target = _single_region(target_path, args.region)
    pred = run_inference(args.models, target)
    out = getattr(args, "output", None) or f"{target.region_id}_predicted.csv"
    write_coefficients(out, pred)
    print(f"wrote predicted coefficients of {target.region_id} to {out}")
    return 0


def _write_report_csv(path, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", *METRICS, "n_a", "mape_excluded"])
        for name, rep in columns.items():
            w.writerow([name, *(repr(getattr(rep, m)) for m in METRICS), rep.n_a, rep.mape_excluded])


def cmd_evaluate(args) -> int:
    actual = read_coefficients(args.actual)
    mask = None
    if args.trained_only:
        models = load_models(args.trained_only)
        mask = np.zeros(actual.shape, dtype=bool)
        for (i, j), b in models.bundles.items():
            mask[i - 1, j - 1] = b.kind != SKIP
    columns = {Path(p).stem: evaluate(read_coefficients(p), actual, mask) for p in args.estimated}
    print(format_table(columns))
    out = getattr(args, "output", None)
    if out:
        _write_report_csv(out, columns)
    return 0


def _baseline_regions(args, cfg):
    target = _single_region(args.target_regions, args.region)
    refs = exclude(ingest(args.references), [target.region_id])
    run = run_baselines(cfg, target, refs)
    summary = run.summary()[args.method]
    print(f"{args.method.upper()} estimates of {target.region_id} from {len(refs)} references")
    stats = ("min", "mean", "max")
    print(f"{'':6}" + "".join(s.rjust(10) for s in stats))
    for m in METRICS:
        print(f"{LABELS[m]:6}" + "".join(f"{summary[m][s]:10.4f}" for s in stats))
    out = getattr(args, "output", None)
    if out:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["reference", *METRICS, "detail"])
            reports = run.flq_reports if args.method == "flq" else run.ras_reports
            details = run.flq_direction if args.method == "flq" else [f"iterations={n}" for n in run.ras_iterations]
            for rid, rep, d in zip(run.reference_ids, reports, details):
                w.writerow([rid, *(repr(getattr(rep, m)) for m in METRICS), d])
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    b = cfg.baselines
    if args.references:
        if not args.target_regions:
            raise SystemExit("--references needs --target-regions")
        return _baseline_regions(args, cfg)
    if not args.coefficients:
        raise SystemExit("pass --coefficients (matrix mode) or --references with --target-regions")
    coefs = read_coefficients(args.coefficients)
    out = getattr(args, "output", None) or f"{args.method}_estimate.csv"
    if args.method == "flq":
        if not args.outputs:
            raise SystemExit("flq needs --outputs, a CSV with x_r and x_n columns")
        cols = read_columns(args.outputs, ["x_r", "x_n"])
        inputs = FLQInputs(cols["x_r"], cols["x_n"], delta=b.flq_delta, exponent_mode=b.flq_exponent_mode)
        estimate = flq_nationalize(coefs, inputs) if args.nationalize else flq_regionalize(coefs, inputs)
        write_coefficients(out, estimate)
        print(f"FLQ {'nationalize' if args.nationalize else 'regionalize'}: wrote {out}")
        return 0
    if not args.margins:
        raise SystemExit("ras needs --margins, a CSV with row_target, col_target and gross_output columns")
    cols = read_columns(args.margins, ["row_target", "col_target", "gross_output"])
    problem = RASProblem.from_coefficients(
        coefs, cols["row_target"], cols["col_target"], cols["gross_output"],
        tolerance=b.ras_tolerance, max_iterations=b.ras_max_iterations,
    )
    report_path = Path(out).with_suffix(".report.txt")
    try:
        result = ras_fit(problem)
    except RASNonConvergenceError as exc:
        report_path.write_text(
            f"converged: false\niterations: {exc.iterations}\nresidual: {exc.residual!r}\n", encoding="utf-8"
        )
        print(f"RAS did not converge: {exc}", file=sys.stderr)
        return 1
    write_coefficients(out, result.coefficients)
    report_path.write_text(
        f"converged: true\niterations: {result.iterations}\nresidual: {result.residual!r}\n", encoding="utf-8"
    )
    print(f"RAS converged in {result.iterations} iterations (residual {result.residual:.3e}); wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = argparse.ArgumentParser(prog="iomix", parents=[flags], description="Estimate regional input-output coefficients from macro data.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[flags], help="write mixup virtual regions")
    g.add_argument("--pool", help="region CSV of the real regions")
    g.add_argument("--count", type=int, help="number of virtual regions")
    g.add_argument("--alpha", type=float, help="Dirichlet concentration")
    g.add_argument("--k-range", type=int, nargs=2, metavar=("KMIN", "KMAX"), help="members per virtual region")
    size = g.add_mutually_exclusive_group()
    size.add_argument("--target-pop15", type=float, help="fixed population aged 15+ of every virtual region")
    size.add_argument("--target-range", type=float, nargs=2, metavar=("LO", "HI"),
                      help="draw each virtual region's population aged 15+ uniformly")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[flags], help="train one model per coefficient")
    t.add_argument("--pool", help="region CSV of the real regions")
    t.add_argument("--target", help="region CSV holding the region to be predicted (sets the mixup size)")
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[flags], help="predict a region's coefficients")
    p.add_argument("--models", required=True, help="directory written by 'train'")
    p.add_argument("--target", help="region CSV with the region to predict")
    p.add_argument("--region", help="region id, if the CSV holds several")
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", parents=[flags], help="error metrics of coefficient estimates")
    e.add_argument("actual", help="coefficient CSV of published values")
    e.add_argument("estimated", nargs="+", help="one or more coefficient CSVs to score")
    e.add_argument("--trained-only", metavar="MODELS", help="score only cells that have a trained model")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", parents=[flags], help="FLQ or RAS baseline estimates")
    b.add_argument("method", choices=["flq", "ras"])
    b.add_argument("--coefficients", help="coefficient CSV to adjust (national for FLQ, initial for RAS)")
    b.add_argument("--outputs", help="FLQ: CSV with x_r and x_n gross-output columns")
    b.add_argument("--nationalize", action="store_true", help="FLQ: go from regional to national coefficients")
    b.add_argument("--margins", help="RAS: CSV with row_target, col_target and gross_output columns")
    b.add_argument("--references", help="region CSV of reference regions (region mode)")
    b.add_argument("--target-regions", help="region CSV holding the target (region mode)")
    b.add_argument("--region", help="target region id, if the CSV holds several")
    b.set_defaults(func=cmd_baseline)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(getattr(args, "verbose", 0) or 0, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
