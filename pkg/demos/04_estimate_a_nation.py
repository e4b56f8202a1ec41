"""End to end: estimate a nation's coefficients and compare with FLQ and RAS.

The target is the synthetic nation, the sum of all prefectures; its true
coefficients are known here, so every estimate can be scored.  The networks
see only the nation's explanatory variables.  FLQ adjusts one prefecture's
coefficients by location quotients; RAS rebalances one prefecture's
coefficients to the nation's exact row and column totals, information the
networks never get.

Run:  python demos/04_estimate_a_nation.py [epochs] [output-dir]

The default of 10 epochs finishes in a few minutes on one core; the
acceptance run uses 50.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from iomix.metrics import evaluate, format_table
from iomix.pipeline import PipelineConfig, run_baselines, run_inference, run_training
from iomix.synthetic import ground_truth, make_world

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(tempfile.mkdtemp(prefix="iomix-demo-"))

world = make_world(seed=0)
cfg = PipelineConfig.from_dict({
    "seed": 0,
    "mixup": {"count": 5000},
    "split": {"train": 4000, "test": 1000},
    "features": {"n_components": 20},
    "network": {"blocks": 3, "block_width": 64},
    "training": {"max_epochs": epochs},
})
print(f"training 144 coefficient models for {epochs} epochs into {out} ...")
run = run_training(cfg, pool=world.pool, target=world.nation, output=out)
print(f"{run.n_trained} networks trained, {run.n_skipped} cells are zero everywhere and skipped")

truth = ground_truth(world.nation)
ann = run_inference(out, world.nation)

# baselines from every prefecture, summarised the way published comparisons
# usually are: the best, average and worst reference
prefectures = [r for r in world.pool if r.parent_id is None and r.region_id.startswith("pref")]
base = run_baselines(cfg, world.nation, prefectures)
summary = base.summary()

print("\nSTPE against the true national coefficients")
print(f"  networks                  {evaluate(ann, truth).stpe:.4f}")
for name in ("ras", "flq"):
    s = summary[name]["stpe"]
    print(f"  {name.upper()} over {len(prefectures)} references   min {s['min']:.4f}  mean {s['mean']:.4g}  max {s['max']:.4g}")

best = int(np.argmin([r.stpe for r in base.ras_reports]))
print(f"\nall five metrics, networks vs RAS from its best reference ({base.reference_ids[best]}):")
print(format_table({"ANN": evaluate(ann, truth), "RAS-best": base.ras_reports[best]}))
print("\nFLQ scales a small region's coefficients up by 1/FLQ when going to the")
print("nation, so references much smaller than the nation give very large errors.")
