"""From 46 real regions to thousands of training examples.

Only a few dozen regions publish input-output tables, far too few to fit a
network.  Mixing two to five of them with random Dirichlet weights, after
putting every region on a per-person footing, produces as many plausible
"virtual regions" as we like, each with its own explanatory variables and
its own coefficient matrix.  This script builds such a set and looks at
what PCA makes of the explanatory variables; it ends with the target
rescaling used for one coefficient.

Run:  python demos/02_virtual_regions.py
"""
import numpy as np

from iomix.features import ClassTotals, TargetTransform, compute_features, feature_names, fit_pca, project, transform_target
from iomix.iodata import coefficient_matrix
from iomix.mixup import FixedPop15, MixupConfig, generate_dataset, standardize_by_pop15
from iomix.synthetic import make_world

world = make_world(seed=1)
pool = world.pool
print(f"pool: {len(pool)} regions, e.g. {pool[0].region_id} with {pool[0].pop15:,.0f} people aged 15+")
nested = [(r.region_id, r.parent_id) for r in pool if r.parent_id]
print("cities and the prefecture containing them:", nested)

# Virtual regions are sized like the nation we want to estimate.
cfg = MixupConfig(count=2000, target_mode=FixedPop15(world.nation.pop15), seed=11)
virtual = generate_dataset([standardize_by_pop15(r) for r in pool], cfg)
v = virtual[0]
print(f"\n{v.record.region_id} mixes", ", ".join(f"{rid} ({w:.2f})" for rid, w in v.provenance))
print("members per virtual region:", np.bincount([len(x.provenance) for x in virtual])[2:], "for k = 2..5")
# a city never shares a virtual region with the prefecture around it
for x in virtual:
    ids = {rid for rid, _ in x.provenance}
    assert not any(c in ids and p in ids for c, p in nested)

# --- Explanatory variables and their principal components ---------------
totals = ClassTotals.from_pool(pool)
F = np.stack([compute_features(x.record, totals) for x in virtual])
names = feature_names(pool[0].n_minor, pool[0].n_large)
print(f"\n{F.shape[1]} explanatory variables, e.g. {names[:2]} ... {names[-3:]}")
pca = fit_pca(F, n_components=20)
share = np.cumsum(pca.explained_ratio)
print("cumulative variance explained by 1, 5, 10, 20 components:", share[[0, 4, 9, 19]].round(3))
scores = project(pca, F)
print("score standard deviations (first five):", scores.std(axis=0)[:5].round(2))

# --- Rescaling one coefficient for a sigmoid output ---------------------
i, j = 4, 4
a = np.array([coefficient_matrix(x.record.io)[i - 1, j - 1] for x in virtual])
t = TargetTransform.fit(a)
z = transform_target(a, t)
print(f"\na_{{{i},{j}}} over the virtual regions: {a.min():.4f} .. {a.max():.4f}")
print(f"mapped to [0, 1] with a_L = {t.a_L:.4f}, a_U = {t.a_U:.4f}: {z.min():.3f} .. {z.max():.3f}")
print("the headroom above 2/3 lets the network predict beyond the largest training value")
