"""Training the network for a single input coefficient.

Every coefficient gets its own small regression network: principal
component scores in, one number in [0, 1] out.  This script trains the
model for a_{4,4} on virtual regions from a synthetic economy, prints the
learning curve next to the cyclical learning rate, and then checks the
predictions on regions the network never saw.

Run:  python demos/03_one_coefficient_network.py [epochs]
"""
import sys

import numpy as np

from iomix.features import ClassTotals, TargetTransform, feature_matrix, fit_pca, inverse_transform, project, transform_target
from iomix.iodata import region_layout
from iomix.mixup import FixedPop15, MixupConfig, draw_dataset, standardize_by_pop15
from iomix.neuralnet import MLPConfig, TrainConfig, predict, train
from iomix.pipeline.run import coefficient_rows
from iomix.synthetic import make_world

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 40
world = make_world(seed=2)
std = [standardize_by_pop15(r) for r in world.pool]
layout = region_layout(world.pool[0])

draws = draw_dataset(std, MixupConfig(count=3000, target_mode=FixedPop15(world.nation.pop15), seed=5))
vectors = draws.vectors(np.stack([r.to_vector() for r in std]))
F = feature_matrix(vectors, layout, ClassTotals.from_pool(world.pool))
cell = 3 * 12 + 3  # a_{4,4}, row-major
a = coefficient_rows(vectors, layout)[:, cell]

fit, val, test = slice(0, 2000), slice(2000, 2500), slice(2500, 3000)
pca = fit_pca(F[fit], n_components=20)
X = project(pca, F)
t = TargetTransform.fit(a[fit])
y = transform_target(a, t)

mcfg = MLPConfig(input_dim=20, blocks=3, block_width=64)
tcfg = TrainConfig(max_epochs=epochs, seed=0)
params, history = train((X[fit], y[fit]), (X[val], y[val]), mcfg, tcfg)

print("epoch   train loss   val MSE     lr at epoch end")
per_epoch = len(history.lr) // len(history.val_loss)
for e in range(0, len(history.val_loss), max(1, len(history.val_loss) // 10)):
    lr = history.lr[(e + 1) * per_epoch - 1]
    print(f"{e:5d}   {history.train_loss[e]:.6f}     {history.val_loss[e]:.6f}    {lr:.5f}")
print(f"best epoch {history.best_epoch}; stopped early: {history.stopped_early}")
print(f"validation MSE / variance of the transformed target: {min(history.val_loss) / np.var(y[val]):.3f}")

pred = predict(params, X[test], t, mcfg.bn_eps)
print(f"\nheld-out regions: true a_44 spans {a[test].min():.4f}..{a[test].max():.4f}")
print(f"RMSE {np.sqrt(np.mean((pred - a[test]) ** 2)):.5f}; always predicting the mean would give {a[test].std():.5f}")
print(f"predictions stay inside [{inverse_transform(0.0, t):.4f}, {inverse_transform(1.0, t):.4f}] by construction")
