"""Least-squares linear surrogate and its per-element weights.

Run: python demos/linear_baseline.py
"""
import numpy as np

from checkerboard import dataset as ds, fem, linear, seeding

data = ds.generate(5000, grid=(8, 4), seed=0)
train, test = ds.split(data, 0.9, seeding.child_seed(0, "split"))
tip = fem.HalfModelMesh.for_grid(8, 4).crack_tip_element

for prop, model in linear.fit_all(train).items():
    print(f"{prop}: R2 {linear.r_squared(model, train):.3f}, "
          f"test MAPE {linear.holdout_mape(model, test):.1f}%, "
          f"crack-tip weight {model.weights[tip]:+.4f}")
    print(np.array2string(model.weight_grid(), precision=3, suppress_small=True))
