"""Genetic-algorithm design on the 4x2 grid, checked against exhaustive search.

Run: python demos/ga_design.py
"""
import numpy as np

from checkerboard import dataset as ds, ga

exhaustive = ds.label_all(4, 2)
predict = ga.fem_predictor(4, 2)
params = ga.GaParams(generation_size=32, gene_count=8, max_generations=30)

for prop, k in ga.PROPERTY_INDEX.items():
    best = exhaustive.bits[np.argmax(exhaustive.labels[:, k])]
    run = ga.evolve(params, ga.property_oracle(predict, prop), seed=1)
    print(f"{prop:>9s}: GA {run.best_fitness:.5f} in {run.generations} generations, "
          f"exhaustive {exhaustive.labels[:, k].max():.5f}")
    print(run.best.reshape(2, 4), "\n", best.reshape(2, 4))
