"""Aggregate-objective (AOF) trade-offs on the 8x4 grid with the FE oracle.

Single-property runs supply the normalizers; each weighted run then reports
its normalized objectives F = property / single-objective maximum.

Run: python demos/multi_objective.py
"""
from checkerboard import ga

predict = ga.fem_predictor(8, 4)
params = ga.GaParams(generation_size=128, gene_count=32, max_generations=60)
maxima, _ = ga.single_objective_maxima(predict, params, seed=0)
print("single-objective maxima:", [round(m, 4) for m in maxima])

for w in [(0.5, 0.5, 0.0), (0.5, 0.0, 0.5), (0.0, 0.5, 0.5), (0.333, 0.333, 0.333)]:
    run = ga.optimize_aof(predict, ga.AofWeights(*w).with_normalizers(maxima), params, seed=0)
    F = run.objectives
    print(f"weights {w}: F_m {F[0]:.3f} F_s {F[1]:.3f} F_t {F[2]:.3f}, "
          f"soft fraction {run.result.best.mean():.2f}")
