"""Evaluate a few 8x4 microstructures with the FE half model.

Run: python demos/fem_properties.py
"""
import numpy as np

from checkerboard import fem
from checkerboard.microstructure import Microstructure

mesh = fem.HalfModelMesh.for_grid(8, 4)
print(f"8x4 half model: {mesh.n_elements} elements, {mesh.n_dofs} dofs, "
      f"crack-tip element {mesh.crack_tip_element}")

for label, bits in [("all stiff", 0), ("all soft", 1)]:
    props = fem.evaluate_properties(Microstructure.uniform(8, 4, bits))
    print(f"{label:>10s}: modulus {props.modulus:.4f} strength {props.strength:.4f} "
          f"toughness {props.toughness:.5f}")

# a soft element at the crack tip blunts the strain concentration
tip_soft = np.zeros(32, np.uint8)
tip_soft[mesh.crack_tip_element] = 1
props = fem.evaluate_properties(Microstructure(8, 4, tip_soft))
print(f"  tip soft: modulus {props.modulus:.4f} strength {props.strength:.4f} "
      f"toughness {props.toughness:.5f}")

rng = np.random.default_rng(0)
batch = rng.integers(0, 2, (5, 32), dtype=np.uint8)
print("random batch (modulus, strength, toughness):")
print(np.array2string(fem.evaluate_batch(batch, 8, 4), precision=4))
