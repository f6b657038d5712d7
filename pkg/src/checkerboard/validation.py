"""Analytical self-checks of the FE solver, reported as measured vs expected."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .microstructure import Microstructure, random_bits


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    expected: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and abs(self.measured - self.expected) <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<40s} measured={self.measured:.6e} "
                f"expected={self.expected:.6e} tol={self.tolerance:.1e}")


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def rigid_body_modes(element_size: float = 1.0) -> np.ndarray:
    """Two translations and the infinitesimal rotation of one element, shape (3, 8)."""
    xy = (fem.NODE_XI + 1.0) * element_size / 2.0
    tx = np.tile([1.0, 0.0], 4)
    ty = np.tile([0.0, 1.0], 4)
    rot = np.column_stack([-xy[:, 1], xy[:, 0]]).reshape(-1)
    return np.stack([tx, ty, rot])


def run_fem_checks(grid=(8, 4), samples: int = 100, seed: int = 0,
                   stiff: fem.ElasticMaterial = fem.STIFF,
                   soft: fem.ElasticMaterial = fem.SOFT) -> list[CheckResult]:
    width, height = grid
    out = []
    ke = fem.element_stiffness(stiff, 1.0 / width)
    scale = np.abs(ke).max()
    out.append(CheckResult("element stiffness symmetric", np.abs(ke - ke.T).max() / scale, 0.0, 1e-14))
    out.append(CheckResult("element rigid-body null space",
                           np.abs(ke @ rigid_body_modes(1.0 / width).T).max() / scale, 0.0, 1e-12))
    eig = np.linalg.eigvalsh(0.5 * (ke + ke.T))
    out.append(CheckResult("element zero eigenvalues", float(np.sum(eig < 1e-12 * eig.max())), 3, 0))
    out.append(CheckResult("element positive semidefinite", float(eig.min() / eig.max()), 0.0, 1e-12))
    ke3 = fem.element_stiffness(stiff.scaled(3.0), 1.0 / width)
    out.append(CheckResult("element stiffness linear in E", np.abs(ke3 - 3.0 * ke).max() / np.abs(3.0 * ke).max(), 0.0, 1e-14))

    # crack-free homogeneous plate: uniform uniaxial strain
    mesh0 = fem.HalfModelMesh(width, height, 0)
    delta = 0.01
    sol0 = fem.solve_batch(mesh0, np.zeros((1, mesh0.n_elements), np.uint8), delta, stiff, soft)
    e22 = np.stack([sol0.element_state(e).strains[0, :, 1] for e in range(mesh0.n_elements)])
    out.append(CheckResult("patch test uniform strain", _rel(e22, delta / mesh0.height), 0.0, 1e-10))
    modulus0 = sol0.top_reaction()[0] / mesh0.width / (delta / mesh0.height)
    out.append(CheckResult("crack-free modulus / E", modulus0 / stiff.youngs_modulus, 1.0, 1e-10))

    stiff_props = fem.evaluate_properties(Microstructure.uniform(width, height, 0), stiff, soft).as_array()
    soft_props = fem.evaluate_properties(Microstructure.uniform(width, height, 1), stiff, soft).as_array()
    # equal Poisson ratios give identical strain fields; only E and the failure strain differ
    ratio = stiff_props / soft_props
    e_ratio = stiff.youngs_modulus / soft.youngs_modulus
    f_ratio = stiff.failure_strain / soft.failure_strain
    for k, name in enumerate(("modulus", "strength", "toughness")):
        out.append(CheckResult(f"all-stiff/all-soft {name} ratio", ratio[k] / (e_ratio * f_ratio ** k),
                               1.0, 1e-9))

    bits = random_bits(samples, width, height, seed)
    base = fem.evaluate_batch(bits, width, height, stiff, soft)
    scaled = fem.evaluate_batch(bits, width, height, stiff.scaled(2.5), soft.scaled(2.5))
    out.append(CheckResult("E scaling is linear", _rel(scaled, 2.5 * base), 0.0, 1e-12))
    out.append(CheckResult("toughness = strength^2 / (2 modulus)",
                           _rel(base[:, 2], base[:, 1] ** 2 / (2 * base[:, 0])), 0.0, 1e-12))

    mesh = fem.HalfModelMesh.for_grid(width, height)
    sol = fem.solve_batch(mesh, bits, mesh.height, stiff, soft)
    out.append(CheckResult("energy balance", _rel(sol.boundary_work(), sol.strain_energy()), 0.0, 1e-9))
    top, lig = sol.top_reaction(), sol.ligament_reaction()
    out.append(CheckResult("vertical equilibrium", float(np.max(np.abs(top + lig) / np.abs(top))), 0.0, 1e-10))
    out.append(CheckResult("linear-system residual", float(sol.relative_residual().max()), 0.0, 1e-10))
    out.append(CheckResult("global stiffness symmetric",
                           float(np.max(np.abs(sol.stiffness - sol.stiffness.transpose(0, 2, 1)))
                                 / np.abs(sol.stiffness).max()), 0.0, 1e-14))

    out.append(CheckResult("von Mises of unit eps11", float(fem.von_mises_strain(1, 0, 0, 0)),
                           np.sqrt(6.0) / 3.0, 1e-15))
    out.append(CheckResult("von Mises of unit eps12", float(fem.von_mises_strain(0, 0, 0, 1)),
                           np.sqrt(3.0) / 3.0, 1e-15))
    return out


def format_report(results: list[CheckResult]) -> str:
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
