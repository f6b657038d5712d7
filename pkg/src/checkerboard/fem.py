"""Plane-stress finite elements for the cracked checkerboard half model.

The plate is ``L x L`` with ``L = 1`` and unit thickness. Only the upper
half is meshed: ``nx x ny`` square bilinear elements with ``nx = 2 ny``.
The bottom edge is the symmetry line; its first ``round(0.25 nx)`` element
edges are the crack faces (traction free), the rest is the ligament
(``u_y = 0``). The top edge is pulled up by a prescribed ``u_y``.

Node ``(i, j)`` (column ``i``, row ``j``) has index ``j * (nx + 1) + i``
and DOFs ``(2k, 2k + 1)`` for ``(u_x, u_y)``. Element ``(r, c)`` has index
``r * nx + c``, the same as the genome index in :mod:`.microstructure`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .microstructure import Microstructure

CRACK_FRACTION = 0.25
GAUSS = 1.0 / np.sqrt(3.0)
# local coordinates of the nodes and of the 2x2 Gauss points, counterclockwise
NODE_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
GAUSS_XI = GAUSS * NODE_XI


class FemError(RuntimeError):
    """Degenerate boundary value problem."""


def _row_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis in a fixed sequential order.

    numpy picks its reduction order from the array layout, which would make
    a sample's result depend on the batch it was solved in.
    """
    out = a[..., 0].copy()
    for j in range(1, a.shape[-1]):
        out += a[..., j]
    return out


def _batched_matvec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.stack([A[b] @ x[b] for b in range(len(x))]) if len(x) else np.zeros(x.shape)


@dataclass(frozen=True)
class ElasticMaterial:
    """Isotropic linear-elastic phase with a von Mises strain failure limit.

    ``youngs_modulus`` is in GPa; the other two fields are dimensionless.
    """

    youngs_modulus: float
    poisson_ratio: float
    failure_strain: float

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError(f"youngs_modulus must be > 0, got {self.youngs_modulus}")
        if not 0 < self.poisson_ratio < 0.5:
            raise ValueError(f"poisson_ratio must lie in (0, 0.5), got {self.poisson_ratio}")
        if not self.failure_strain > 0:
            raise ValueError(f"failure_strain must be > 0, got {self.failure_strain}")

    @property
    def bulk_modulus(self) -> float:
        """3D bulk modulus ``E / (3 (1 - 2 nu))``; not used by the plane-stress solver."""
        return self.youngs_modulus / (3.0 * (1.0 - 2.0 * self.poisson_ratio))

    def scaled(self, factor: float) -> "ElasticMaterial":
        return ElasticMaterial(self.youngs_modulus * factor, self.poisson_ratio, self.failure_strain)


STIFF = ElasticMaterial(youngs_modulus=1.0, poisson_ratio=1.0 / 3.0, failure_strain=0.10)
SOFT = ElasticMaterial(youngs_modulus=0.1, poisson_ratio=1.0 / 3.0, failure_strain=1.00)


def plane_stress_matrix(material: ElasticMaterial) -> np.ndarray:
    """Maps ``(eps11, eps22, gamma12)`` to ``(sig11, sig22, sig12)``."""
    E, nu = material.youngs_modulus, material.poisson_ratio
    return E / (1.0 - nu ** 2) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])


def strain_displacement(element_size: float) -> np.ndarray:
    """B matrices of a square bilinear element at its four Gauss points.

    Returns an array of shape ``(4, 3, 8)``; rows give
    ``(eps11, eps22, gamma12)`` with engineering shear.
    """
    B = np.zeros((4, 3, 8))
    for g, (xi, eta) in enumerate(GAUSS_XI):
        dN_dxi = 0.25 * NODE_XI[:, 0] * (1.0 + NODE_XI[:, 1] * eta)
        dN_deta = 0.25 * NODE_XI[:, 1] * (1.0 + NODE_XI[:, 0] * xi)
        dN_dx = dN_dxi * 2.0 / element_size
        dN_dy = dN_deta * 2.0 / element_size
        B[g, 0, 0::2] = dN_dx
        B[g, 1, 1::2] = dN_dy
        B[g, 2, 0::2] = dN_dy
        B[g, 2, 1::2] = dN_dx
    return B


def element_stiffness(material: ElasticMaterial, element_size: float = 1.0) -> np.ndarray:
    """8x8 stiffness of a square bilinear plane-stress element, 2x2 Gauss rule."""
    B = strain_displacement(element_size)
    D = plane_stress_matrix(material)
    det_j = (element_size / 2.0) ** 2
    return np.einsum("gki,kl,glj->ij", B, D, B) * det_j


@dataclass(frozen=True)
class HalfModelMesh:
    """Structured mesh of the upper half of the cracked plate."""

    nx: int
    ny: int
    crack_elements: int

    def __post_init__(self):
        if self.nx != 2 * self.ny or self.ny < 1:
            raise ValueError(f"half model needs nx = 2 ny, got {self.nx}x{self.ny}")
        if not 0 <= self.crack_elements < self.nx:
            raise ValueError(f"crack must leave a ligament, got {self.crack_elements} of {self.nx}")

    @classmethod
    def for_grid(cls, width: int, height: int, crack_fraction: float = CRACK_FRACTION):
        return cls(width, height, int(round(crack_fraction * width)))

    @property
    def element_size(self) -> float:
        return 1.0 / self.nx

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def width(self) -> float:
        return self.nx * self.element_size

    @property
    def height(self) -> float:
        return self.ny * self.element_size

    @property
    def crack_tip_element(self) -> int:
        """First bonded element on the symmetry line (row 0)."""
        return self.crack_elements

    def node(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    @cached_property
    def node_coordinates(self) -> np.ndarray:
        j, i = np.divmod(np.arange(self.n_nodes), self.nx + 1)
        return np.column_stack([i, j]) * self.element_size

    @cached_property
    def element_nodes(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_elements), self.nx)
        n0 = r * (self.nx + 1) + c
        return np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])

    @cached_property
    def element_dofs(self) -> np.ndarray:
        n = self.element_nodes
        return np.stack([2 * n, 2 * n + 1], axis=-1).reshape(self.n_elements, 8)

    @cached_property
    def top_dofs(self) -> np.ndarray:
        return np.array([2 * self.node(i, self.ny) + 1 for i in range(self.nx + 1)])

    @cached_property
    def ligament_dofs(self) -> np.ndarray:
        return np.array([2 * self.node(i, 0) + 1 for i in range(self.crack_elements, self.nx + 1)])

    @cached_property
    def pinned_dof(self) -> int:
        # far end of the ligament, removes the horizontal rigid-body mode
        return 2 * self.node(self.nx, 0)

    @cached_property
    def prescribed_dofs(self) -> np.ndarray:
        return np.concatenate([self.ligament_dofs, [self.pinned_dof], self.top_dofs])

    @cached_property
    def free_dofs(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_dofs), self.prescribed_dofs)

    def prescribed_values(self, applied_displacement: float) -> np.ndarray:
        values = np.zeros(len(self.prescribed_dofs))
        values[-len(self.top_dofs):] = applied_displacement
        return values


@dataclass(frozen=True)
class BatchSolution:
    """Displacement fields for a stack of microstructures on one mesh.

    ``forces`` is ``K u``: reactions at prescribed DOFs and the (near zero)
    equilibrium residual at free DOFs.
    """

    mesh: HalfModelMesh
    bits: np.ndarray
    stiff: ElasticMaterial
    soft: ElasticMaterial
    applied_displacement: float
    stiffness: np.ndarray
    displacements: np.ndarray
    forces: np.ndarray

    def __len__(self):
        return len(self.displacements)

    def top_reaction(self) -> np.ndarray:
        return _row_sum(self.forces[:, self.mesh.top_dofs])

    def ligament_reaction(self) -> np.ndarray:
        return _row_sum(self.forces[:, self.mesh.ligament_dofs])

    def strain_energy(self) -> np.ndarray:
        return 0.5 * _row_sum(self.displacements * self.forces)

    def boundary_work(self) -> np.ndarray:
        p = self.mesh.prescribed_dofs
        return 0.5 * _row_sum(self.displacements[:, p] * self.forces[:, p])

    def relative_residual(self) -> np.ndarray:
        f = self.mesh.free_dofs
        load = np.linalg.norm(self.forces[:, self.mesh.prescribed_dofs], axis=1)
        return np.linalg.norm(self.forces[:, f], axis=1) / load

    def element_state(self, element: int) -> "ElementState":
        dofs = self.mesh.element_dofs[element]
        u_e = self.displacements[:, dofs]
        B = strain_displacement(self.mesh.element_size)
        eng = _row_sum(B[None] * u_e[:, None, None, :])
        soft = self.bits[:, element].astype(bool)
        E = np.where(soft, self.soft.youngs_modulus, self.stiff.youngs_modulus)
        nu = np.where(soft, self.soft.poisson_ratio, self.stiff.poisson_ratio)
        return ElementState.from_engineering(eng, E, nu)

    def __getitem__(self, k: int) -> "Solution":
        return Solution(self, k)


@dataclass(frozen=True)
class Solution:
    """One microstructure's view into a :class:`BatchSolution`."""

    batch: BatchSolution
    index: int

    @property
    def mesh(self) -> HalfModelMesh:
        return self.batch.mesh

    @property
    def displacements(self) -> np.ndarray:
        return self.batch.displacements[self.index]

    @property
    def forces(self) -> np.ndarray:
        return self.batch.forces[self.index]

    @property
    def stiffness(self) -> np.ndarray:
        return self.batch.stiffness[self.index]

    def top_reaction(self) -> float:
        return float(self.batch.top_reaction()[self.index])

    def ligament_reaction(self) -> float:
        return float(self.batch.ligament_reaction()[self.index])

    def strain_energy(self) -> float:
        return float(self.batch.strain_energy()[self.index])

    def boundary_work(self) -> float:
        return float(self.batch.boundary_work()[self.index])

    def relative_residual(self) -> float:
        return float(self.batch.relative_residual()[self.index])

    def element_state(self, element: int) -> "ElementState":
        return self.batch.element_state(element)[self.index]


@dataclass(frozen=True)
class ElementState:
    """Strains and stresses at the Gauss points of one element.

    ``strains[..., g, :]`` holds ``(eps11, eps22, eps12, eps33)`` with the
    tensorial shear; ``stresses[..., g, :]`` holds ``(sig11, sig22, sig12)``.
    Leading axes, when present, index a batch.
    """

    strains: np.ndarray
    stresses: np.ndarray

    @classmethod
    def from_engineering(cls, eng, youngs_modulus, poisson_ratio) -> "ElementState":
        eng = np.asarray(eng, dtype=float)
        E = np.asarray(youngs_modulus, dtype=float)[..., None]
        nu = np.asarray(poisson_ratio, dtype=float)[..., None]
        e11, e22, g12 = eng[..., 0], eng[..., 1], eng[..., 2]
        scale = E / (1.0 - nu ** 2)
        s11 = scale * (e11 + nu * e22)
        s22 = scale * (nu * e11 + e22)
        s12 = scale * (1.0 - nu) / 2.0 * g12
        e33 = -nu / E * (s11 + s22)
        strains = np.stack([e11, e22, 0.5 * g12, e33], axis=-1)
        return cls(strains, np.stack([s11, s22, s12], axis=-1))

    def __getitem__(self, k) -> "ElementState":
        return ElementState(self.strains[k], self.stresses[k])

    def mean_strains(self) -> np.ndarray:
        return _row_sum(np.moveaxis(self.strains, -2, -1)) / self.strains.shape[-2]

    def von_mises(self):
        """Von Mises strain of the Gauss-point-averaged strain tensor."""
        e11, e22, e12, e33 = np.moveaxis(self.mean_strains(), -1, 0)
        return von_mises_strain(e11, e22, e33, e12)


def von_mises_strain(e11, e22, e33, e12):
    """``(2/3) sqrt((3/2)(e11^2 + e22^2 + e33^2) + (3/4) e12^2)``, ``e12`` tensorial."""
    e11, e22, e33, e12 = (np.asarray(v, dtype=float) for v in (e11, e22, e33, e12))
    return 2.0 / 3.0 * np.sqrt(1.5 * (e11 ** 2 + e22 ** 2 + e33 ** 2) + 0.75 * e12 ** 2)


def assemble(mesh: HalfModelMesh, bits: np.ndarray, stiff: ElasticMaterial = STIFF,
             soft: ElasticMaterial = SOFT) -> np.ndarray:
    """Global stiffness matrices, shape ``(batch, n_dofs, n_dofs)``."""
    bits = np.atleast_2d(bits)
    ke_stiff = element_stiffness(stiff, mesh.element_size)
    ke_soft = element_stiffness(soft, mesh.element_size)
    K = np.zeros((len(bits), mesh.n_dofs, mesh.n_dofs))
    for e, dofs in enumerate(mesh.element_dofs):
        ke = np.where(bits[:, e, None, None] == 1, ke_soft, ke_stiff)
        K[:, dofs[:, None], dofs] += ke
    return K


def solve_batch(mesh: HalfModelMesh, bits: np.ndarray, applied_displacement: float,
                stiff: ElasticMaterial = STIFF, soft: ElasticMaterial = SOFT) -> BatchSolution:
    """Solve the half-model BVP for every genome row of ``bits``."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    if bits.shape[1] != mesh.n_elements:
        raise ValueError(f"genome length {bits.shape[1]} does not match {mesh.n_elements} elements")
    if not applied_displacement > 0:
        raise ValueError("applied_displacement must be positive")
    K = assemble(mesh, bits, stiff, soft)
    free, pres = mesh.free_dofs, mesh.prescribed_dofs
    u = np.zeros((len(bits), mesh.n_dofs))
    u[:, pres] = mesh.prescribed_values(applied_displacement)
    # only the top-edge DOFs carry a nonzero prescribed value
    rhs = -applied_displacement * _row_sum(K[:, free[:, None], mesh.top_dofs])
    try:
        Kff = K[:, free[:, None], free]
        u[:, free] = np.stack([np.linalg.solve(Kff[b], rhs[b]) for b in range(len(bits))])
    except np.linalg.LinAlgError as exc:
        raise FemError("singular stiffness matrix; boundary conditions leave a rigid-body mode") from exc
    forces = _batched_matvec(K, u)
    return BatchSolution(mesh, bits, stiff, soft, float(applied_displacement), K, u, forces)


def solve_displacements(mesh: HalfModelMesh, microstructure: Microstructure,
                        applied_displacement: float, stiff: ElasticMaterial = STIFF,
                        soft: ElasticMaterial = SOFT) -> Solution:
    if (microstructure.width, microstructure.height) != (mesh.nx, mesh.ny):
        raise ValueError(f"{microstructure!r} does not fit a {mesh.nx}x{mesh.ny} mesh")
    return solve_batch(mesh, microstructure.bits[None], applied_displacement, stiff, soft)[0]


@dataclass(frozen=True)
class CompositeProperties:
    """Effective properties of the cracked specimen, all in GPa."""

    modulus: float
    strength: float
    toughness: float

    NAMES = ("modulus", "strength", "toughness")

    def as_array(self) -> np.ndarray:
        return np.array([self.modulus, self.strength, self.toughness])

    @classmethod
    def from_array(cls, values) -> "CompositeProperties":
        m, s, t = (float(v) for v in values)
        return cls(m, s, t)


def properties_from_solution(solution: BatchSolution, nominal_strain: float) -> np.ndarray:
    """``(batch, 3)`` array of modulus, strength and toughness.

    The solve is linear, so the response is scaled to the load at which the
    crack-tip element reaches its failure strain.
    """
    mesh = solution.mesh
    stress = solution.top_reaction() / mesh.width
    modulus = stress / nominal_strain
    tip = mesh.crack_tip_element
    vm = solution.element_state(tip).von_mises()
    if np.any(vm <= 0):
        raise FemError("zero von Mises strain at the crack tip")
    tip_soft = solution.bits[:, tip].astype(bool)
    eps_f = np.where(tip_soft, solution.soft.failure_strain, solution.stiff.failure_strain)
    scale = eps_f / vm
    strength = modulus * nominal_strain * scale
    toughness = 0.5 * strength * nominal_strain * scale
    return np.column_stack([modulus, strength, toughness])


def evaluate_batch(bits: np.ndarray, width: int, height: int, stiff: ElasticMaterial = STIFF,
                   soft: ElasticMaterial = SOFT, nominal_strain: float = 1.0,
                   crack_fraction: float = CRACK_FRACTION, chunk: int = 64) -> np.ndarray:
    """Properties for each genome row, ``(count, 3)``. Work is done in chunks to bound memory."""
    mesh = HalfModelMesh.for_grid(width, height, crack_fraction)
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    out = np.empty((len(bits), 3))
    delta = nominal_strain * mesh.height
    for start in range(0, len(bits), chunk):
        sol = solve_batch(mesh, bits[start:start + chunk], delta, stiff, soft)
        out[start:start + chunk] = properties_from_solution(sol, nominal_strain)
    return out


def evaluate_properties(microstructure: Microstructure, stiff: ElasticMaterial = STIFF,
                        soft: ElasticMaterial = SOFT, nominal_strain: float = 1.0,
                        crack_fraction: float = CRACK_FRACTION) -> CompositeProperties:
    """Modulus, strength and toughness of one cracked microstructure."""
    values = evaluate_batch(microstructure.bits[None], microstructure.width, microstructure.height,
                            stiff, soft, nominal_strain, crack_fraction)
    return CompositeProperties.from_array(values[0])
