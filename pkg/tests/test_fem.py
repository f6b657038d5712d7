import numpy as np
import pytest

import oracles
from checkerboard import fem
from checkerboard.microstructure import Microstructure, all_genomes, random_bits


def test_element_stiffness_matches_exact_integration():
    for E, nu in [(1.0, 1 / 3), (0.1, 1 / 3), (210.0, 0.3)]:
        expected = oracles.element_stiffness(E, nu)
        for h in (1.0, 0.125, 1 / 16):
            got = fem.element_stiffness(fem.ElasticMaterial(E, nu, 0.1), h)
            assert np.allclose(got, expected, rtol=1e-13, atol=1e-15 * E)


def test_element_stiffness_properties():
    ke = fem.element_stiffness(fem.STIFF, 0.25)
    assert np.allclose(ke, ke.T, atol=1e-15)
    eig = np.linalg.eigvalsh(ke)
    assert np.sum(np.abs(eig) < 1e-12) == 3
    assert eig.min() > -1e-12


def test_material_validation():
    with pytest.raises(ValueError):
        fem.ElasticMaterial(-1.0, 0.3, 0.1)
    with pytest.raises(ValueError):
        fem.ElasticMaterial(1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        fem.ElasticMaterial(1.0, 0.3, 0.0)
    assert fem.STIFF.bulk_modulus == pytest.approx(1.0 / (3 * (1 - 2 / 3)))


def test_mesh_counts():
    mesh = fem.HalfModelMesh.for_grid(8, 4)
    assert (mesh.nx, mesh.ny, mesh.crack_elements) == (8, 4, 2)
    assert mesh.n_dofs == 2 * 9 * 5
    assert mesh.crack_tip_element == 2
    assert mesh.width == pytest.approx(1.0)
    assert mesh.height == pytest.approx(0.5)
    assert len(mesh.ligament_dofs) == 7
    assert len(mesh.free_dofs) + len(mesh.prescribed_dofs) == mesh.n_dofs
    assert fem.HalfModelMesh.for_grid(16, 8).crack_elements == 4
    assert fem.HalfModelMesh.for_grid(4, 2).crack_elements == 1


@pytest.mark.parametrize("grid", [(8, 4), (16, 8)])
def test_displacements_match_dense_lagrange_solver(grid):
    w, h = grid
    bits = random_bits(1, w, h, seed=123)[0]
    mesh = fem.HalfModelMesh.for_grid(w, h)
    sol = fem.solve_displacements(mesh, Microstructure(w, h, bits), 0.37)
    problem = oracles.Problem(w, h)
    u_ref, top_ref = problem.solve(bits, 0.37)
    ref = problem.displacement_grid(u_ref)
    got = sol.displacements.reshape(h + 1, w + 1, 2)
    assert np.max(np.abs(got - ref)) <= 1e-9 * np.max(np.abs(ref))
    assert sol.top_reaction() == pytest.approx(top_ref, rel=1e-9)


def test_golden_table_4x2():
    bits, labels = oracles.read_golden()
    assert np.array_equal(bits, all_genomes(4, 2))
    got = fem.evaluate_batch(bits, 4, 2)
    assert np.max(np.abs(got / labels - 1)) <= 1e-9


def test_batch_matches_single_evaluation_bitwise():
    bits = random_bits(70, 8, 4, seed=1)
    batch = fem.evaluate_batch(bits, 8, 4, chunk=64)
    single = np.array([fem.evaluate_properties(Microstructure(8, 4, b)).as_array() for b in bits[:5]])
    assert np.array_equal(batch[:5], single)
    assert np.array_equal(batch, fem.evaluate_batch(bits, 8, 4, chunk=7))


def test_von_mises_strain_values():
    assert fem.von_mises_strain(0, 0, 0, 0) == 0.0
    assert fem.von_mises_strain(1, 0, 0, 0) == pytest.approx(np.sqrt(6) / 3, rel=1e-15)
    assert fem.von_mises_strain(0, 0, 0, 1) == pytest.approx(np.sqrt(3) / 3, rel=1e-15)


def test_equilibrium_and_residual():
    mesh = fem.HalfModelMesh.for_grid(16, 8)
    sol = fem.solve_batch(mesh, random_bits(8, 16, 8, seed=3), 0.5)
    top, lig = sol.top_reaction(), sol.ligament_reaction()
    assert np.all(np.abs(top + lig) <= 1e-10 * np.abs(top))
    assert sol.relative_residual().max() <= 1e-10


def test_ligament_fixed_and_crack_face_free():
    mesh = fem.HalfModelMesh.for_grid(8, 4)
    sol = fem.solve_displacements(mesh, Microstructure.uniform(8, 4, 0), 0.5)
    u = sol.displacements.reshape(5, 9, 2)
    assert np.all(u[0, 2:, 1] == 0.0)
    assert np.all(u[0, :2, 1] > 0)  # the crack face lifts off the symmetry line
    assert np.allclose(u[4, :, 1], 0.5)


def test_homogeneous_crack_free_modulus():
    mesh = fem.HalfModelMesh(8, 4, 0)
    sol = fem.solve_batch(mesh, np.zeros((1, 32), np.uint8), 0.01)
    modulus = sol.top_reaction()[0] / mesh.width / (0.01 / mesh.height)
    assert modulus == pytest.approx(1.0, rel=1e-10)


def test_all_stiff_all_soft_ratios():
    for w, h in [(4, 2), (8, 4), (16, 8)]:
        a = fem.evaluate_properties(Microstructure.uniform(w, h, 0)).as_array()
        b = fem.evaluate_properties(Microstructure.uniform(w, h, 1)).as_array()
        assert a / b == pytest.approx([10.0, 1.0, 0.1], rel=1e-9)


def test_modulus_bounded_by_homogeneous_values():
    bits = random_bits(200, 8, 4, seed=8)
    props = fem.evaluate_batch(bits, 8, 4)
    hi = fem.evaluate_properties(Microstructure.uniform(8, 4, 0)).modulus
    lo = fem.evaluate_properties(Microstructure.uniform(8, 4, 1)).modulus
    assert np.all(props[:, 0] <= hi * (1 + 1e-12))
    assert np.all(props[:, 0] >= lo * (1 - 1e-12))
    assert np.allclose(props[:, 2], props[:, 1] ** 2 / (2 * props[:, 0]), rtol=1e-12)


def test_modulus_monotone_in_soft_elements_4x2():
    bits = all_genomes(4, 2)
    modulus = fem.evaluate_batch(bits, 4, 2)[:, 0]
    codes = {b.tobytes(): m for b, m in zip(bits, modulus)}
    checks = 0
    for b, m in zip(bits, modulus):
        for k in range(8):
            if b[k] == 0:
                c = b.copy()
                c[k] = 1
                assert codes[c.tobytes()] <= m * (1 + 1e-12)
            checks += 1
    assert checks == 256 * 8


def test_energy_balance():
    mesh = fem.HalfModelMesh.for_grid(8, 4)
    sol = fem.solve_batch(mesh, random_bits(100, 8, 4, seed=0), mesh.height)
    assert np.allclose(sol.boundary_work(), sol.strain_energy(), rtol=1e-9)


def test_properties_round_trip():
    p = fem.CompositeProperties(1.0, 2.0, 3.0)
    assert fem.CompositeProperties.from_array(p.as_array()) == p
