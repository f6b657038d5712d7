"""Independent reference implementations used to freeze expected values.

Nothing here imports the package's FE code. The element stiffness is
integrated exactly with sympy, the global system is assembled with plain
loops over a column-major node numbering, boundary conditions are imposed
with Lagrange multipliers, and crack-tip strains are taken at the element
centroid (equal to the 2x2 Gauss average for a bilinear element).

Run ``python tests/oracles.py`` to regenerate ``tests/data/golden_4x2.csv``.
"""
from __future__ import annotations

import csv
import functools
from pathlib import Path

import numpy as np
import sympy as sp

DATA = Path(__file__).parent / "data"
GOLDEN_4X2 = DATA / "golden_4x2.csv"

STIFF = (1.0, 1.0 / 3.0, 0.10)
SOFT = (0.1, 1.0 / 3.0, 1.0)


@functools.lru_cache(maxsize=None)
def _symbolic_element():
    x, y, E, nu = sp.symbols("x y E nu", real=True)
    # unit square, nodes counter-clockwise from (0, 0)
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    N = [(1 - x if cx == 0 else x) * (1 - y if cy == 0 else y) for cx, cy in corners]
    B = sp.zeros(3, 8)
    for a, Na in enumerate(N):
        B[0, 2 * a] = sp.diff(Na, x)
        B[1, 2 * a + 1] = sp.diff(Na, y)
        B[2, 2 * a] = sp.diff(Na, y)
        B[2, 2 * a + 1] = sp.diff(Na, x)
    D = E / (1 - nu ** 2) * sp.Matrix([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
    K = (B.T * D * B).applyfunc(lambda f: sp.integrate(f, (x, 0, 1), (y, 0, 1)))
    Bc = B.subs({x: sp.Rational(1, 2), y: sp.Rational(1, 2)})
    return sp.lambdify((E, nu), K, "numpy"), np.array(Bc, dtype=float)


def element_stiffness(E: float, nu: float) -> np.ndarray:
    """8x8 plane-stress stiffness of a square bilinear element (size independent in 2D)."""
    return np.array(_symbolic_element()[0](E, nu), dtype=float)


def centroid_B(h: float) -> np.ndarray:
    return _symbolic_element()[1] / h


class Problem:
    """Cracked half model with ``nx = width`` by ``ny = height`` elements on a unit-width plate."""

    def __init__(self, width: int, height: int, crack: int | None = None):
        self.nx, self.ny = width, height
        self.h = 1.0 / width
        self.crack = round(0.25 * width) if crack is None else crack

    # column-major numbering: node (i, j) -> i * (ny + 1) + j
    def node(self, i, j):
        return i * (self.ny + 1) + j

    @property
    def ndof(self):
        return 2 * (self.nx + 1) * (self.ny + 1)

    def element_nodes(self, col, row):
        return [self.node(col, row), self.node(col + 1, row),
                self.node(col + 1, row + 1), self.node(col, row + 1)]

    def constraints(self, delta):
        """List of (dof, value, group)."""
        out = []
        for i in range(self.nx + 1):
            out.append((2 * self.node(i, self.ny) + 1, delta, "top"))
        for i in range(self.crack, self.nx + 1):
            out.append((2 * self.node(i, 0) + 1, 0.0, "ligament"))
        out.append((2 * self.node(self.nx, 0), 0.0, "pin"))
        return out

    def solve(self, genome, delta, stiff=STIFF, soft=SOFT):
        """Displacements (column-major numbering) and the top-edge reaction."""
        genome = np.asarray(genome).reshape(self.ny, self.nx)
        K = np.zeros((self.ndof, self.ndof))
        kes = {0: element_stiffness(*stiff[:2]), 1: element_stiffness(*soft[:2])}
        for row in range(self.ny):
            for col in range(self.nx):
                ke = kes[int(genome[row, col])]
                dofs = [d for n in self.element_nodes(col, row) for d in (2 * n, 2 * n + 1)]
                for a in range(8):
                    for b in range(8):
                        K[dofs[a], dofs[b]] += ke[a, b]
        cons = self.constraints(delta)
        m = len(cons)
        A = np.zeros((self.ndof + m, self.ndof + m))
        rhs = np.zeros(self.ndof + m)
        A[:self.ndof, :self.ndof] = K
        for k, (dof, value, _) in enumerate(cons):
            A[self.ndof + k, dof] = 1.0
            A[dof, self.ndof + k] = 1.0
            rhs[self.ndof + k] = value
        sol = np.linalg.solve(A, rhs)
        u, lam = sol[:self.ndof], sol[self.ndof:]
        top = -sum(lam[k] for k, c in enumerate(cons) if c[2] == "top")
        return u, top

    def displacement_grid(self, u):
        """``(ny + 1, nx + 1, 2)`` array, independent of the node numbering."""
        out = np.zeros((self.ny + 1, self.nx + 1, 2))
        for i in range(self.nx + 1):
            for j in range(self.ny + 1):
                n = self.node(i, j)
                out[j, i] = u[2 * n], u[2 * n + 1]
        return out

    def properties(self, genome, stiff=STIFF, soft=SOFT):
        genome = np.asarray(genome).reshape(self.ny, self.nx)
        height = self.ny * self.h
        delta = height  # unit nominal strain
        u, top = self.solve(genome, delta, stiff, soft)
        modulus = top / 1.0 / 1.0
        col = self.crack
        mat = soft if genome[0, col] else stiff
        E, nu, ef = mat
        ue = np.array([u[d] for n in self.element_nodes(col, 0) for d in (2 * n, 2 * n + 1)])
        e11, e22, g12 = centroid_B(self.h) @ ue
        s11 = E / (1 - nu ** 2) * (e11 + nu * e22)
        s22 = E / (1 - nu ** 2) * (nu * e11 + e22)
        e33 = -nu / E * (s11 + s22)
        e12 = g12 / 2
        vm = 2 / 3 * np.sqrt(1.5 * (e11 ** 2 + e22 ** 2 + e33 ** 2) + 0.75 * e12 ** 2)
        s = ef / vm
        strength = modulus * s
        return modulus, strength, 0.5 * strength * s


def genome_from_index(index: int, n: int) -> np.ndarray:
    """Gene 0 is the most significant bit."""
    return np.array([(index >> (n - 1 - k)) & 1 for k in range(n)], dtype=np.uint8)


def golden_table(width=4, height=2):
    p = Problem(width, height)
    n = width * height
    return [(idx, genome_from_index(idx, n), p.properties(genome_from_index(idx, n)))
            for idx in range(2 ** n)]


def write_golden(path=GOLDEN_4X2):
    path.parent.mkdir(exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "genome", "modulus", "strength", "toughness"])
        for idx, g, props in golden_table():
            w.writerow([idx, "".join(map(str, g))] + [repr(float(v)) for v in props])


def read_golden(path=GOLDEN_4X2):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    bits = np.array([[int(c) for c in r["genome"]] for r in rows], dtype=np.uint8)
    labels = np.array([[float(r[k]) for k in ("modulus", "strength", "toughness")] for r in rows])
    return bits, labels


if __name__ == "__main__":
    write_golden()
    print(f"wrote {GOLDEN_4X2}")
