"""Truncated grid, the banded operator -d^2/dt^2 + L(t) and nodal quadrature.

State vectors are flat arrays of length ``n * N`` in node-major order:
entry ``i * N + k`` is component ``k`` at node ``t_i``.  Boundary values at
``t = +-T`` are zero and not stored.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .problem import ProblemSpec


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    T: float
    n: int
    N: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise GridError(f"grid.T must be positive, got {self.T}")
        if self.n < 3:
            raise GridError(f"grid.n must be >= 3, got {self.n}")
        if self.N < 1:
            raise GridError(f"system dimension N must be >= 1, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.T / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        # symmetric by construction: t_i = -t_{n+1-i}
        k = np.arange(1, self.n + 1) - (self.n + 1) / 2.0
        return k * self.h

    @property
    def size(self) -> int:
        return self.n * self.N

    def nodal(self, u: np.ndarray) -> np.ndarray:
        """View a flat state vector as an (n, N) array."""
        u = np.asarray(u)
        if u.shape[-1] != self.size:
            raise GridError(f"state vector length {u.shape[-1]} != n*N = {self.size}")
        return u.reshape(u.shape[:-1] + (self.n, self.N))

    def refined(self) -> "Grid":
        """Same T, half the spacing; old nodes are the odd-indexed new ones."""
        return Grid(self.T, 2 * self.n + 1, self.N)

    def enlarged(self, factor: float = 1.5) -> "Grid":
        """Domain scaled by ``factor`` at (as nearly as possible) the same h."""
        T = self.T * factor
        n = int(round(2 * T / self.h)) - 1
        return Grid(T, n, self.N)

    def l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.h * np.dot(u, u)))


def build_grid(T: float, n: int, N: int = 1) -> Grid:
    return Grid(float(T), int(n), int(N))


@dataclass(frozen=True)
class DiscreteOperator:
    """Block-tridiagonal symmetric matrix with blocks -I/h^2 and 2I/h^2 + L(t_i).

    ``banded`` is LAPACK lower banded storage with bandwidth ``N``.
    """

    grid: Grid
    banded: np.ndarray
    blocks: np.ndarray

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        m = self.grid.size
        N = self.grid.N
        ab = self.banded
        diags = [ab[0]]
        offsets = [0]
        for k in range(1, N + 1):
            diags += [ab[k, : m - k], ab[k, : m - k]]
            offsets += [-k, k]
        return sp.diags(diags, offsets, shape=(m, m), format="csr")

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def shifted(self, shift_blocks: np.ndarray) -> "DiscreteOperator":
        """Operator with ``shift_blocks[i]`` added to the i-th diagonal block."""
        return _from_blocks(self.grid, self.blocks + shift_blocks)


def _from_blocks(grid: Grid, blocks: np.ndarray) -> DiscreteOperator:
    n, N, h = grid.n, grid.N, grid.h
    m = n * N
    ab = np.zeros((N + 1, m))
    # lower band k holds A[j + k, j]
    for k in range(N):
        # within-block entries (alpha + k, alpha) at each node
        vals = np.zeros((n, N))
        vals[:, : N - k] = blocks[:, np.arange(k, N), np.arange(N - k)]
        ab[k] = vals.ravel()
    ab[0] += 2.0 / h**2
    # coupling (i+1, alpha) <- (i, alpha) sits at offset N
    ab[N, : m - N] += -1.0 / h**2
    return DiscreteOperator(grid=grid, banded=ab, blocks=blocks)


def assemble_operator(spec: ProblemSpec, grid: Grid) -> DiscreteOperator:
    if grid.N != spec.dim:
        raise GridError(f"grid.N = {grid.N} but the problem has N = {spec.dim}")
    Ls = spec.L.values(grid.nodes)
    blocks = 0.5 * (Ls + Ls.transpose(0, 2, 1))
    return _from_blocks(grid, blocks)


def _check(u: np.ndarray, grid: Grid):
    if np.shape(u) != (grid.size,):
        raise GridError(f"state vector shape {np.shape(u)} does not match grid size {grid.size}")


def quad_form_a(u: np.ndarray, v: np.ndarray, op: DiscreteOperator) -> float:
    """Discrete a(u, v) = int <u', v'> + <L u, v> dt."""
    _check(u, op.grid)
    _check(v, op.grid)
    return float(np.dot(u, op.apply(v)) * op.grid.h)


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Composite trapezoid over [-T, T] for nodal values that vanish at +-T."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise GridError(f"expected {grid.n} nodal values, got shape {f.shape}")
    return float(grid.h * np.sum(f))
