"""The action Phi(u) = ||u+||^2/2 - ||u-||^2/2 - Psi(u) and its energy gradient.

Everything is evaluated in eigen-coordinates of a complete decomposition:
``c = dec.coefficients(u)``.  The energy inner product is
``(u, v) = sum_i w_i c_i d_i`` with ``w_i = |lambda_i|`` (1 on the kernel).
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .discretization import Grid, GridError, integrate
from .problem import ProblemSpec
from .spectrum import SpectralDecomposition, SpectrumError, SubspaceSplit


class EnergyFunctional:
    """Phi and its energy gradient on the span of a complete decomposition."""

    def __init__(self, spec: ProblemSpec, dec: SpectralDecomposition, split: SubspaceSplit):
        if not dec.complete:
            raise SpectrumError("the energy gradient needs a complete decomposition")
        if dec.grid.N != spec.dim:
            raise GridError("decomposition grid and problem dimension differ")
        self.spec = spec
        self.dec = dec
        self.split = split
        self.grid = dec.grid
        self.lam = dec.eigenvalues
        self.weights = dec.weights(split.zero_tol)
        sign = np.sign(self.lam)
        sign[np.abs(self.lam) <= split.zero_tol] = 0.0
        self.sign = sign
        self._E = dec.vectors

    # coordinate changes -------------------------------------------------
    def coeffs(self, u: np.ndarray) -> np.ndarray:
        return self.dec.coefficients(u)

    def nodal(self, c: np.ndarray) -> np.ndarray:
        return self._E @ c

    def norm(self, c: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.weights * c * c)))

    def inner(self, c: np.ndarray, d: np.ndarray) -> float:
        return float(np.sum(self.weights * c * d))

    # evaluations on nodal vectors -----------------------------------------
    def psi_nodal(self, u: np.ndarray) -> float:
        g = self.grid
        W = self.spec.potential.W(g.nodes, g.nodal(u))
        return integrate(W, g)

    def phi_c(self, c: np.ndarray) -> float:
        u = self.nodal(c)
        return 0.5 * float(np.sum(self.sign * self.weights * c * c)) - self.psi_nodal(u)

    def grad_c(self, c: np.ndarray) -> np.ndarray:
        """Energy-Riesz representer of Phi'(u) in eigen-coordinates."""
        g = self.grid
        u = self.nodal(c)
        Wu = self.spec.potential.W_u(g.nodes, g.nodal(u)).ravel()
        b = self.coeffs(Wu)
        return self.sign * c - b / self.weights

    def phi_and_grad_c(self, c: np.ndarray):
        g = self.grid
        u = self.nodal(c)
        pot = self.spec.potential
        x = g.nodal(u)
        psi = integrate(pot.W(g.nodes, x), g)
        b = self.coeffs(pot.W_u(g.nodes, x).ravel())
        phi = 0.5 * float(np.sum(self.sign * self.weights * c * c)) - psi
        return phi, self.sign * c - b / self.weights

    def phi_many_c(self, C: np.ndarray) -> np.ndarray:
        """Phi at each row of ``C`` (one synthesis as a matrix product)."""
        C = np.atleast_2d(C)
        U = (self._E @ C.T).T
        g = self.grid
        W = self.spec.potential.W
        psi = np.array([integrate(W(g.nodes, g.nodal(u)), g) for u in U])
        return 0.5 * np.sum(self.sign * self.weights * C * C, axis=1) - psi

    def phi(self, u: np.ndarray) -> float:
        return self.phi_c(self.coeffs(u))

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.nodal(self.grad_c(self.coeffs(u)))

    def grad_norm(self, u: np.ndarray) -> float:
        return self.norm(self.grad_c(self.coeffs(u)))

    def energy_inner_nodal(self, u: np.ndarray, v: np.ndarray) -> float:
        return self.inner(self.coeffs(u), self.coeffs(v))


def Psi(u: np.ndarray, spec: ProblemSpec, grid: Grid) -> float:
    """Trapezoidal integral of t -> W(t, u(t))."""
    if np.shape(u) != (grid.size,):
        raise GridError(f"state vector shape {np.shape(u)} does not match grid size {grid.size}")
    return integrate(spec.potential.W(grid.nodes, grid.nodal(u)), grid)


def Phi(u: np.ndarray, dec: SpectralDecomposition, split: SubspaceSplit,
        spec: ProblemSpec) -> float:
    return EnergyFunctional(spec, dec, split).phi(u)


def grad_Phi(u: np.ndarray, dec: SpectralDecomposition, split: SubspaceSplit,
             spec: ProblemSpec) -> np.ndarray:
    return EnergyFunctional(spec, dec, split).grad(u)


def fd_directional(phi: Callable[[np.ndarray], float], u: np.ndarray, v: np.ndarray,
                   h: float) -> float:
    """Central difference (phi(u + h v) - phi(u - h v)) / (2 h)."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    if not np.any(v):
        return 0.0
    return (phi(u + h * v) - phi(u - h * v)) / (2.0 * h)
