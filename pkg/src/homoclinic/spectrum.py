"""Eigendecomposition of the discrete operator and the induced subspace splits."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .discretization import DiscreteOperator, Grid, assemble_operator
from .problem import ProblemError, ProblemSpec

DENSE_LIMIT = 20000
RESIDUAL_RTOL = 1e-8


class SpectrumError(RuntimeError):
    pass


class FragileClassificationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenpairs; columns of ``vectors`` are L^2-orthonormal (u.v h = delta)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    grid: Grid
    zero_tol: float

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def complete(self) -> bool:
        return self.count == self.grid.size

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.eigenvalues < -self.zero_tol))

    @property
    def n_zero(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) <= self.zero_tol))

    @property
    def n_bar(self) -> int:
        return self.n_minus + self.n_zero

    def weights(self, zero_tol: Optional[float] = None) -> np.ndarray:
        """Energy weights: |lambda_i|, or 1 on the kernel."""
        tol = self.zero_tol if zero_tol is None else zero_tol
        lam = self.eigenvalues
        return np.where(np.abs(lam) <= tol, 1.0, np.abs(lam))

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        return self.grid.h * (self.vectors.T @ u)

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return self.vectors @ c

    def orthonormality_error(self) -> float:
        gram = self.grid.h * (self.vectors.T @ self.vectors)
        return float(np.abs(gram - np.eye(self.count)).max())


def default_zero_tol(eigenvalues: np.ndarray) -> float:
    return 1e-8 * max(1.0, float(np.abs(eigenvalues).max()))


def eigendecompose(op: DiscreteOperator, count: Optional[int] = None,
                   zero_tol: Optional[float] = None) -> SpectralDecomposition:
    """The ``count`` algebraically smallest eigenpairs of ``op`` (all when None)."""
    grid = op.grid
    m = grid.size
    if count is not None and not 1 <= count <= m:
        raise SpectrumError(f"count must lie in [1, {m}], got {count}")
    k = m if count is None else count
    try:
        if k < m and m > DENSE_LIMIT:
            lam, vec = _iterative(op, k)
        elif grid.N == 1:
            sel = "a" if k == m else "i"
            lam, vec = sla.eigh_tridiagonal(
                op.banded[0], op.banded[1, :-1], select=sel, select_range=(0, k - 1)
            )
        else:
            if k == m:
                lam, vec = sla.eig_banded(op.banded, lower=True)
            else:
                lam, vec = sla.eig_banded(op.banded, lower=True, select="i",
                                          select_range=(0, k - 1))
    except (sla.LinAlgError, spla.ArpackNoConvergence) as exc:
        raise SpectrumError(f"eigensolver failed to converge: {exc}") from exc
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vec = vec[:, order] / np.sqrt(grid.h)
    # residual |A e - lambda e|_2 in the discrete L^2 norm
    res = np.sqrt(grid.h) * np.linalg.norm(op.matrix @ vec - vec * lam, axis=0)
    bad = np.nonzero(res > RESIDUAL_RTOL * np.maximum(1.0, np.abs(lam)))[0]
    if bad.size:
        i = int(bad[0])
        raise SpectrumError(f"eigenpair {i} not converged (residual {res[i]:.3e})")
    tol = default_zero_tol(lam) if zero_tol is None else float(zero_tol)
    return SpectralDecomposition(eigenvalues=lam, vectors=vec, grid=grid, zero_tol=tol)


def _iterative(op: DiscreteOperator, k: int):
    lower = float(np.min(op.banded[0] - 2 * np.abs(op.banded[1:]).sum(axis=0))) - 1.0
    lam, vec = spla.eigsh(op.matrix.tocsc(), k=k, sigma=lower, which="LM")
    # eigsh normalizes in the Euclidean norm, as eigh does; orthogonalize defensively
    vec, _ = np.linalg.qr(vec)
    return lam, vec


@dataclass(frozen=True)
class SubspaceSplit:
    minus: np.ndarray
    zero: np.ndarray
    plus: np.ndarray
    ell: int
    m0: Optional[float]
    zero_tol: float
    b: Optional[float] = None
    k_b: Optional[int] = None

    @property
    def ell_plus(self) -> np.ndarray:
        """Indices of E_ell^+, the eigenvalues in (0, m0)."""
        return self.plus[: self.ell]

    @property
    def V(self) -> np.ndarray:
        return np.concatenate([self.minus, self.zero])

    def b_plus(self, dec: SpectralDecomposition) -> np.ndarray:
        if self.b is None:
            raise SpectrumError("split was computed without a b threshold")
        return np.nonzero(np.abs(dec.eigenvalues) > self.b)[0]


def classify(dec: SpectralDecomposition, m0: Optional[float], zero_tol: Optional[float] = None,
             b: Optional[float] = None) -> SubspaceSplit:
    """Sign split against zero_tol, ell = #{zero_tol < lambda < m0}, k_b = #{|lambda| <= b}.

    ``m0=None`` (no linear part M) gives ell = 0.
    """
    tol = dec.zero_tol if zero_tol is None else float(zero_tol)
    if tol < 0:
        raise SpectrumError("zero_tol must be >= 0")
    if m0 is not None and not m0 > 0:
        raise SpectrumError(f"m0 must be positive, got {m0}")
    lam = dec.eigenvalues
    if tol > 0:
        near = np.abs(lam)
        fragile = np.nonzero((near >= tol / 10) & (near <= tol * 10))[0]
        if fragile.size:
            warnings.warn(
                f"eigenvalue {lam[fragile[0]]:.3e} (index {fragile[0]}) lies within a "
                f"factor 10 of zero_tol={tol:.3e}; subspace classification is fragile",
                FragileClassificationWarning,
                stacklevel=2,
            )
    idx = np.arange(len(lam))
    minus = idx[lam < -tol]
    zero = idx[np.abs(lam) <= tol]
    plus = idx[lam > tol]
    ell = 0 if m0 is None else int(np.sum((lam > tol) & (lam < m0)))
    if ell == len(plus) and not dec.complete and ell > 0:
        warnings.warn("every retained positive eigenvalue lies below m0; ell may be truncated",
                      stacklevel=2)
    k_b = None if b is None else int(np.sum(np.abs(lam) <= b))
    return SubspaceSplit(minus=minus, zero=zero, plus=plus, ell=ell,
                         m0=None if m0 is None else float(m0),
                         zero_tol=tol, b=b, k_b=k_b)


def _coefficients_checked(u: np.ndarray, dec: SpectralDecomposition) -> np.ndarray:
    c = dec.coefficients(u)
    if not dec.complete:
        rest = u - dec.synthesize(c)
        if dec.grid.l2(rest) > 1e-8 * max(dec.grid.l2(u), 1e-300):
            raise SpectrumError(
                "state vector is not resolved by the retained modes; "
                "use a complete decomposition"
            )
    return c


def project(u: np.ndarray, dec: SpectralDecomposition, split: SubspaceSplit):
    """(u^-, u^0, u^+) by eigen-coefficients."""
    c = _coefficients_checked(u, dec)
    parts = []
    for idx in (split.minus, split.zero, split.plus):
        parts.append(dec.vectors[:, idx] @ c[idx])
    return tuple(parts)


def energy_norm_sq(u: np.ndarray, dec: SpectralDecomposition, split: SubspaceSplit) -> float:
    c = _coefficients_checked(u, dec)
    return float(np.sum(dec.weights(split.zero_tol) * c * c))


@dataclass(frozen=True)
class W4Certificate:
    min_abs_eig: float
    holds: bool
    min_abs_eig_refined: float
    holds_refined: bool
    tol: float

    @property
    def stable(self) -> bool:
        return self.holds == self.holds_refined


def min_abs_eig_A_minus_M(spec: ProblemSpec, grid: Grid) -> float:
    if spec.potential.M is None:
        raise ProblemError("(W4) needs the linear part M(t) of W_u")
    op = assemble_operator(spec, grid)
    Ms = spec.potential.M.values(grid.nodes)
    shifted = op.shifted(-0.5 * (Ms + Ms.transpose(0, 2, 1)))
    if grid.N == 1:
        lam = sla.eigh_tridiagonal(shifted.banded[0], shifted.banded[1, :-1], eigvals_only=True)
    else:
        lam = sla.eig_banded(shifted.banded, lower=True, eigvals_only=True)
    return float(np.abs(lam).min())


def check_W4(spec: ProblemSpec, grid: Grid, tol: float = 1e-4) -> W4Certificate:
    """Truncated-domain proxy for 0 not in the point spectrum of A - M, on h and h/2."""
    coarse = min_abs_eig_A_minus_M(spec, grid)
    fine = min_abs_eig_A_minus_M(spec, grid.refined())
    return W4Certificate(min_abs_eig=coarse, holds=coarse > tol,
                         min_abs_eig_refined=fine, holds_refined=fine > tol, tol=tol)
