"""Independent checks of candidate homoclinic solutions.

The ODE residual is computed straight from the stencil and the problem data,
not through the eigendecomposition the solver works in.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .discretization import Grid
from .minimax import (
    LinkingGeometry,
    SolveReport,
    SolverConfig,
    Workspace,
    mountain_pass_solve,
    orthonormal_support,
    prepare,
)
from .problem import ProblemSpec

log = logging.getLogger(__name__)


@dataclass
class VerifyThresholds:
    residual_inf: float = 1e-4
    tail: float = 1e-5
    drift: float = 1e-3


def ode_residual(u: np.ndarray, spec: ProblemSpec, grid: Grid):
    """(L^2, max) norms of r = D2 u - L(t) u + W_u(t, u) at the interior nodes."""
    x = grid.nodal(u)
    padded = np.zeros((grid.n + 2, grid.N))
    padded[1:-1] = x
    d2 = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / grid.h**2
    Lu = np.einsum("nij,nj->ni", spec.L.values(grid.nodes, check=False), x)
    r = d2 - Lu + spec.potential.W_u(grid.nodes, x)
    rn = np.linalg.norm(r, axis=1)
    return float(np.sqrt(grid.h * np.sum(rn * rn))), float(rn.max())


def decay_report(u: np.ndarray, grid: Grid, fraction: float = 0.9):
    """Max |u| and max |central difference quotient| over |t| >= fraction * T."""
    x = grid.nodal(u)
    padded = np.zeros((grid.n + 2, grid.N))
    padded[1:-1] = x
    du = (padded[2:] - padded[:-2]) / (2.0 * grid.h)
    tail = np.abs(grid.nodes) >= fraction * grid.T
    if not tail.any():
        return 0.0, 0.0
    return (float(np.linalg.norm(x[tail], axis=1).max()),
            float(np.linalg.norm(du[tail], axis=1).max()))


def transfer(u: np.ndarray, src: Grid, dst: Grid) -> np.ndarray:
    """Move a state vector between grids: exact where nodes coincide, cubic spline
    (with the zero boundary values) elsewhere, zero outside the source domain."""
    x = src.nodal(u)
    t_src = src.nodes
    t_dst = dst.nodes
    idx = np.rint((t_dst - t_src[0]) / src.h).astype(int)
    aligned = np.abs(t_dst - (t_src[0] + idx * src.h)) <= 1e-9 * src.h
    out = np.zeros((dst.n, dst.N))
    inside = np.abs(t_dst) < src.T
    spline = CubicSpline(np.concatenate([[-src.T], t_src, [src.T]]),
                         np.vstack([np.zeros(src.N), x, np.zeros(src.N)]), axis=0)
    out[inside] = spline(t_dst[inside])
    hit = aligned & (idx >= 0) & (idx < src.n)
    out[hit] = x[idx[hit]]
    return out.ravel()


def cross_grid_residual(u: np.ndarray, spec: ProblemSpec, src: Grid, dst: Grid):
    """ODE residual of ``u`` after transfer to ``dst``; O(h^2) for smooth solutions."""
    return ode_residual(transfer(u, src, dst), spec, dst)


@dataclass
class VerificationReport:
    residual_l2: float
    residual_inf: float
    decay_tail_u: float
    decay_tail_du: float
    refinement_drift: float
    domain_drift: float
    nontrivial: bool
    cross_residual_inf: float
    cross_residual_inf_refined: float
    decay_tail_u_enlarged: float
    residual_inf_refined: float
    refined_status: str
    enlarged_status: str
    passed: bool
    thresholds: VerifyThresholds = field(default_factory=VerifyThresholds)
    notes: list = field(default_factory=list)

    @property
    def residual_ratio(self) -> float:
        return self.cross_residual_inf / self.cross_residual_inf_refined

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "residual_l2": self.residual_l2,
            "residual_inf": self.residual_inf,
            "decay_tail_u": self.decay_tail_u,
            "decay_tail_du": self.decay_tail_du,
            "refinement_drift": self.refinement_drift,
            "domain_drift": self.domain_drift,
            "nontrivial": self.nontrivial,
            "cross_residual_inf": self.cross_residual_inf,
            "cross_residual_inf_refined": self.cross_residual_inf_refined,
            "residual_ratio": self.residual_ratio,
            "decay_tail_u_enlarged": self.decay_tail_u_enlarged,
            "residual_inf_refined": self.residual_inf_refined,
            "refined_status": self.refined_status,
            "enlarged_status": self.enlarged_status,
            "thresholds": {"residual_inf": self.thresholds.residual_inf,
                           "tail": self.thresholds.tail, "drift": self.thresholds.drift},
            "notes": list(self.notes),
        }


class WorkspaceCache:
    """Decompositions keyed by grid, shared between verifications of one problem."""

    def __init__(self, spec: ProblemSpec, m0: Optional[float] = None):
        self.spec = spec
        self.m0 = m0
        self._store: Dict[Grid, Workspace] = {}

    def get(self, grid: Grid) -> Workspace:
        if grid not in self._store:
            self._store[grid] = prepare(self.spec, grid, m0=self.m0)
        return self._store[grid]

    def put(self, ws: Workspace):
        self._store[ws.grid] = ws


def _transferred_geometry(geometry: LinkingGeometry, ws: Workspace) -> LinkingGeometry:
    e = np.zeros(ws.grid.size)
    i = ws.split.ell_plus[0] if ws.split.ell else ws.split.plus[0]
    e[i] = 1.0 / np.sqrt(ws.fn.weights[i])
    return replace(geometry, e_dir=e)


def resolve_on(report: SolveReport, src: Grid, ws: Workspace, config: SolverConfig) -> SolveReport:
    """Re-run the minimax solve on another grid, warm-started from ``report``."""
    fn = ws.fn
    start = fn.coeffs(transfer(report.solution, src, ws.grid))
    support = None
    if report.support_solutions:
        support = orthonormal_support(
            fn, [fn.coeffs(transfer(s, src, ws.grid)) for s in report.support_solutions])
    geometry = _transferred_geometry(report.geometry, ws)
    out = mountain_pass_solve(ws, config, geometry=geometry, warm_start=start,
                              start_label=report.start, support=support)
    out.support_solutions = [transfer(s, src, ws.grid) for s in report.support_solutions]
    return out


def _rel_l2(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return grid.l2(a - b) / max(grid.l2(b), 1e-300)


def refine_and_compare(report: SolveReport, ws: Workspace, config: SolverConfig,
                       thresholds: Optional[VerifyThresholds] = None,
                       cache: Optional[WorkspaceCache] = None) -> VerificationReport:
    """Residual and decay checks plus re-solves on (h/2, T) and (h, 1.5 T)."""
    th = thresholds or VerifyThresholds()
    spec, grid = ws.spec, ws.grid
    cache = cache or WorkspaceCache(spec, ws.m0)
    cache.put(ws)
    u = report.solution
    notes = []

    res_l2, res_inf = ode_residual(u, spec, grid)
    tail_u, tail_du = decay_report(u, grid)
    rho = report.geometry.rho if report.geometry is not None else np.inf
    nontrivial = bool(np.isfinite(report.solution_norm) and report.solution_norm >= rho)
    if not report.converged or not nontrivial:
        notes.append(f"input solve status is {report.status}" if not report.converged
                     else "solution norm below rho: trivial or not a linking critical point")
        return VerificationReport(res_l2, res_inf, tail_u, tail_du, np.inf, np.inf, nontrivial,
                                  np.inf, np.inf, np.inf, np.inf, "skipped", "skipped", False, th, notes)

    fine = grid.refined()
    ws_f = cache.get(fine)
    rep_f = resolve_on(report, grid, ws_f, config)
    # old nodes are the odd-indexed fine nodes
    u_f_on_coarse = fine.nodal(rep_f.solution)[1::2].ravel()
    refinement_drift = _rel_l2(u_f_on_coarse, u, grid)

    big = grid.enlarged(1.5)
    ws_b = cache.get(big)
    rep_b = resolve_on(report, grid, ws_b, config)
    u_b_on_coarse = transfer(rep_b.solution, big, grid)
    domain_drift = _rel_l2(u_b_on_coarse, u, grid)
    tail_big, _ = decay_report(rep_b.solution, big)

    res_inf_fine = ode_residual(rep_f.solution, spec, fine)[1]
    cross = cross_grid_residual(u, spec, grid, fine)[1]
    cross_fine = cross_grid_residual(rep_f.solution, spec, fine, fine.refined())[1]

    for label, r in (("refined", rep_f), ("enlarged", rep_b)):
        if not r.converged:
            notes.append(f"{label} re-solve: {r.status} {r.message}".strip())
    if not nontrivial:
        notes.append("solution norm below rho: trivial or not a linking critical point")
    passed = bool(
        nontrivial and rep_f.converged and rep_b.converged
        and res_inf <= th.residual_inf
        and tail_u <= th.tail and tail_du <= th.tail
        and refinement_drift <= th.drift and domain_drift <= th.drift
    )
    log.info("verify [%s]: passed=%s res_inf=%.2e tails=(%.2e, %.2e) drifts=(%.2e, %.2e)",
             report.start, passed, res_inf, tail_u, tail_du, refinement_drift, domain_drift)
    return VerificationReport(
        residual_l2=res_l2, residual_inf=res_inf,
        decay_tail_u=tail_u, decay_tail_du=tail_du,
        refinement_drift=refinement_drift, domain_drift=domain_drift,
        nontrivial=nontrivial,
        cross_residual_inf=cross, cross_residual_inf_refined=cross_fine,
        decay_tail_u_enlarged=tail_big, residual_inf_refined=res_inf_fine,
        refined_status=rep_f.status, enlarged_status=rep_b.status,
        passed=passed, thresholds=th, notes=notes,
    )
