"""Linking geometry plus the peak-selection mountain-pass and multi-start solvers.

The minimax over deformations of Q is replaced by peak selection: for a unit
direction w in E+, maximize Phi over V + span{w} (V = E- + E0), then
minimize the peak value over w by energy-gradient descent on the unit
sphere of E+.  All vectors here are eigen-coordinates of a complete
decomposition unless a name says ``nodal``.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .discretization import DiscreteOperator, Grid, assemble_operator, quad_form_a
from .functional import EnergyFunctional
from .problem import ProblemSpec, SamplingPlan
from .spectrum import SpectralDecomposition, SubspaceSplit, classify, eigendecompose

log = logging.getLogger(__name__)


class GeometryError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    tol: float = 1e-6
    inner_tol: float = 1e-8
    inner_max: int = 200
    max_iter: int = 5000
    seed: int = 0
    rho_samples: int = 200
    sphere_samples: int = 200
    boundary_samples: int = 500
    rho_levels: int = 30
    R_cap: float = 1e3
    armijo_sigma: float = 1e-4
    step0: float = 1.0
    max_halvings: int = 40
    extra_starts: int = 2
    dedupe_tol: float = 1e-3
    threads: Optional[int] = None


@dataclass
class Workspace:
    """Everything derived from (spec, grid) that the solvers share."""

    spec: ProblemSpec
    grid: Grid
    dec: SpectralDecomposition
    split: SubspaceSplit
    fn: EnergyFunctional
    m0: Optional[float]
    op: Optional[DiscreteOperator] = None

    def action(self, u: np.ndarray) -> float:
        """Phi(u) = a(u, u) / 2 - Psi(u) through the sparse operator.

        The eigen-coordinate route loses about 1e-12 relative accuracy to the
        large eigenvalues (~4/h^2); this nodal route is what reports carry.
        """
        if self.op is None:
            return self.fn.phi(u)
        return 0.5 * quad_form_a(u, u, self.op) - self.fn.psi_nodal(u)


def linear_part_infimum(spec: ProblemSpec, plan: Optional[SamplingPlan] = None) -> Optional[float]:
    M = spec.potential.M
    if M is None:
        return None
    ts = (plan or SamplingPlan()).points()
    return float(np.linalg.eigvalsh(M.values(ts))[:, 0].min())


def prepare(spec: ProblemSpec, grid: Grid, plan: Optional[SamplingPlan] = None,
            m0: Optional[float] = None) -> Workspace:
    op = assemble_operator(spec, grid)
    dec = eigendecompose(op)
    if m0 is None:
        m0 = linear_part_infimum(spec, plan)
    split = classify(dec, m0 if m0 is not None and m0 > 0 else None)
    return Workspace(spec, grid, dec, split, EnergyFunctional(spec, dec, split), m0, op)


@dataclass
class LinkingGeometry:
    rho: float
    alpha_hat: float
    R: float
    e_dir: np.ndarray
    sup_boundary: float
    sphere_max: float

    def to_dict(self) -> dict:
        return {"rho": self.rho, "alpha_hat": self.alpha_hat, "R": self.R,
                "sup_boundary": self.sup_boundary, "sphere_max": self.sphere_max}


def _unit(fn: EnergyFunctional, index: int) -> np.ndarray:
    c = np.zeros(len(fn.lam))
    c[index] = 1.0 / np.sqrt(fn.weights[index])
    return c


def _random_in(fn: EnergyFunctional, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random direction in span(idx), energy-normalized, equal energy per mode on average."""
    c = np.zeros(len(fn.lam))
    c[idx] = rng.standard_normal(len(idx)) / np.sqrt(fn.weights[idx])
    return c / fn.norm(c)


def plus_directions(fn: EnergyFunctional, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Unit directions in E+: the lowest eigen-directions, then random ones
    alternating between the low-mode span and all of E+."""
    plus = fn.split.plus
    dirs = [_unit(fn, i) for i in plus[: min(len(plus), 8, count)]]
    low = plus[: min(len(plus), 32)]
    while len(dirs) < count:
        dirs.append(_random_in(fn, low if len(dirs) % 2 == 0 else plus, rng))
    return dirs


def _phi_many(fn: EnergyFunctional, cs, chunk: int = 128) -> np.ndarray:
    cs = np.asarray(cs)
    return np.concatenate([fn.phi_many_c(cs[i:i + chunk]) for i in range(0, len(cs), chunk)])


def estimate_geometry(ws: Workspace, config: SolverConfig) -> LinkingGeometry:
    fn, split = ws.fn, ws.split
    if split.ell < 1:
        raise GeometryError("no eigenvalues in (0, m0): E_ell^+ is empty")
    rng = np.random.default_rng(config.seed)

    dirs = plus_directions(fn, config.rho_samples, rng)
    rho = alpha = None
    for k in range(config.rho_levels):
        r = 2.0 ** -k
        vals = _phi_many(fn, [r * d for d in dirs])
        if vals.min() > r * r / 8:
            rho, alpha = r, float(vals.min())
            break
    if rho is None:
        raise GeometryError("no rho in the sweep gives a positive sampled infimum on the E+ sphere")

    tilde = np.concatenate([split.V, split.ell_plus])
    sphere = [_unit(fn, i) * s for i in tilde for s in (1.0, -1.0)]
    while len(sphere) < config.sphere_samples:
        sphere.append(_random_in(fn, tilde, rng))
    R = 2 * rho
    while True:
        smax = float(_phi_many(fn, [R * d for d in sphere]).max())
        if smax < 0:
            break
        R *= 2
        if R > config.R_cap:
            raise GeometryError(
                f"Phi stays positive on spheres in E- + E0 + E_ell^+ up to R_cap={config.R_cap:g}"
            )

    e = _unit(fn, split.ell_plus[0])
    sup = _boundary_sup(fn, e, R, config.boundary_samples, rng)
    if sup > 0:
        raise GeometryError(f"sampled sup of Phi on the boundary of Q is {sup:.3e} > 0")
    log.info("geometry: rho=%g alpha=%.6g R=%g sup_dQ=%.3e", rho, alpha, R, sup)
    return LinkingGeometry(rho=rho, alpha_hat=alpha, R=R, e_dir=e, sup_boundary=sup,
                           sphere_max=smax)


def _boundary_sup(fn: EnergyFunctional, e: np.ndarray, R: float, count: int,
                  rng: np.random.Generator) -> float:
    """Sampled sup of Phi over Q1 (r = 0), Q2 (r = R) and Q3 (||u1|| = R)."""
    V = fn.split.V
    p = len(V)
    pts = [np.zeros_like(e), R * e]
    if p == 0:
        return float(_phi_many(fn, pts).max())
    basis = np.stack([_unit(fn, i) for i in V])

    def ball(radius_frac):
        x = rng.standard_normal(p)
        return (radius_frac * R / np.linalg.norm(x)) * (x @ basis)

    for j in range(count - 2):
        kind = j % 3
        if kind == 0:
            pts.append(ball(rng.uniform() ** (1.0 / p)))
        elif kind == 1:
            pts.append(ball(rng.uniform() ** (1.0 / p)) + R * e)
        else:
            pts.append(ball(1.0) + rng.uniform(0.0, R) * e)
    return float(_phi_many(fn, pts).max())


# ---------------------------------------------------------------------------
# peak selection


@dataclass
class Peak:
    c: np.ndarray
    x: np.ndarray
    phi: float
    grad: np.ndarray
    slice_grad_norm: float
    on_boundary: bool
    iterations: int
    converged: bool


class _Slice:
    """Phi restricted to V + span(support) + span{w} in energy-orthonormal coordinates.

    Coordinates are (V part, support part, s); ``support`` rows are
    energy-orthonormal E+ vectors orthogonal to ``w``.
    """

    def __init__(self, fn: EnergyFunctional, w: np.ndarray, support: Optional[np.ndarray] = None):
        self.fn = fn
        self.V = fn.split.V
        self.sqw = np.sqrt(fn.weights[self.V])
        self.w = w
        self.support = np.zeros((0, len(w))) if support is None else support
        self.p = len(self.V)
        self.dim = self.p + len(self.support) + 1

    def point(self, x: np.ndarray) -> np.ndarray:
        c = x[-1] * self.w + x[self.p:-1] @ self.support
        c[self.V] += x[: self.p] / self.sqw
        return c

    def project_grad(self, g: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        out[: self.p] = self.sqw * g[self.V]
        wg = self.fn.weights * g
        out[self.p:-1] = self.support @ wg
        out[-1] = float(self.w @ wg)
        return out

    def evaluate(self, x: np.ndarray):
        c = self.point(x)
        phi, g = self.fn.phi_and_grad_c(c)
        return c, phi, g, self.project_grad(g)


def _clip(x: np.ndarray, R: float) -> np.ndarray:
    x = x.copy()
    x[-1] = min(max(x[-1], 0.0), R)
    nv = np.linalg.norm(x[:-1])
    if nv > R:
        x[:-1] *= R / nv
    return x


def peak_map(ws: Workspace, w: np.ndarray, geometry: LinkingGeometry, config: SolverConfig,
             start: Optional[np.ndarray] = None, support: Optional[np.ndarray] = None) -> Peak:
    """Maximize Phi over {u1 + s w : u1 in V, ||u1|| <= R, 0 <= s <= R}.

    With ``support`` the slice is widened to V + span(support) + span{w}
    (u1 then ranges over V + span(support)).

    Newton ascent in the slice with a finite-difference Hessian of the
    slice gradient; eigenvalues of the Hessian are replaced by -|mu| so
    every step is an ascent direction.
    """
    fn = ws.fn
    R = geometry.R
    sl = _Slice(fn, w, support)
    p = sl.dim - 1
    if start is None:
        x = np.zeros(p + 1)
        ss = R * 2.0 ** -np.arange(0, 40)
        vals = [fn.phi_c(s * w) for s in ss]
        x[-1] = ss[int(np.argmax(vals))]
    else:
        x = _clip(np.asarray(start, dtype=float), R)

    c, phi, g, sg = sl.evaluate(x)
    norm_sg = np.linalg.norm(sg)
    it = 0
    for it in range(1, config.inner_max + 1):
        if norm_sg <= config.inner_tol:
            it -= 1
            break
        delta = 1e-4 * max(1.0, np.linalg.norm(x))
        H = np.empty((p + 1, p + 1))
        for k in range(p + 1):
            dx = np.zeros(p + 1)
            dx[k] = delta
            H[:, k] = (sl.evaluate(x + dx)[3] - sl.evaluate(x - dx)[3]) / (2 * delta)
        H = 0.5 * (H + H.T)
        mu, Q = np.linalg.eigh(H)
        step = Q @ ((Q.T @ sg) / np.maximum(np.abs(mu), 1e-10))
        tau = 1.0
        accepted = False
        for _ in range(30):
            xn = _clip(x + tau * step, R)
            cn, phin, gn, sgn = sl.evaluate(xn)
            nn = np.linalg.norm(sgn)
            if phin > phi or (phin >= phi - 1e-13 * (1 + abs(phi)) and nn < norm_sg):
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break
        x, c, phi, g, sg, norm_sg = xn, cn, phin, gn, sgn, nn
    on_boundary = bool(x[-1] <= 0 or x[-1] >= R or np.linalg.norm(x[:-1]) >= R)
    return Peak(c=c, x=x, phi=phi, grad=g, slice_grad_norm=float(norm_sg),
                on_boundary=on_boundary, iterations=it,
                converged=bool(norm_sg <= config.inner_tol))


# ---------------------------------------------------------------------------
# outer descent


@dataclass
class SolveReport:
    solution: np.ndarray
    critical_value: float
    grad_norm: float
    iterations: int
    geometry: Optional[LinkingGeometry]
    history: list
    status: str
    start: str = "e1"
    solution_norm: float = 0.0
    message: str = ""
    coefficients: Optional[np.ndarray] = field(default=None, repr=False)
    support_solutions: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self, with_history: bool = False) -> dict:
        out = {
            "status": self.status,
            "start": self.start,
            "critical_value": self.critical_value,
            # a sampled peak-selection minimax level, not a certified infimum
            "critical_value_kind": "candidate",
            "grad_norm": self.grad_norm,
            "solution_norm": self.solution_norm,
            "iterations": self.iterations,
            "geometry": None if self.geometry is None else self.geometry.to_dict(),
            "message": self.message,
            "support_size": len(self.support_solutions),
        }
        if with_history:
            out["history"] = [{"iteration": i, "phi": f, "grad_norm": g}
                              for i, f, g in self.history]
        return out


def _normalize(fn: EnergyFunctional, c: np.ndarray) -> np.ndarray:
    return c / fn.norm(c)


def _plus_part(fn: EnergyFunctional, c: np.ndarray) -> np.ndarray:
    out = np.zeros_like(c)
    out[fn.split.plus] = c[fn.split.plus]
    return out


def _slice_start(fn: EnergyFunctional, c: np.ndarray, w: np.ndarray,
                 support: Optional[np.ndarray] = None) -> np.ndarray:
    V = fn.split.V
    q = 0 if support is None else len(support)
    x = np.empty(len(V) + q + 1)
    x[: len(V)] = np.sqrt(fn.weights[V]) * c[V]
    if q:
        x[len(V):-1] = support @ (fn.weights * c)
    x[-1] = fn.inner(c, w)
    return x


def orthonormal_support(fn: EnergyFunctional, vectors) -> np.ndarray:
    """Energy-orthonormal basis of the E+ parts of ``vectors``."""
    basis = []
    for v in vectors:
        q = _plus_part(fn, np.asarray(v, dtype=float))
        for b in basis:
            q = q - fn.inner(q, b) * b
        nq = fn.norm(q)
        if nq > 1e-8:
            basis.append(q / nq)
    return np.array(basis).reshape(len(basis), len(fn.lam))


def _remove(fn: EnergyFunctional, c: np.ndarray, support: Optional[np.ndarray]) -> np.ndarray:
    if support is None or len(support) == 0:
        return c
    return c - (support @ (fn.weights * c)) @ support


def mountain_pass_solve(ws: Workspace, config: SolverConfig,
                        geometry: Optional[LinkingGeometry] = None,
                        w0: Optional[np.ndarray] = None, start_label: str = "e1",
                        warm_start: Optional[np.ndarray] = None,
                        support: Optional[np.ndarray] = None) -> SolveReport:
    """Minimize w -> max Phi(V + span{w}) over unit w in E+.

    ``w0`` / ``warm_start`` are eigen-coordinate vectors; ``warm_start`` is a
    full point whose E+ part gives the initial direction and whose V part
    seeds the first peak search.  ``support`` (energy-orthonormal E+ rows)
    widens every peak slice and restricts w to its orthogonal complement,
    which targets higher minimax levels once lower solutions are known.
    """
    fn = ws.fn
    if support is not None and len(support) == 0:
        support = None
    empty = np.zeros(ws.grid.size)
    try:
        geometry = geometry or estimate_geometry(ws, config)
    except GeometryError as exc:
        return SolveReport(solution=empty, critical_value=0.0, grad_norm=float("nan"),
                           iterations=0, geometry=None, history=[],
                           status="geometry_failure", start=start_label, message=str(exc))

    x0 = None
    fallback = _remove(fn, geometry.e_dir.copy(), support)
    if warm_start is not None:
        w = _remove(fn, _plus_part(fn, warm_start), support)
    elif w0 is not None:
        w = _remove(fn, _plus_part(fn, np.asarray(w0, dtype=float)), support)
    else:
        w = fallback
    if not fn.norm(w) > 1e-12:
        # no E+ content left in the start: use the geometry direction
        w = fallback
    w = _normalize(fn, w)
    if warm_start is not None:
        x0 = _slice_start(fn, warm_start, w, support)
    peak = peak_map(ws, w, geometry, config, start=x0, support=support)

    history = []
    status = "max_iter"
    message = ""
    it = 0
    for it in range(config.max_iter + 1):
        gnorm = fn.norm(peak.grad)
        history.append((it, peak.phi, gnorm))
        if gnorm <= config.tol:
            status = "converged"
            break
        if it == config.max_iter:
            break
        gp = _remove(fn, _plus_part(fn, peak.grad), support)
        gp -= fn.inner(gp, w) * w
        gp2 = fn.inner(gp, gp)
        s = max(peak.x[-1], 1e-12)
        tau = config.step0
        accepted = False
        for _ in range(config.max_halvings):
            wn = _normalize(fn, s * w - tau * gp)
            xs = peak.x.copy()
            xs[-1] = fn.inner(s * w - tau * gp, wn)
            cand = peak_map(ws, wn, geometry, config, start=xs, support=support)
            if cand.phi <= peak.phi - config.armijo_sigma * tau * gp2:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            message = f"line search stalled at iteration {it} (grad_norm {gnorm:.3e})"
            break
        w, peak = wn, cand

    c = peak.c
    u = fn.nodal(c)
    report = SolveReport(
        solution=u,
        critical_value=float(ws.action(u)),
        grad_norm=float(fn.norm(peak.grad)),
        iterations=it,
        geometry=geometry,
        history=history,
        status=status,
        start=start_label,
        solution_norm=fn.norm(c),
        message=message,
        coefficients=c,
    )
    log.info("mountain pass [%s]: %s after %d iterations, Phi=%.12g, |grad|=%.3e",
             start_label, status, it, report.critical_value, report.grad_norm)
    return report


# ---------------------------------------------------------------------------
# multiplicity


@dataclass
class MultiSolveResult:
    distinct: List[SolveReport]
    runs: List[SolveReport]
    ell: int
    geometry: Optional[LinkingGeometry]

    @property
    def found(self) -> int:
        return len(self.distinct)

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "pairs_found": self.found,
            "pairs_targeted": self.ell,
            "geometry": None if self.geometry is None else self.geometry.to_dict(),
            "solutions": [r.to_dict() for r in self.distinct],
            "runs": [r.to_dict() for r in self.runs],
        }


def thread_count(config: SolverConfig) -> int:
    if config.threads is not None:
        return max(1, int(config.threads))
    env = os.environ.get("HOMOCLINIC_THREADS")
    return max(1, int(env)) if env else 1


def pair_distance(fn: EnergyFunctional, a: np.ndarray, b: np.ndarray) -> float:
    """min(||a - b||, ||a + b||) in the energy norm."""
    return min(fn.norm(a - b), fn.norm(a + b))


def dedupe(fn: EnergyFunctional, reports: List[SolveReport], tol: float) -> List[SolveReport]:
    """Collapse +-pairs; within a cluster the lower-Phi representative wins."""
    kept: List[SolveReport] = []
    for r in sorted(reports, key=lambda r: (r.critical_value, r.start)):
        if not r.converged:
            continue
        if all(pair_distance(fn, r.coefficients, k.coefficients) > tol * (1 + k.solution_norm)
               for k in kept):
            kept.append(r)
    return kept


def start_directions(ws: Workspace, config: SolverConfig):
    fn, split = ws.fn, ws.split
    starts = [(f"e{j + 1}", _unit(fn, i)) for j, i in enumerate(split.ell_plus)]
    rng = np.random.default_rng(config.seed + 1)
    low = split.plus[: max(split.ell, min(8, len(split.plus)))]
    for k in range(config.extra_starts):
        starts.append((f"random{k + 1}", _random_in(fn, low, rng)))
    return starts


def multi_solve(ws: Workspace, config: SolverConfig) -> MultiSolveResult:
    if not ws.spec.potential.even:
        raise ValueError("multi_solve needs an even potential (W(t, -u) = W(t, u))")
    try:
        geometry = estimate_geometry(ws, config)
    except GeometryError as exc:
        failed = SolveReport(solution=np.zeros(ws.grid.size), critical_value=0.0,
                             grad_norm=float("nan"), iterations=0, geometry=None,
                             history=[], status="geometry_failure", message=str(exc))
        return MultiSolveResult(distinct=[], runs=[failed], ell=ws.split.ell, geometry=None)
    starts = start_directions(ws, config)

    def run(item):
        label, w0 = item
        return mountain_pass_solve(ws, config, geometry=geometry, w0=w0, start_label=label)

    workers = thread_count(config)

    def run_all(items, fn_):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(fn_, items))
        return [fn_(i) for i in items]

    runs = run_all(starts, run)
    distinct = dedupe(ws.fn, runs, config.dedupe_tol)

    # second phase: widen the peak slice by the solutions found so far
    for _ in range(ws.split.ell):
        if len(distinct) >= ws.split.ell:
            break
        support = orthonormal_support(ws.fn, [r.coefficients for r in distinct])
        tag = "+".join(r.start for r in distinct)
        items = []
        for label, w0 in starts[: ws.split.ell]:
            w_rest = _remove(ws.fn, w0, support)
            # a start mostly inside the support span carries no new direction
            if ws.fn.norm(w_rest) > 0.5:
                items.append((f"{label}|{tag}", w_rest))

        lower = [r.solution for r in distinct]

        def run_supported(item, support=support, lower=lower):
            label, w0 = item
            out = mountain_pass_solve(ws, config, geometry=geometry, w0=w0,
                                      start_label=label, support=support)
            out.support_solutions = lower
            return out

        extra = run_all(items, run_supported)
        runs += extra
        grown = dedupe(ws.fn, runs, config.dedupe_tol)
        if len(grown) == len(distinct):
            break
        distinct = grown
    return MultiSolveResult(distinct=distinct, runs=runs, ell=ws.split.ell, geometry=geometry)


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
