"""Problem data for u'' - L(t) u + W_u(t, u) = 0 and numerical audits of its hypotheses.

Potentials are evaluated nodewise on batches: ``t`` has shape ``(n,)`` and
``u`` has shape ``(n, N)``.  ``W`` returns shape ``(n,)``, ``W_u`` returns
shape ``(n, N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

SYMMETRY_RTOL = 1e-12
ELL_FRAGILE_RTOL = 1e-3
W1_RADII = tuple(10.0 ** -k for k in range(7))


class ProblemError(ValueError):
    """Malformed problem data (dimension mismatch, non-symmetric matrices...)."""


@dataclass(frozen=True)
class MatrixFunction:
    """A map t -> symmetric N x N matrix.

    ``func`` takes a scalar time and returns an ``(N, N)`` array, unless
    ``vectorized`` is set, in which case it takes a 1-D array of times and
    returns ``(len(t), N, N)``.
    """

    dim: int
    func: Callable
    vectorized: bool = False

    def __call__(self, t: float) -> np.ndarray:
        return self.values(np.array([float(t)]))[0]

    def values(self, ts, check: bool = True) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.vectorized:
            mats = np.asarray(self.func(ts), dtype=float)
        else:
            mats = np.array([np.asarray(self.func(t), dtype=float) for t in ts])
        mats = mats.reshape(len(ts), self.dim, self.dim)
        if check:
            asym = np.abs(mats - mats.transpose(0, 2, 1)).max(axis=(1, 2))
            scale = np.maximum(1.0, np.abs(mats).max(axis=(1, 2)))
            bad = np.nonzero(asym > SYMMETRY_RTOL * scale)[0]
            if bad.size:
                raise ProblemError(
                    f"matrix function is not symmetric at t={ts[bad[0]]:.6g} "
                    f"(asymmetry {asym[bad[0]]:.3e})"
                )
        return mats

    @classmethod
    def scalar(cls, dim: int, f: Callable[[np.ndarray], np.ndarray]) -> "MatrixFunction":
        """Build t -> f(t) * I_N from a vectorized scalar function."""
        eye = np.eye(dim)

        def func(ts):
            return np.asarray(f(ts), dtype=float)[:, None, None] * eye

        return cls(dim, func, vectorized=True)


@dataclass(frozen=True)
class PotentialSpec:
    dim: int
    W: Callable[[np.ndarray, np.ndarray], np.ndarray]
    W_u: Callable[[np.ndarray, np.ndarray], np.ndarray]
    M: Optional[MatrixFunction] = None
    even: bool = False

    def w_u(self, t: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Remainder w_u = W_u - M(t) u of the asymptotically linear split."""
        if self.M is None:
            raise ProblemError("potential has no linear part M(t)")
        mats = self.M.values(t, check=False)
        return self.W_u(t, u) - np.einsum("nij,nj->ni", mats, u)


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    L: MatrixFunction
    potential: PotentialSpec
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ProblemError("dimension N must be >= 1")
        if self.L.dim != self.dim or self.potential.dim != self.dim:
            raise ProblemError(
                f"dimension mismatch: N={self.dim}, L.dim={self.L.dim}, "
                f"potential.dim={self.potential.dim}"
            )
        if self.potential.M is not None and self.potential.M.dim != self.dim:
            raise ProblemError("M(t) dimension differs from N")


def paper_L(ts: np.ndarray) -> np.ndarray:
    """Coefficient of I_N: e t^2 - 2 on |t| <= 1/sqrt(e), ln t^2 outside."""
    ts = np.asarray(ts, dtype=float)
    inner = np.abs(ts) <= 1.0 / np.sqrt(np.e)
    safe = np.where(inner, 1.0, ts * ts)
    return np.where(inner, np.e * ts * ts - 2.0, np.log(safe))


def paper_example(a: float = 3.0, dim: int = 1) -> ProblemSpec:
    """Piecewise-logarithmic L with the asymptotically linear, even W.

    ``W(t, u) = (e^{-t^2} + a) |u|^2 (1 - 1/ln(e + |u|)) / 2`` and
    ``M(t) = (e^{-t^2} + a) I``.
    """
    if not a > 0:
        raise ProblemError(f"paper-example requires a > 0, got {a}")

    def coef(t):
        return np.exp(-t * t) + a

    def W(t, u):
        s = np.linalg.norm(u, axis=1)
        return 0.5 * coef(t) * s * s * (1.0 - 1.0 / np.log(np.e + s))

    def W_u(t, u):
        s = np.linalg.norm(u, axis=1)
        lg = np.log(np.e + s)
        # d/ds [s^2 g(s)] / (2 s) with g = 1 - 1/ln(e+s)
        factor = (1.0 - 1.0 / lg) + 0.5 * s / ((np.e + s) * lg * lg)
        return (coef(t) * factor)[:, None] * u

    potential = PotentialSpec(
        dim=dim, W=W, W_u=W_u, M=MatrixFunction.scalar(dim, coef), even=True
    )
    return ProblemSpec(
        dim=dim,
        L=MatrixFunction.scalar(dim, paper_L),
        potential=potential,
        name="paper-example",
        params={"a": float(a), "N": dim},
    )


def harmonic_oscillator(dim: int = 1, m: Optional[float] = None) -> ProblemSpec:
    """L(t) = t^2 I with W = 0; exact spectrum 2k + 1.

    ``m`` optionally attaches a constant linear part M = m I (still W = 0),
    which is only meaningful for auditing and for geometry failure checks.
    """

    def W(t, u):
        return np.zeros(len(t))

    def W_u(t, u):
        return np.zeros_like(u)

    M = None if m is None else MatrixFunction.scalar(dim, lambda ts: np.full(len(ts), float(m)))
    params = {"N": dim} if m is None else {"N": dim, "m": float(m)}
    return ProblemSpec(
        dim=dim,
        L=MatrixFunction.scalar(dim, lambda ts: ts * ts),
        potential=PotentialSpec(dim=dim, W=W, W_u=W_u, M=M, even=True),
        name="harmonic-oscillator",
        params=params,
    )


BUILTIN_PROBLEMS = {
    "paper-example": paper_example,
    "harmonic-oscillator": harmonic_oscillator,
}


def make_problem(name: str, **params) -> ProblemSpec:
    try:
        factory = BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ProblemError(
            f"unknown problem {name!r}; known: {', '.join(sorted(BUILTIN_PROBLEMS))}"
        ) from None
    return factory(**params)


# ---------------------------------------------------------------------------
# hypothesis audit


@dataclass
class SamplingPlan:
    """Uniform sample points on [-T_check, T_check]."""

    T_check: float = 50.0
    count: int = 2048

    def points(self) -> np.ndarray:
        if self.count < 1 or not self.T_check > 0:
            raise ProblemError("sampling plan must have count >= 1 and T_check > 0")
        return np.linspace(-self.T_check, self.T_check, self.count)


@dataclass
class ConditionReport:
    l_samples: list
    L1_plausible: bool
    L2_estimate: Optional[tuple]
    L2_table: list
    W1_smallness: list
    W1_nonincreasing: bool
    C_W_estimate: float
    C_w_estimate: Optional[float]
    m0: Optional[float]
    even_checked: Optional[bool]
    sigma_min_positive: Optional[float] = None
    W3_holds: Optional[bool] = None
    beta2_estimate: Optional[float] = None
    W3_margin: Optional[float] = None
    ell_fragile: Optional[bool] = None

    def summary(self) -> dict:
        """JSON-ready summary without the long sample table."""
        ls = np.array([v for _, v in self.l_samples])
        return {
            "l_min": float(ls.min()),
            "l_at_tails": [float(self.l_samples[0][1]), float(self.l_samples[-1][1])],
            "L1_plausible": self.L1_plausible,
            "L2_estimate": None if self.L2_estimate is None
            else {"a": self.L2_estimate[0], "rbar": self.L2_estimate[1]},
            "L2_table": [{"rbar": r, "a": a} for r, a in self.L2_table],
            "W1_smallness": [{"radius": r, "sup_ratio": v} for r, v in self.W1_smallness],
            "W1_nonincreasing": self.W1_nonincreasing,
            "C_W_estimate": self.C_W_estimate,
            "C_w_estimate": self.C_w_estimate,
            "m0": self.m0,
            "even_checked": self.even_checked,
            "sigma_min_positive": self.sigma_min_positive,
            "W3_holds": self.W3_holds,
            "beta2_estimate": self.beta2_estimate,
            "W3_margin": self.W3_margin,
            "ell_fragile": self.ell_fragile,
        }


def _matrix_norm(mats: np.ndarray) -> np.ndarray:
    return np.linalg.norm(mats, ord=2, axis=(1, 2))


def _unit_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    d = rng.standard_normal((count, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def estimate_L2(spec: ProblemSpec, ts: np.ndarray, rbars: Sequence[float]) -> list:
    """Table of (rbar, max_{|t|>=rbar} |L'(t)| / |L(t)|) with central-difference L'."""
    table = []
    for rbar in rbars:
        pts = np.concatenate([[-rbar, rbar], ts[np.abs(ts) >= rbar]])
        step = 1e-5 * np.maximum(1.0, np.abs(pts))
        dL = (spec.L.values(pts + step) - spec.L.values(pts - step)) / (2 * step)[:, None, None]
        normL = _matrix_norm(spec.L.values(pts))
        normdL = _matrix_norm(dL)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(normL > 1e-12, normdL / normL, np.inf)
        table.append((float(rbar), float(ratio.max())))
    return table


def check_conditions(
    spec: ProblemSpec,
    plan: Optional[SamplingPlan] = None,
    *,
    require_W2: bool = False,
    l_bound: float = 0.0,
    spectrum=None,
    seed: int = 0,
) -> ConditionReport:
    """Sample the hypotheses on L and W over ``plan``.

    (L1), (L2) are asymptotic; the verdicts mean "plausible on the sampled
    range".  ``spectrum`` (a SpectralDecomposition) fills the fields that
    need the discrete operator: sigma_min_positive, W3_holds, beta2.
    """
    plan = plan or SamplingPlan()
    ts = plan.points()
    pot = spec.potential
    if require_W2 and pot.M is None:
        raise ProblemError("(W2)-dependent fields requested but the potential has no M(t)")
    rng = np.random.default_rng(seed)

    Ls = spec.L.values(ts)
    l = np.linalg.eigvalsh(Ls)[:, 0]
    if not np.all(np.isfinite(l)):
        raise ProblemError("non-finite smallest eigenvalue of L(t) on the sampling plan")
    l_samples = [(float(t), float(v)) for t, v in zip(ts, l)]

    # L1: large at both ends and non-decreasing in |t| over the outer halves
    half = plan.T_check / 2
    right = l[ts >= half]
    left = l[ts <= -half][::-1]
    monotone = bool(np.all(np.diff(right) >= -1e-12) and np.all(np.diff(left) >= -1e-12))
    L1 = bool(monotone and l[0] > l_bound and l[-1] > l_bound
              and right[-1] > right[0] and left[-1] > left[0])

    rbars = [2.0 ** k for k in range(0, 12) if 2.0 ** k <= half]
    L2_table = estimate_L2(spec, ts, rbars)
    finite = [(r, a) for r, a in L2_table if np.isfinite(a)]
    L2 = (finite[0][1], finite[0][0]) if finite else None

    # W1: sup_t |W_u(t, u)| / |u| at shrinking |u|
    dirs = _unit_directions(spec.dim, 8, rng)
    tt = np.repeat(ts, len(dirs))

    def sup_ratio(r, fn):
        u = r * np.tile(dirs, (len(ts), 1))
        return float(np.max(np.linalg.norm(fn(tt, u), axis=1)) / r)

    W1_table = [(r, sup_ratio(r, pot.W_u)) for r in W1_RADII]
    values = [v for _, v in W1_table]
    W1_noninc = bool(all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:])))
    radii = np.logspace(-6, 6, 49)
    C_W = max(sup_ratio(r, pot.W_u) for r in radii)
    C_w = m0 = None
    if pot.M is not None:
        C_w = max(sup_ratio(r, pot.w_u) for r in radii)
        m0 = float(np.linalg.eigvalsh(pot.M.values(ts))[:, 0].min())

    even = None
    if pot.even:
        u = rng.standard_normal((len(ts), spec.dim)) * 3.0
        even = bool(np.allclose(pot.W(ts, u), pot.W(ts, -u), rtol=1e-13, atol=0.0))
        if not np.allclose(pot.W(ts, np.zeros((len(ts), spec.dim))), 0.0, atol=0.0):
            even = False

    report = ConditionReport(
        l_samples=l_samples,
        L1_plausible=L1,
        L2_estimate=L2,
        L2_table=L2_table,
        W1_smallness=W1_table,
        W1_nonincreasing=W1_noninc,
        C_W_estimate=C_W,
        C_w_estimate=C_w,
        m0=m0,
        even_checked=even,
    )
    if spectrum is not None:
        attach_spectrum(report, spectrum, seed=seed)
    return report


def attach_spectrum(report: ConditionReport, dec, seed: int = 0, trials: int = 200) -> ConditionReport:
    """Fill sigma_min_positive, W3_holds and an empirical beta_2 from a decomposition."""
    lam = dec.eigenvalues
    pos = lam[lam > dec.zero_tol]
    report.sigma_min_positive = float(pos[0]) if pos.size else None
    if report.m0 is not None and report.sigma_min_positive is not None:
        report.W3_holds = bool(report.m0 > report.sigma_min_positive)
        report.W3_margin = float(report.m0 - report.sigma_min_positive)
        # an eigenvalue this close to m0 can cross it under refinement and change ell
        gap = float(np.min(np.abs(pos - report.m0)))
        report.ell_fragile = bool(gap <= ELL_FRAGILE_RTOL * max(1.0, abs(report.m0)))
    # |u|_2 / ||u|| over random coefficient vectors, biased to the low modes
    rng = np.random.default_rng(seed)
    weights = dec.weights()
    k = min(len(lam), 32)
    best = 0.0
    for j in range(trials):
        c = np.zeros(len(lam))
        span = k if j % 2 == 0 else len(lam)
        c[:span] = rng.standard_normal(span)
        best = max(best, float(np.sqrt(np.sum(c * c) / np.sum(weights * c * c))))
    report.beta2_estimate = best
    return report
