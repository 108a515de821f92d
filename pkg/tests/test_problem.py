import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homoclinic.discretization import Grid, assemble_operator
from homoclinic.spectrum import eigendecompose
from homoclinic.problem import (
    attach_spectrum,
    MatrixFunction,
    PotentialSpec,
    ProblemError,
    ProblemSpec,
    SamplingPlan,
    check_conditions,
    estimate_L2,
    harmonic_oscillator,
    make_problem,
    paper_L,
    paper_example,
)


def test_L_continuous_at_branch_point():
    t0 = 1.0 / np.sqrt(np.e)
    # inner branch e t^2 - 2 and outer branch ln t^2, both -1 analytically
    assert np.e * t0**2 - 2 == pytest.approx(-1.0, abs=1e-15)
    assert np.log(t0**2) == pytest.approx(-1.0, abs=1e-15)
    eps = 1e-9
    vals = paper_L(np.array([t0 - eps, t0, t0 + eps, -t0]))
    assert np.allclose(vals, -1.0, atol=1e-8)
    spec = paper_example(3.0, dim=2)
    assert np.allclose(spec.L(t0), -np.eye(2), atol=1e-14)


def test_W_vanishes_at_zero_and_is_even(rng):
    spec = paper_example(3.0, dim=3)
    t = rng.uniform(-20, 20, 50)
    assert np.all(spec.potential.W(t, np.zeros((50, 3))) == 0.0)
    u = rng.standard_normal((50, 3)) * 5
    assert np.array_equal(spec.potential.W(t, u), spec.potential.W(t, -u))
    assert np.all(spec.potential.W(t, u) >= 0)


def test_W_u_matches_finite_difference(rng):
    spec = paper_example(2.0, dim=2)
    t = rng.uniform(-5, 5, 20)
    u = rng.standard_normal((20, 2)) * 3
    h = 1e-6
    fd = np.empty_like(u)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd[:, k] = (spec.potential.W(t, u + e) - spec.potential.W(t, u - e)) / (2 * h)
    assert np.allclose(fd, spec.potential.W_u(t, u), rtol=1e-7, atol=1e-8)


def test_nonpositive_a_rejected():
    with pytest.raises(ProblemError):
        paper_example(0.0)


def test_dimension_mismatch_rejected():
    L = MatrixFunction.scalar(2, lambda t: t * t)
    pot = harmonic_oscillator(1).potential
    with pytest.raises(ProblemError, match="dimension"):
        ProblemSpec(2, L, pot)


def test_asymmetric_L_rejected():
    def func(t):
        return np.array([[1.0, 1.0], [0.0, 1.0]])

    L = MatrixFunction(2, func)
    with pytest.raises(ProblemError, match="symmetric"):
        L.values(np.array([0.0, 1.0]))


def test_make_problem_by_name():
    assert make_problem("paper-example", a=2.5).params["a"] == 2.5
    with pytest.raises(ProblemError, match="unknown problem"):
        make_problem("nope")


def test_m0_tends_to_a():
    # oracle: infimum of e^{-t^2} + a on a fine grid
    ts = np.linspace(-50, 50, 200001)
    for a in (0.5, 3.0):
        inf = float(np.min(np.exp(-ts**2) + a))
        rep = check_conditions(paper_example(a))
        assert rep.m0 == pytest.approx(inf, abs=1e-12)
        assert rep.m0 == pytest.approx(a, abs=1e-12)


def test_W1_ratio_small_at_tiny_u():
    rep = check_conditions(paper_example(3.0))
    table = dict(rep.W1_smallness)
    # independent evaluation of the analytic W_u ratio at |u| = 1e-6
    s = 1e-6
    lg = np.log(np.e + s)
    factor = (1 - 1 / lg) + 0.5 * s / ((np.e + s) * lg**2)
    ts = SamplingPlan().points()
    expected = np.max(np.exp(-ts**2) + 3.0) * factor
    assert table[1e-6] == pytest.approx(expected, rel=1e-9)
    assert table[1e-6] <= 1e-5
    assert rep.W1_nonincreasing


def test_harmonic_l_and_L2():
    spec = harmonic_oscillator()
    rep = check_conditions(spec)
    assert rep.L1_plausible
    table = dict(estimate_L2(spec, SamplingPlan().points(), [1.0, 2.0]))
    # |L'| / |L| = 2 / |t|, largest at |t| = rbar
    assert table[1.0] == pytest.approx(2.0, rel=1e-8)
    assert table[2.0] == pytest.approx(1.0, rel=1e-8)
    assert rep.L2_estimate[1] == 1.0
    assert rep.L2_estimate[0] == pytest.approx(2.0, rel=1e-8)


def test_paper_example_report_fields():
    rep = check_conditions(paper_example(3.0))
    assert rep.even_checked is True
    assert rep.L1_plausible
    assert np.isfinite(rep.C_W_estimate) and rep.C_W_estimate > 0
    # |w_u| <= C_w |u| with w_u = W_u - M u; the bounded factor makes C_w <= a + 1
    assert 0 < rep.C_w_estimate <= 4.0 + 1e-9
    s = rep.summary()
    assert s["m0"] == rep.m0 and "L2_table" in s


def test_check_conditions_deterministic():
    a = check_conditions(paper_example(3.0)).summary()
    b = check_conditions(paper_example(3.0)).summary()
    assert a == b


def test_require_W2_without_M():
    with pytest.raises(ProblemError):
        check_conditions(harmonic_oscillator(), require_W2=True)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-40, 40), min_size=1, max_size=20), st.integers(1, 4))
def test_L_and_M_symmetric(ts, dim):
    spec = paper_example(3.0, dim=dim)
    t = np.array(ts)
    for mf in (spec.L, spec.potential.M):
        m = mf.values(t)
        assert np.abs(m - m.transpose(0, 2, 1)).max() <= 1e-12 * max(1.0, np.abs(m).max())


def test_custom_potential_w_u():
    M = MatrixFunction.scalar(1, lambda t: np.full(len(t), 2.0))
    pot = PotentialSpec(1, W=lambda t, u: u[:, 0] ** 2, W_u=lambda t, u: 2 * u, M=M)
    t = np.zeros(3)
    u = np.ones((3, 1))
    assert np.allclose(pot.w_u(t, u), 0.0)


def test_ell_fragility_flag():
    dec = eigendecompose(assemble_operator(paper_example(3.0), Grid(8.0, 399)))
    rep = attach_spectrum(check_conditions(paper_example(3.0)), dec)
    assert rep.W3_holds and rep.W3_margin == pytest.approx(3.0 - dec.eigenvalues[1])
    assert rep.ell_fragile is False
    # put m0 right next to an eigenvalue
    rep.m0 = float(dec.eigenvalues[3]) * (1 + 1e-5)
    assert attach_spectrum(rep, dec).ell_fragile is True
