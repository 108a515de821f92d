import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homoclinic import spectrum as spmod
from homoclinic.discretization import Grid, assemble_operator, quad_form_a
from homoclinic.problem import MatrixFunction, PotentialSpec, ProblemSpec, harmonic_oscillator, paper_L, paper_example
from homoclinic.spectrum import (
    FragileClassificationWarning,
    SpectrumError,
    check_W4,
    classify,
    eigendecompose,
    energy_norm_sq,
    min_abs_eig_A_minus_M,
    project,
)


@pytest.fixture(scope="module")
def harmonic_dec():
    return eigendecompose(assemble_operator(harmonic_oscillator(), Grid(8.0, 1599)))


@pytest.fixture(scope="module")
def paper_dec():
    return eigendecompose(assemble_operator(paper_example(3.0), Grid(8.0, 399)))


def test_harmonic_lowest(harmonic_dec):
    assert np.allclose(harmonic_dec.eigenvalues[:3], [1, 3, 5], atol=2e-3)
    assert harmonic_dec.complete


def test_ascending_and_orthonormal(paper_dec):
    lam = paper_dec.eigenvalues
    assert np.all(np.diff(lam) >= 0)
    assert lam[-1] > lam[0]
    assert paper_dec.orthonormality_error() <= 1e-10


def test_partial_matches_full(paper_dec):
    op = assemble_operator(paper_example(3.0), Grid(8.0, 399))
    part = eigendecompose(op, count=7)
    assert np.allclose(part.eigenvalues, paper_dec.eigenvalues[:7], rtol=1e-12)
    with pytest.raises(SpectrumError):
        eigendecompose(op, count=0)


def test_vector_case_doubles_multiplicity():
    one = eigendecompose(assemble_operator(paper_example(3.0, dim=1), Grid(4.0, 99, 1)))
    two = eigendecompose(assemble_operator(paper_example(3.0, dim=2), Grid(4.0, 99, 2)))
    assert np.allclose(two.eigenvalues, np.repeat(one.eigenvalues, 2), rtol=1e-11, atol=1e-9)
    assert two.orthonormality_error() <= 1e-10


def test_iterative_route(monkeypatch):
    op = assemble_operator(harmonic_oscillator(), Grid(8.0, 799))
    full = eigendecompose(op, count=5)
    monkeypatch.setattr(spmod, "DENSE_LIMIT", 100)
    it = eigendecompose(op, count=5)
    assert np.allclose(it.eigenvalues, full.eigenvalues, rtol=1e-10)
    assert it.orthonormality_error() <= 1e-10


def test_classify_ell(harmonic_dec):
    assert classify(harmonic_dec, 4.0).ell == 2
    assert classify(harmonic_dec, 0.5).ell == 0
    assert classify(harmonic_dec, None).ell == 0
    with pytest.raises(SpectrumError):
        classify(harmonic_dec, -1.0)


def test_zero_tol_zero_all_positive(harmonic_dec):
    split = classify(harmonic_dec, 4.0, zero_tol=0.0)
    assert len(split.minus) == 0 and len(split.zero) == 0
    assert len(split.plus) == harmonic_dec.count


def test_fragile_warning(harmonic_dec):
    with pytest.warns(FragileClassificationWarning):
        classify(harmonic_dec, 4.0, zero_tol=0.5)


def test_paper_counts_stable_under_refinement():
    spec = paper_example(3.0)
    out = []
    for n in (2399, 4799):
        dec = eigendecompose(assemble_operator(spec, Grid(12.0, n)))
        with warnings.catch_warnings():
            warnings.simplefilter("error", FragileClassificationWarning)
            split = classify(dec, 3.0)
        out.append((dec.n_minus, dec.n_zero, split.ell))
    assert out[0] == out[1] == (1, 0, 2)


def test_project_examples(paper_dec, rng):
    split = classify(paper_dec, 3.0)
    i = split.plus[0]
    e = paper_dec.vectors[:, i]
    um, u0, up = project(e, paper_dec, split)
    g = paper_dec.grid
    assert g.l2(um) <= 1e-12 and g.l2(u0) <= 1e-12 and g.l2(up - e) <= 1e-12
    zero = np.zeros(g.size)
    assert all(np.all(p == 0) for p in project(zero, paper_dec, split))
    for _ in range(10):
        u = rng.standard_normal(g.size)
        parts = project(u, paper_dec, split)
        assert g.l2(sum(parts) - u) <= 1e-9 * g.l2(u)


def test_energy_norm_of_eigenvector(paper_dec):
    split = classify(paper_dec, 3.0)
    for k in (0, 1, 10):
        assert energy_norm_sq(paper_dec.vectors[:, k], paper_dec, split) == pytest.approx(
            abs(paper_dec.eigenvalues[k]), rel=1e-12)


def test_partial_decomposition_refuses_unresolved(paper_dec, rng):
    op = assemble_operator(paper_example(3.0), Grid(8.0, 399))
    part = eigendecompose(op, count=5)
    split = classify(part, 3.0)
    with pytest.raises(SpectrumError):
        project(rng.standard_normal(399), part, split)
    # a vector inside the retained span is fine
    project(part.vectors[:, 2], part, split)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_norm_identity(seed):
    dec, split, op = _paper_small()
    u = np.random.default_rng(seed).standard_normal(dec.grid.size)
    um, _, up = project(u, dec, split)
    lhs = quad_form_a(u, u, op)
    rhs = energy_norm_sq(up, dec, split) - energy_norm_sq(um, dec, split)
    assert abs(lhs - rhs) <= 1e-9 * abs(lhs)


_cache = {}


def _paper_small():
    if not _cache:
        op = assemble_operator(paper_example(3.0), Grid(8.0, 399))
        dec = eigendecompose(op)
        _cache["v"] = (dec, classify(dec, 3.0), op)
    return _cache["v"]


@pytest.mark.parametrize("b", [1.0, 10.0, 100.0])
def test_b_bound(b, rng):
    dec, _, _ = _paper_small()
    split = classify(dec, 3.0, b=b)
    idx = split.b_plus(dec)
    assert idx.size > 0
    for _ in range(100):
        c = np.zeros(dec.count)
        c[idx] = rng.standard_normal(idx.size)
        u = dec.synthesize(c)
        assert b * dec.grid.l2(u) ** 2 <= energy_norm_sq(u, dec, split)


def test_w4_singular_case():
    # independent dense route: eigenvalues of -D2 + L - e^{-t^2}; choosing a equal to
    # one of them puts 0 in the spectrum of A - M
    g = Grid(8.0, 399)
    t, h = g.nodes, g.h
    D = (2 * np.eye(g.n) - np.eye(g.n, k=1) - np.eye(g.n, k=-1)) / h**2
    mu = np.linalg.eigvalsh(D + np.diag(paper_L(t) - np.exp(-t**2)))
    a = float(mu[mu > 0][0])
    cert = check_W4(paper_example(a), g)
    assert not cert.holds
    assert cert.min_abs_eig < 1e-4


def test_w4_zero_M_gives_lowest_eigenvalue(harmonic_dec):
    base = harmonic_oscillator()
    zero = MatrixFunction.scalar(1, lambda t: np.zeros(len(t)))
    spec = ProblemSpec(1, base.L, PotentialSpec(1, base.potential.W, base.potential.W_u, M=zero))
    g = Grid(8.0, 1599)
    assert min_abs_eig_A_minus_M(spec, g) == pytest.approx(harmonic_dec.eigenvalues[0], rel=1e-12)
    assert check_W4(spec, g).holds


def test_w4_stable_default():
    cert = check_W4(paper_example(3.0), Grid(12.0, 2399))
    assert cert.holds and cert.holds_refined and cert.stable
