import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from levyaa.spectral import (Semigroup, SpaceConfig, SpatialQuadrature, make_semigroup,
                             semigroup_apply, sine_basis, vector_norm)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = arrays(np.float64, 64, elements=finite)
times = st.floats(0.0, 5.0, allow_nan=False)


def test_dirichlet_rates():
    sg = Semigroup.dirichlet(64)
    n = np.arange(1, 65)
    np.testing.assert_allclose(sg.decay_rates, n**2 * np.pi**2, rtol=0)
    assert sg.stability_K == 1.0 and sg.stability_omega == pytest.approx(np.pi**2)


def test_identity_at_zero():
    sg = Semigroup.dirichlet(64)
    v = np.arange(64.0)
    assert np.array_equal(semigroup_apply(sg, 0.0, v), v)


def test_first_mode_decay():
    sg = Semigroup.dirichlet(64)
    e1 = np.zeros(64)
    e1[0] = 1.0
    out = semigroup_apply(sg, 1.0, e1)
    assert out[0] == pytest.approx(math.exp(-np.pi**2), rel=1e-15)
    assert np.all(out[1:] == 0)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        semigroup_apply(Semigroup.dirichlet(4), -0.1, np.ones(4))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        semigroup_apply(Semigroup.dirichlet(4), 0.1, np.ones(5))


def test_stability_constant_validated():
    with pytest.raises(ValueError):
        Semigroup(np.array([1.0, 2.0]), 1.0, 1.5)
    with pytest.raises(ValueError):
        Semigroup(np.array([1.0, 2.0]), 0.5, 1.0)
    with pytest.raises(ValueError):
        Semigroup(np.array([1.0, -2.0]), 1.0, 0.5)


@pytest.mark.parametrize("modes", [0, -3, 2.5])
def test_space_config_rejects_bad_modes(modes):
    with pytest.raises(ValueError):
        SpaceConfig(modes)


def test_abstract_diagonal_semigroup():
    sg = make_semigroup(SpaceConfig(3, "abstract_diagonal"), [2.0, 3.0, 5.0], 1.0, 2.0)
    assert sg.stability_omega == 2.0
    with pytest.raises(ValueError):
        make_semigroup(SpaceConfig(3, "dirichlet_sine"), [2.0, 3.0, 5.0])


@given(v=vectors, t=times)
def test_contraction_bound(v, t):
    sg = Semigroup.dirichlet(64)
    assert vector_norm(semigroup_apply(sg, t, v)) <= sg.bound(t) * vector_norm(v) + 1e-12 * (
        1 + vector_norm(v))


@given(v=vectors, s=times, t=times)
def test_composition_law(v, s, t):
    sg = Semigroup.dirichlet(64)
    lhs = semigroup_apply(sg, s + t, v)
    rhs = semigroup_apply(sg, s, semigroup_apply(sg, t, v))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(v).max()))


@given(v=vectors, t=st.floats(0.0, 1e-3))
def test_strong_continuity(v, t):
    sg = Semigroup.dirichlet(64)
    # |1 - exp(-lambda t)| <= lambda t
    gap = vector_norm(semigroup_apply(sg, t, v) - v)
    assert gap <= vector_norm(sg.decay_rates * t * v) + 1e-9


def test_norm_matches_function_space_quadrature():
    """Coefficient norm equals the L2(0,1) norm of the synthesised function."""
    c = np.array([0.3, -1.2, 0.0, 0.7])

    def u(r):
        return float(sine_basis([r], 4)[0] @ c)

    l2, _ = quad(lambda r: u(r) ** 2, 0.0, 1.0, limit=200)
    assert vector_norm(c) == pytest.approx(math.sqrt(l2), rel=1e-10)


def test_quadrature_round_trip(rng):
    q = SpatialQuadrature(64)
    c = rng.normal(size=(5, 64))
    np.testing.assert_allclose(q.analyse(q.synthesise(c)), c, atol=1e-12)


def test_quadrature_projects_smooth_function():
    """Analysis of sin(pi r) recovers 1/sqrt2 in the first mode."""
    q = SpatialQuadrature(8)
    coeffs = q.analyse(np.sin(np.pi * q.nodes))
    assert coeffs[0] == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    np.testing.assert_allclose(coeffs[1:], 0, atol=1e-12)


def test_quadrature_needs_enough_points():
    with pytest.raises(ValueError):
        SpatialQuadrature(600)
