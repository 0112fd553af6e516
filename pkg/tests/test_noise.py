import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from levyaa.noise import (PURPOSE_WIENER, JumpMeasureConfig, LevyPathSegment, QWienerConfig,
                          StreamId, compensator_drift, sample_jumps, sample_levy_segment,
                          sample_wiener_increments, wiener_increments_for_steps,
                          write_segment_csv)

POWER = JumpMeasureConfig("truncated_power_law", 0.1,
                          {"alpha": 0.5, "c_plus": 0.5, "c_minus": 0.5, "s_max": 2.0})
SKEWED = JumpMeasureConfig("truncated_power_law", 0.1,
                           {"alpha": 0.5, "c_plus": 0.7, "c_minus": 0.3, "s_max": 2.0})
ATOMS = JumpMeasureConfig("finite_atoms", 0.1,
                          {"atoms": [{"size": 1.0, "rate": 0.5}, {"size": -0.5, "rate": 2.0}]},
                          direction_mode="fixed", direction_index=2)


def density(cfg, s):
    p = cfg.parameters
    c = p["c_plus"] if s > 0 else p["c_minus"]
    return c * abs(s) ** (-1 - p["alpha"]) if 0 < abs(s) <= p["s_max"] else 0.0


def quad_moment(cfg, lo, hi, power, signed=False):
    hi = min(hi, cfg.parameters["s_max"])
    f = (lambda s: s * density(cfg, s)) if signed else (lambda s: abs(s) ** power * density(cfg, s))
    pos, _ = quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12)
    neg, _ = quad(f, -hi, -lo, epsabs=1e-13, epsrel=1e-12)
    return pos + neg


def test_large_jump_mass_matches_quadrature():
    # (c_plus + c_minus) int_1^2 s^-1.5 ds = 2 - sqrt(2)
    assert POWER.b == pytest.approx(quad_moment(POWER, 1.0, math.inf, 0.0), rel=1e-10)
    assert POWER.b == pytest.approx(2.0 - math.sqrt(2.0), rel=1e-14)


@pytest.mark.parametrize("lo,hi,power", [(0.1, 1.0, 0.0), (0.0, 1.0, 2.0), (1.0, np.inf, 2.0),
                                         (0.0, 1.0, 1.0), (0.3, 1.7, 1.5)])
def test_abs_moments_match_quadrature(lo, hi, power):
    assert SKEWED.abs_moment(lo, hi, power) == pytest.approx(
        quad_moment(SKEWED, lo, hi, power), rel=1e-9)


def test_divergent_moment_reported_as_infinite():
    assert POWER.abs_moment(0.0, 1.0, 0.0) == math.inf
    assert math.isfinite(POWER.levy_integrability())


def test_compensator_drift_matches_quadrature():
    oracle = quad_moment(SKEWED, 0.1, 1.0, 1.0, signed=True)
    drift = compensator_drift(SKEWED, 4)
    np.testing.assert_allclose(drift, oracle / 4, rtol=1e-10)
    assert np.all(compensator_drift(POWER, 4) == 0)


def test_atoms_moments():
    assert ATOMS.b == 0.5
    assert ATOMS.small_rate == 2.0
    assert ATOMS.abs_moment(0.0, 1.0, 2.0) == pytest.approx(0.5)
    np.testing.assert_array_equal(compensator_drift(ATOMS, 3), [0.0, -1.0, 0.0])


@pytest.mark.parametrize("bad", [
    dict(family="nope", small_cutoff=0.1),
    dict(family="truncated_power_law", small_cutoff=1.5),
    dict(family="truncated_power_law", small_cutoff=0.1, parameters={"alpha": 2.5}),
    dict(family="truncated_power_law", small_cutoff=0.1, parameters={"beta": 1}),
    dict(family="finite_atoms", small_cutoff=0.1, parameters={"atoms": []}),
    dict(family="finite_atoms", small_cutoff=0.1,
         parameters={"atoms": [{"size": 0.0, "rate": 1.0}]}),
    dict(family="truncated_power_law", small_cutoff=0.1, direction_mode="sideways"),
])
def test_invalid_jump_configs(bad):
    with pytest.raises(ValueError):
        JumpMeasureConfig(**bad)


def test_sizes_respect_band_and_mean(rng):
    s = POWER.sample_sizes(rng, 200_000, 0.1, 1.0)
    assert np.all((np.abs(s) >= 0.1) & (np.abs(s) < 1.0))
    mean_abs = POWER.abs_moment(0.1, 1.0, 1.0) / POWER.rate(0.1, 1.0)
    se = np.abs(s).std() / math.sqrt(s.size)
    assert abs(np.abs(s).mean() - mean_abs) < 4 * se
    assert abs((s > 0).mean() - 0.5) < 4 * 0.5 / math.sqrt(s.size)


def test_wiener_covariance_scaling():
    cfg = QWienerConfig.power(3)
    np.testing.assert_allclose(cfg.q_eigenvalues, [1.0, 0.25, 1 / 9])
    assert cfg.operator_norm == 1.0
    steps = np.full(40_000, 0.01)
    dw = wiener_increments_for_steps(cfg, steps, StreamId(1, 0, PURPOSE_WIENER))
    var = dw.var(axis=0)
    target = cfg.q_eigenvalues * 0.01
    se = target * math.sqrt(2.0 / steps.size)
    assert np.all(np.abs(var - target) < 4 * se)


def test_zero_length_steps_give_zero_increments():
    dw = wiener_increments_for_steps(QWienerConfig.power(2), [0.0, 0.1, 0.0], StreamId(0))
    assert np.all(dw[[0, 2]] == 0) and np.all(dw[1] != 0)


def test_grid_must_increase():
    with pytest.raises(ValueError):
        sample_wiener_increments(QWienerConfig.power(2), [0.0, 0.0, 1.0], StreamId(0))
    with pytest.raises(ValueError):
        sample_jumps(POWER, [1.0], StreamId(0))


def test_streams_are_deterministic_and_distinct():
    grid = np.linspace(0, 1, 101)
    cfg = QWienerConfig.power(4)
    a = sample_wiener_increments(cfg, grid, StreamId(5, 1, PURPOSE_WIENER))
    b = sample_wiener_increments(cfg, grid, StreamId(5, 1, PURPOSE_WIENER))
    c = sample_wiener_increments(cfg, grid, StreamId(5, 2, PURPOSE_WIENER))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        StreamId(-1).rng()


def test_jump_events_lie_in_their_cells():
    grid = np.linspace(-2.0, 3.0, 51)
    for backward in (False, True):
        small, large = sample_jumps(POWER, grid, StreamId(9, 0), modes=5, backward=backward)
        for ev in (small, large):
            assert np.all(grid[ev.cells] <= ev.times) and np.all(ev.times <= grid[ev.cells + 1])
            assert np.all(np.diff(ev.times) >= 0)
            assert np.all((ev.modes >= 0) & (ev.modes < 5))
        assert np.all(np.abs(small.sizes) < 1) and np.all(np.abs(large.sizes) >= 1)


def test_fixed_direction_and_binning():
    grid = np.linspace(0, 50, 11)
    small, large = sample_jumps(ATOMS, grid, StreamId(2), modes=3)
    assert np.all(small.modes == 1) and np.all(large.modes == 1)
    binned = large.binned(10, 3)
    assert binned[:, 1].sum() == pytest.approx(large.sizes.sum())
    assert np.all(binned[:, [0, 2]] == 0)
    np.testing.assert_allclose(large.vectors(3).sum(axis=0), binned.sum(axis=0))


def test_ito_isometry_monte_carlo():
    """E|sum h dW|^2 = sum_n h_n^2 q_n T for a per-mode multiplier h."""
    cfg = QWienerConfig.power(4)
    h = np.array([1.0, -2.0, 0.5, 3.0])
    reps, steps = 4000, 20
    grid = np.linspace(0, 1, steps + 1)
    vals = np.empty(reps)
    for r in range(reps):
        dw = sample_wiener_increments(cfg, grid, StreamId(11, r, PURPOSE_WIENER))
        vals[r] = np.sum((h * dw.sum(axis=0)) ** 2)
    target = float(np.sum(h**2 * cfg.q_eigenvalues))
    assert abs(vals.mean() - target) < 3 * vals.std() / math.sqrt(reps)


def test_small_jump_compensation_monte_carlo():
    """Compensated small-jump sums of a skewed measure have mean zero."""
    reps, T = 4000, 1.0
    grid = np.linspace(0, T, 11)
    drift = compensator_drift(SKEWED, 1)[0]
    assert drift > 0
    vals = np.empty(reps)
    for r in range(reps):
        small, _ = sample_jumps(SKEWED, grid, StreamId(3, r), modes=1)
        vals[r] = small.sizes.sum() - T * drift
    assert abs(vals.mean()) < 3 * vals.std() / math.sqrt(reps)


@given(seed=st.integers(0, 2**32), offset=st.floats(-500, 500, allow_nan=False))
def test_shift_preserves_increments(seed, offset):
    grid = np.linspace(-1.0, 1.0, 21)
    seg = sample_levy_segment(QWienerConfig.power(3), POWER, grid, seed, 0, anchor=0.0)
    moved = seg.shifted(offset)
    assert np.array_equal(moved.wiener, seg.wiener)
    np.testing.assert_allclose(moved.large.times - offset, seg.large.times, atol=1e-9)
    assert np.array_equal(moved.small.cells, seg.small.cells)


def test_two_sided_wiener_is_prefix_stable():
    """Lengthening the backward side keeps the increments nearest the anchor."""
    cfg = QWienerConfig.power(3)
    short = sample_levy_segment(cfg, POWER, np.arange(-10, 11) * 0.1, 4, 0, anchor=0.0)
    long = sample_levy_segment(cfg, POWER, np.arange(-30, 21) * 0.1, 4, 0, anchor=0.0)
    np.testing.assert_array_equal(short.wiener, long.wiener[20:40])


def test_anchor_must_be_grid_point():
    with pytest.raises(ValueError):
        sample_levy_segment(QWienerConfig.power(2), POWER, np.linspace(0, 1, 11), 0, anchor=0.55)


def test_coarsen_preserves_totals():
    grid = np.linspace(0, 2, 41)
    seg = sample_levy_segment(QWienerConfig.power(3), POWER, grid, 8)
    c = seg.coarsen(4)
    assert c.n_cells == 10
    np.testing.assert_allclose(c.wiener.sum(axis=0), seg.wiener.sum(axis=0), atol=1e-14)
    np.testing.assert_allclose(c.binned_jumps()[1], seg.binned_jumps()[1].reshape(10, 4, 3).sum(1))
    with pytest.raises(ValueError):
        seg.coarsen(3)


def test_quiet_segment():
    seg = LevyPathSegment.quiet(np.linspace(0, 1, 5), 3)
    assert seg.wiener.shape == (4, 3) and not seg.wiener.any()
    assert len(seg.small) == len(seg.large) == 0


def test_segment_csv(tmp_path):
    seg = sample_levy_segment(QWienerConfig.power(2), ATOMS, np.linspace(0, 5, 6), 1)
    inc, ev = write_segment_csv(seg, tmp_path / "seg")
    rows = list(csv.reader(inc.open()))
    assert rows[0] == ["t", "mode", "increment"] and len(rows) == 1 + 5 * 2
    events = list(csv.reader(ev.open()))
    assert events[0] == ["t", "abs_y", "mode", "size", "kind"]
    assert len(events) - 1 == len(seg.small) + len(seg.large)
