import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from scipy.integrate import quad

from levyaa.noise import LevyPathSegment
from levyaa.scenario import scenario_from_dict
from levyaa.solver import (ConvergenceError, GridSpec, SolutionPath, apply_lambda,
                           ensemble_noise, ensemble_run, picard_solve, read_path_csv,
                           simulate_forward, write_path_csv)

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def linear(terms=("g",), delta=1.0):
    raw = yaml.safe_load((SCENARIO_DIR / "linear_forcing.yaml").read_text())
    raw["coefficients"].update(terms=list(terms), delta=delta)
    return scenario_from_dict(raw)


def test_grid_spec_counts():
    g = GridSpec(0.0, 1.0, 0.1, 0.5)
    assert (g.n_burn, g.n_window, g.n_cells) == (5, 10, 15)
    t = g.times()
    assert t[0] == pytest.approx(-0.5) and t[-1] == pytest.approx(1.0) and t.size == 16
    np.testing.assert_allclose(g.shifted(3.0).times(), t + 3.0)
    assert g.refined(2).n_cells == 30


@pytest.mark.parametrize("args", [(1.0, 0.0, 0.1), (0.0, 1.0, 0.0), (0.0, 1.0, 0.3),
                                  (0.0, 1.0, 0.1, -1.0), (0.0, 1.0, 0.1, 0.25)])
def test_grid_spec_rejects(args):
    with pytest.raises(ValueError):
        GridSpec(*args)


def test_linear_fixed_point():
    """Constant forcing c e_1 settles at c / pi^2 e_1 up to the burn-in transient."""
    scn = linear(delta=2.5)
    grid = GridSpec(0.0, 1.0, 0.01, 2.0)
    path, trace = picard_solve(scn, grid, LevyPathSegment.quiet(grid.times(), scn.modes))
    t, x = path.window()
    expect = 2.5 / math.pi**2 * (1 - np.exp(-math.pi**2 * (t + 2.0)))
    np.testing.assert_allclose(x[:, 0], expect, rtol=0, atol=1e-12)
    assert not x[:, 1:].any()
    assert abs(x[0, 0] - 2.5 / math.pi**2) <= 1e-5 + math.exp(-math.pi**2 * 2.0)
    assert len(trace) == 2


def _memory_oracle(scn, t, n, a):
    """Nested-quadrature value of mode n of the g + f terms at time t for the path x = 0."""
    c = scn.coefficients
    lam = scn.semigroup.decay_rates[n - 1]
    r = scn.B1.rate
    shape = 2 * math.sqrt(2) / (n * math.pi) if n % 2 else 0.0

    def g(s):
        return c.delta * float(c.amplitude("g", s)) * shape

    def f_mem(s):
        v, _ = quad(lambda u: math.exp(-r * (s - u)) * c.delta * float(c.amplitude("f", u)) * shape,
                    a, s, epsabs=1e-13, epsrel=1e-11)
        return v

    outer, _ = quad(lambda s: math.exp(-lam * (t - s)) * (g(s) + f_mem(s)), a, t,
                    epsabs=1e-13, epsrel=1e-11, limit=200)
    return outer


def test_memory_term_matches_nested_quadrature(contracting):
    """Lambda applied to the zero path without noise: first-order agreement."""
    errs = []
    oracle = None
    for dt in (0.004, 0.002, 0.001):
        grid = GridSpec(0.0, 1.0, dt, 0.5)
        out = apply_lambda(contracting, grid, np.zeros((grid.n_cells + 1, 64)),
                           LevyPathSegment.quiet(grid.times(), 64))
        if oracle is None:
            oracle = np.array([_memory_oracle(contracting, 1.0, n, -0.5) for n in (1, 3)])
        errs.append(np.abs(out.at(1.0)[[0, 2]] - oracle).max())
    assert errs[-1] < 2e-3 * np.abs(oracle).max()
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all((ratios > 0.4) & (ratios < 0.6)), ratios


def test_picard_fixed_point_equals_forward_recursion(contracting):
    grid = GridSpec(0.0, 2.0, 0.01, 1.0)
    noise = ensemble_noise(contracting, grid, 12, 0)
    path, _ = picard_solve(contracting, grid, noise, tol=1e-12)
    fwd = simulate_forward(contracting, grid.times()[0], np.zeros(64), grid, noise)
    assert path.distance(fwd) < 1e-11


def test_picard_residual_and_geometric_decay(contracting):
    grid = GridSpec(0.0, 2.0, 0.01, 1.0)
    noise = ensemble_noise(contracting, grid, 5, 3)
    tol = 1e-6
    path, trace = picard_solve(contracting, grid, noise, tol=tol)
    resid = apply_lambda(contracting, grid, path, noise).distance(path)
    assert resid <= 2 * tol
    assert trace[-1] < tol
    ratios = np.array(trace[1:]) / np.array(trace[:-1])
    assert np.all(ratios[2:] < 0.25 + 0.1)


def test_zero_amplitude_gives_zero_paths(contracting):
    scn = contracting.with_coefficients(delta=0.0)
    grid = GridSpec(0.0, 1.0, 0.01, 0.5)
    paths = ensemble_run(scn, grid, 3, seed=1)
    assert all(not p.states.any() for p in paths)


def test_convergence_failure_names_path(contracting):
    grid = GridSpec(0.0, 1.0, 0.01, 0.5)
    with pytest.raises(ConvergenceError) as err:
        ensemble_run(contracting, grid, 2, seed=0, tol=1e-14, max_iter=2)
    assert err.value.path_index == 0 and "path 0" in str(err.value)
    assert len(err.value.trace) == 2


def test_forward_start_must_be_grid_start(contracting):
    grid = GridSpec(0.0, 1.0, 0.1, 0.5)
    with pytest.raises(ValueError):
        simulate_forward(contracting, 0.0, np.zeros(64), grid,
                         LevyPathSegment.quiet(grid.times(), 64))


def test_noise_grid_mismatch(contracting):
    grid = GridSpec(0.0, 1.0, 0.1, 0.5)
    with pytest.raises(ValueError):
        picard_solve(contracting, grid, LevyPathSegment.quiet(np.linspace(0, 1, 11), 64))
    with pytest.raises(ValueError):
        picard_solve(contracting, grid, LevyPathSegment.quiet(grid.times(), 8))
    with pytest.raises(ValueError):
        apply_lambda(contracting, grid, np.zeros((3, 64)), LevyPathSegment.quiet(grid.times(), 64))


def test_shifted_windows_share_noise(contracting):
    grid = GridSpec(0.0, 1.0, 0.01, 0.5)
    a = ensemble_noise(contracting, grid, 4, 2)
    b = ensemble_noise(contracting, grid.shifted(37.25), 4, 2)
    assert np.array_equal(a.wiener, b.wiener)
    np.testing.assert_allclose(b.large.times - 37.25, a.large.times, atol=1e-9)
    assert b.anchor == pytest.approx(37.25)


def test_parallel_matches_serial(contracting):
    grid = GridSpec(0.0, 0.5, 0.01, 0.5)
    serial = ensemble_run(contracting, grid, 3, seed=9)
    parallel = ensemble_run(contracting, grid, 3, seed=9, workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.states, b.states)


def test_path_csv_round_trip(contracting, tmp_path):
    grid = GridSpec(0.0, 0.5, 0.01, 0.5)
    p = ensemble_run(contracting, grid, 1, seed=2)[0]
    f = write_path_csv(p, tmp_path / "p.csv")
    t, x = read_path_csv(f)
    wt, wx = p.window()
    assert np.array_equal(t, wt) and np.array_equal(x, wx)
    assert f.read_text().splitlines()[0].split(",")[:3] == ["t", "c1", "c2"]
    again = write_path_csv(ensemble_run(contracting, grid, 1, seed=2)[0], tmp_path / "q.csv")
    assert again.read_bytes() == f.read_bytes()


def test_solution_path_lookup():
    p = SolutionPath(np.array([0.0, 0.5, 1.0]), np.zeros((3, 2)))
    assert p.index_of(0.5) == 1
    with pytest.raises(ValueError):
        p.at(0.25)
    with pytest.raises(ValueError):
        SolutionPath(np.array([0.0, 1.0]), np.zeros((3, 2)))
