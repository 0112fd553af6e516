"""Mild solutions: the integral operator, Picard iteration, forward stepping.

Discretisation on a uniform grid ``t_k`` (``k = 0..n``) that starts
``burn_in`` before the output window (the lower limits at minus infinity are
cut there):

* inner memory integrals are carried recursively,
  ``Y1_{k+1} = e^{-r1 dt} Y1_k + phi_{r1} f_k`` and
  ``Y2_{k+1} = e^{-r2 dt} (Y2_k + h_k dW_k + theta_k (dJ^small_k - dt c) + theta_k dJ^large_k)``
  where ``c`` is the compensator drift of the sampled small-jump band;
* the outer semigroup convolution is an exponential Euler step,
  ``X_{k+1} = e^{-lambda dt} X_k + phi_lambda (g_k + Y1_k + Y2_k)``;

with ``phi_a = (1 - e^{-a dt}) / a``. All coefficients are evaluated at the
left grid point, i.e. before the cell's jumps are applied.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import exp_scan
from .noise import LevyPathSegment, compensator_drift, sample_levy_segment
from .scenario import Scenario

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, trace, path_index=None):
        super().__init__(message)
        self.trace = list(trace)
        self.path_index = path_index


def _divides(span: float, dt: float) -> int:
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-12 * max(1.0, abs(span)):
        raise ValueError(f"dt={dt} does not divide {span}")
    return n


@dataclass(frozen=True)
class GridSpec:
    t_start: float
    t_end: float
    dt: float
    burn_in: float = 3.0

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("t_start must be < t_end")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        _divides(self.t_end - self.t_start, self.dt)
        _divides(self.burn_in, self.dt) if self.burn_in > 0 else 0

    @property
    def n_window(self) -> int:
        return _divides(self.t_end - self.t_start, self.dt)

    @property
    def n_burn(self) -> int:
        return _divides(self.burn_in, self.dt) if self.burn_in > 0 else 0

    @property
    def n_cells(self) -> int:
        return self.n_burn + self.n_window

    def relative_times(self) -> np.ndarray:
        return self.dt * np.arange(-self.n_burn, self.n_window + 1)

    def times(self) -> np.ndarray:
        return self.relative_times() + self.t_start

    def shifted(self, offset: float) -> "GridSpec":
        return GridSpec(self.t_start + offset, self.t_end + offset, self.dt, self.burn_in)

    def refined(self, factor: int) -> "GridSpec":
        return GridSpec(self.t_start, self.t_end, self.dt / factor, self.burn_in)

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "dt": self.dt,
                "burn_in": self.burn_in}


@dataclass
class SolutionPath:
    grid: np.ndarray
    states: np.ndarray
    noise_ref: tuple = ()
    iterations: int | None = None
    window_start: int = 0

    def __post_init__(self):
        if self.states.shape[0] != self.grid.size:
            raise ValueError("states and grid lengths differ")

    def index_of(self, t: float) -> int:
        dt = self.grid[1] - self.grid[0]
        k = int(round((t - self.grid[0]) / dt))
        if not 0 <= k < self.grid.size or abs(self.grid[k] - t) > 1e-9 * max(1.0, abs(dt)):
            raise ValueError(f"time {t} is not on the solution grid")
        return k

    def at(self, t: float) -> np.ndarray:
        return self.states[self.index_of(t)]

    def window(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid[self.window_start:], self.states[self.window_start:]

    def distance(self, other: "SolutionPath") -> float:
        """``max_t ||x(t) - y(t)||`` over the shared grid."""
        return float(np.sqrt(np.max(np.sum((self.states - other.states) ** 2, axis=1))))


@dataclass
class _Drivers:
    """Noise quantities reused by every application of the operator."""

    times: np.ndarray
    dt: float
    dW: np.ndarray
    small: np.ndarray
    large: np.ndarray
    decay_x: np.ndarray
    phi_x: np.ndarray
    a1: float
    phi1: float
    a2: float
    window_start: int
    noise_ref: tuple = field(default=())


def _prepare(scn: Scenario, grid: GridSpec, noise: LevyPathSegment) -> _Drivers:
    times = grid.times()
    if noise.grid.shape != times.shape or not np.allclose(noise.grid, times, rtol=0,
                                                          atol=1e-9 * max(1.0, grid.dt)):
        raise ValueError("noise segment grid does not match the solver grid")
    if noise.modes != scn.modes:
        raise ValueError("noise and scenario disagree on the number of modes")
    dt = grid.dt
    small, large = noise.binned_jumps()
    small -= dt * compensator_drift(scn.jumps, scn.modes)
    lam = scn.semigroup.decay_rates
    return _Drivers(
        times=times,
        dt=dt,
        dW=noise.wiener,
        small=small,
        large=large,
        decay_x=np.exp(-lam * dt),
        phi_x=-np.expm1(-lam * dt) / lam,
        a1=scn.B1.decay(dt),
        phi1=scn.B1.cell_integral(dt),
        a2=scn.B2.decay(dt),
        window_start=grid.n_burn,
        noise_ref=noise.seed_record,
    )


def _lambda(scn: Scenario, drv: _Drivers, states: np.ndarray) -> np.ndarray:
    m = scn.modes
    c = scn.evaluate(drv.times[:-1], states[:-1])
    theta = scn.jump_coefficient(c)
    inner2 = c["h"] * drv.dW + theta * drv.small + theta * drv.large
    forcing = np.hstack([drv.phi1 * c["f"], drv.a2 * inner2])
    decays = np.concatenate([np.full(m, drv.a1), np.full(m, drv.a2)])
    Y = exp_scan(decays, forcing)
    outer = drv.phi_x * (c["g"] + Y[:-1, :m] + Y[:-1, m:])
    return exp_scan(drv.decay_x, outer)


def _as_states(x, n_points: int, modes: int) -> np.ndarray:
    states = x.states if isinstance(x, SolutionPath) else np.asarray(x, dtype=np.float64)
    if states.shape != (n_points, modes):
        raise ValueError(f"path has shape {states.shape}, expected {(n_points, modes)}")
    return states


def apply_lambda(scn: Scenario, grid: GridSpec, x, noise: LevyPathSegment) -> SolutionPath:
    """Evaluate the five-term integral operator on the path ``x``."""
    drv = _prepare(scn, grid, noise)
    states = _as_states(x, drv.times.size, scn.modes)
    return SolutionPath(drv.times, _lambda(scn, drv, states), drv.noise_ref,
                        window_start=drv.window_start)


def picard_solve(scn: Scenario, grid: GridSpec, noise: LevyPathSegment, tol: float = 1e-6,
                 max_iter: int = 50) -> tuple[SolutionPath, list]:
    """Iterate ``x_{k+1} = Lambda x_k`` from ``x_0 = 0``.

    Stops when ``max_t ||x_{k+1}(t) - x_k(t)|| < tol``; returns the last
    iterate and the distance trace. Raises :class:`ConvergenceError` otherwise.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    drv = _prepare(scn, grid, noise)
    x = np.zeros((drv.times.size, scn.modes))
    trace = []
    for _ in range(max_iter):
        x_new = _lambda(scn, drv, x)
        d = float(np.sqrt(np.max(np.sum((x_new - x) ** 2, axis=1))))
        trace.append(d)
        x = x_new
        if not math.isfinite(d):
            break
        if d < tol:
            return (SolutionPath(drv.times, x, drv.noise_ref, len(trace), drv.window_start),
                    trace)
    raise ConvergenceError(
        f"Picard iteration did not reach tol={tol} in {len(trace)} iterations "
        f"(last distance {trace[-1]:.3e})", trace)


def simulate_forward(scn: Scenario, a: float, x_a, grid: GridSpec,
                     noise: LevyPathSegment) -> SolutionPath:
    """Explicit time stepping of the mild equation started at time ``a``.

    The memory integrals start empty at ``a`` (lower limits equal to ``a``).
    ``a`` must be the first grid point.
    """
    drv = _prepare(scn, grid, noise)
    if abs(drv.times[0] - a) > 1e-9 * max(1.0, grid.dt):
        raise ValueError(f"start time {a} must equal the first grid point {drv.times[0]}")
    m = scn.modes
    n = drv.times.size
    X = np.empty((n, m))
    X[0] = np.asarray(x_a, dtype=np.float64)
    y1 = np.zeros(m)
    y2 = np.zeros(m)
    for k in range(n - 1):
        c = scn.evaluate(drv.times[k:k + 1], X[k:k + 1])
        theta = scn.jump_coefficient(c)[0]
        X[k + 1] = drv.decay_x * X[k] + drv.phi_x * (c["g"][0] + y1 + y2)
        y1 = drv.a1 * y1 + drv.phi1 * c["f"][0]
        y2 = drv.a2 * (y2 + c["h"][0] * drv.dW[k] + theta * (drv.small[k] + drv.large[k]))
    return SolutionPath(drv.times, X, drv.noise_ref, window_start=drv.window_start)


def ensemble_noise(scn: Scenario, grid: GridSpec, seed: int, path: int) -> LevyPathSegment:
    """Noise for path ``path``, anchored at the window start.

    The draws depend only on the grid relative to ``t_start``, so windows
    translated in time reuse identical noise (common random numbers).
    """
    rel = grid.relative_times()
    seg = sample_levy_segment(scn.wiener, scn.jumps, rel, seed, path, anchor=0.0)
    return seg.shifted(grid.t_start)


def _solve_one(args):
    scn, grid, seed, i, tol, max_iter = args
    try:
        path, _ = picard_solve(scn, grid, ensemble_noise(scn, grid, seed, i), tol, max_iter)
    except ConvergenceError as e:
        e.path_index = i
        raise
    return path


def ensemble_run(scn: Scenario, grid: GridSpec, n_paths: int, seed: int, tol: float = 1e-6,
                 max_iter: int = 50, workers: int = 1) -> list[SolutionPath]:
    """Independent Picard solutions; path ``i`` uses streams ``(seed, i, .)``."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    jobs = [(scn, grid, seed, i, tol, max_iter) for i in range(n_paths)]
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_solve_one, jobs, chunksize=max(1, n_paths // (4 * workers))))
        return [_solve_one(j) for j in jobs]
    except ConvergenceError as e:
        raise ConvergenceError(f"path {e.path_index}: {e}", e.trace, e.path_index) from None


def write_path_csv(path: SolutionPath, filename) -> Path:
    """Window part of a path as CSV with header ``t, c1..cN``."""
    filename = Path(filename)
    t, states = path.window()
    header = ",".join(["t"] + [f"c{n + 1}" for n in range(states.shape[1])])
    np.savetxt(filename, np.column_stack([t, states]), delimiter=",", header=header,
               comments="", fmt="%.17g")
    return filename


def read_path_csv(filename) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]
