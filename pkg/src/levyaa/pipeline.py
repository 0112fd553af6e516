"""Ensemble experiments: self-convergence, shifted windows, persistence.

Everything here is a deterministic function of the scenario, grid, seed and
path count. Paths on windows translated in time share their noise draws
(streams keyed on the path index and the window-relative grid), which is
what makes laws on different windows directly comparable.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .kernels import BACKEND
from .metrics import (AutomorphyReport, ShiftSequence, automorphy_profile,
                      find_recurrence_shifts, recurrence_error)
from .scenario import Scenario, scenario_from_dict
from .solver import (GridSpec, SolutionPath, ensemble_noise, ensemble_run, read_path_csv,
                     simulate_forward, write_path_csv)

MANIFEST_NAME = "manifest.json"
CONVERGENCE_BAND = (0.35, 0.7)


# ------------------------------------------------------------ self-convergence


@dataclass
class SelfConvergence:
    """RMS endpoint errors at ``dt`` and ``dt/2`` against a fine reference."""

    dt: float
    errors: tuple
    ratio: float
    n_paths: int
    reference_factor: int
    band: tuple = CONVERGENCE_BAND

    @property
    def passed(self) -> bool:
        return self.band[0] <= self.ratio <= self.band[1]

    def to_dict(self) -> dict:
        return {"dt": self.dt, "errors": list(self.errors), "ratio": self.ratio,
                "n_paths": self.n_paths, "reference_factor": self.reference_factor,
                "band": list(self.band), "passed": self.passed}


def self_convergence(scn: Scenario, grid: GridSpec, seed: int, n_paths: int = 16,
                     reference_factor: int = 8) -> SelfConvergence:
    """Forward-simulate at ``dt``, ``dt/2`` and ``dt/reference_factor`` on nested noise.

    Noise is drawn once on the finest grid and aggregated, so the three runs
    see the same path. The ratio ``err(dt/2) / err(dt)`` is about 1/2 for a
    first-order scheme.
    """
    if reference_factor < 4 or reference_factor % 2:
        raise ValueError("reference_factor must be even and >= 4")
    fine = grid.refined(reference_factor)
    zero = np.zeros(scn.modes)
    sq = np.zeros(2)
    for i in range(n_paths):
        noise = ensemble_noise(scn, fine, seed, i)
        ref = simulate_forward(scn, fine.times()[0], zero, fine, noise).states[-1]
        for j, f in enumerate((1, 2)):
            g = grid.refined(f)
            x = simulate_forward(scn, g.times()[0], zero, g,
                                 noise.coarsen(reference_factor // f)).states[-1]
            sq[j] += np.sum((x - ref) ** 2)
    err = np.sqrt(sq / n_paths)
    ratio = float(err[1] / err[0]) if err[0] > 0 else float("nan")
    return SelfConvergence(grid.dt, (float(err[0]), float(err[1])), ratio, n_paths,
                           reference_factor)


# -------------------------------------------------------------- shifted runs


def window_shifts(shifts: ShiftSequence, control_offset: float) -> list[float]:
    """Every recurrence shift followed by its control ``tau + control_offset``."""
    taus = [float(t) for t in shifts.shifts]
    return taus + [t + control_offset for t in taus]


def simulate_windows(scn: Scenario, grid: GridSpec, taus, n_paths: int, seed: int,
                     **solve_kw) -> tuple[list, dict]:
    """Ensembles on the base window and on each translated window."""
    base = ensemble_run(scn, grid, n_paths, seed, **solve_kw)
    shifted = {float(tau): ensemble_run(scn, grid.shifted(float(tau)), n_paths, seed, **solve_kw)
               for tau in taus}
    return base, shifted


def profile_times(grid: GridSpec, t_step: float) -> np.ndarray:
    """Sample times ``t_start, t_start + t_step, ...`` inside the window."""
    if t_step <= 0:
        raise ValueError("t_step must be positive")
    n = int(np.floor((grid.t_end - grid.t_start) / t_step + 1e-9))
    return grid.t_start + t_step * np.arange(n + 1)


@dataclass
class AutomorphyExperiment:
    report: AutomorphyReport
    shifts: ShiftSequence
    base: list
    shifted: dict
    timings: dict = field(default_factory=dict)


def run_automorphy(scn: Scenario, grid: GridSpec, n_paths: int, seed: int,
                   horizon: float = 200.0, count: int = 4, control_offset: float = 0.5,
                   t_step: float = 0.25, m: int = 8, pass_fraction: float = 0.7,
                   shifts: ShiftSequence | None = None, method: str = "auto",
                   **solve_kw) -> AutomorphyExperiment:
    """Simulate base, shifted and control windows and compare their laws."""
    freqs = scn.coefficients.forcing_frequencies()
    if shifts is None:
        shifts = find_recurrence_shifts(freqs, horizon, count)
    t0 = time.perf_counter()
    base, shifted = simulate_windows(scn, grid, window_shifts(shifts, control_offset),
                                     n_paths, seed, **solve_kw)
    t1 = time.perf_counter()
    report = automorphy_profile(freqs, base, shifted, shifts, profile_times(grid, t_step), m,
                                control_offset, pass_fraction, method)
    t2 = time.perf_counter()
    return AutomorphyExperiment(report, shifts, base, shifted,
                                {"simulate_s": t1 - t0, "profile_s": t2 - t1})


def explicit_shifts(scn: Scenario, taus) -> ShiftSequence:
    taus = np.asarray(taus, dtype=np.float64)
    freqs = scn.coefficients.forcing_frequencies()
    eps = recurrence_error(freqs, taus) if len(freqs) else np.zeros_like(taus)
    return ShiftSequence(taus, eps)


# ------------------------------------------------------------- persistence


def software_versions() -> dict:
    return {"levyaa": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pyyaml": yaml.__version__, "python": platform.python_version(),
            "backend": BACKEND}


@dataclass
class RunManifest:
    """Everything needed to regenerate an ensemble directory bit for bit."""

    scenario_name: str
    scenario_hash: str
    scenario: dict
    seed: int
    grid: dict
    n_paths: int
    tol: float
    max_iter: int
    outputs: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=software_versions)
    self_convergence: dict | None = None
    command: list = field(default_factory=lambda: list(sys.argv))

    def grid_spec(self) -> GridSpec:
        return GridSpec(**self.grid)

    def load_scenario(self) -> Scenario:
        scn = scenario_from_dict(self.scenario, name=self.scenario_name)
        if scn.hash != self.scenario_hash:
            raise ValueError("manifest scenario does not match its recorded hash")
        return scn

    def write(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        return cls(**json.loads(path.read_text()))


def path_filename(i: int) -> str:
    return f"path_{i:05d}.csv"


def write_ensemble(directory, paths: list[SolutionPath]) -> list[str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, p in enumerate(paths):
        write_path_csv(p, directory / path_filename(i))
        names.append(path_filename(i))
    return names


def read_ensemble(directory) -> tuple[RunManifest, list[SolutionPath]]:
    """Manifest plus the window part of every stored path."""
    directory = Path(directory)
    manifest = RunManifest.read(directory)
    paths = []
    for name in manifest.outputs:
        t, states = read_path_csv(directory / name)
        paths.append(SolutionPath(t, states))
    return manifest, paths
