"""Two-sided Levy noise on a time grid via the Levy-Ito decomposition.

The noise is a Q-Wiener part plus a Poisson random measure whose jumps are
split at ``|y| = 1``. Jumps with ``|y| < small_cutoff`` are dropped. Jumps in
the band ``[small_cutoff, 1)`` are sampled and the solver subtracts their
compensator drift.

Jump vectors are ``y = s * e_k``: a signed scalar size ``s`` drawn from the
configured family and a basis direction ``k`` (fixed, or uniform over modes).
Hence ``|y|_V = |s|``.

Random streams are counter-based: every draw comes from a generator seeded by
``(seed, path, purpose, side)``, so segments are reproducible bit-for-bit and
paths are independent of evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

JUMP_FAMILIES = ("truncated_power_law", "finite_atoms")
DIRECTION_MODES = ("fixed", "random_mode")

PURPOSE_WIENER = 1
PURPOSE_SMALL = 2
PURPOSE_LARGE = 3
SIDE_FORWARD = 0
SIDE_BACKWARD = 1


class StreamId(NamedTuple):
    seed: int
    path: int = 0
    purpose: int = 0
    side: int = SIDE_FORWARD

    def rng(self) -> np.random.Generator:
        if min(self) < 0:
            raise ValueError(f"stream id entries must be nonnegative: {tuple(self)}")
        return np.random.default_rng(np.random.SeedSequence([int(v) for v in self]))


def _as_rng(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, StreamId):
        return stream.rng()
    return StreamId(*stream).rng()


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("time grid needs at least two points")
    if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


# ---------------------------------------------------------------- Wiener part


@dataclass(frozen=True)
class QWienerConfig:
    """Diagonal covariance ``Q e_n = q_n e_n``."""

    q_eigenvalues: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_eigenvalues, dtype=np.float64)
        q.setflags(write=False)
        object.__setattr__(self, "q_eigenvalues", q)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("q_eigenvalues must be a non-empty 1-D array")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("q_eigenvalues must be positive and finite")

    @classmethod
    def power(cls, modes: int, exponent: float = 2.0, scale: float = 1.0):
        n = np.arange(1, modes + 1, dtype=np.float64)
        return cls(scale * n ** (-exponent))

    @property
    def modes(self) -> int:
        return self.q_eigenvalues.size

    @property
    def trace(self) -> float:
        return float(self.q_eigenvalues.sum())

    @property
    def operator_norm(self) -> float:
        return float(self.q_eigenvalues.max())


def wiener_increments_for_steps(cfg: QWienerConfig, steps, stream) -> np.ndarray:
    """Gaussian increments for explicit step lengths (zero-length steps allowed)."""
    steps = np.asarray(steps, dtype=np.float64)
    if np.any(steps < 0):
        raise ValueError("step lengths must be nonnegative")
    z = _as_rng(stream).standard_normal((steps.size, cfg.modes))
    return z * np.sqrt(np.outer(steps, cfg.q_eigenvalues))


def sample_wiener_increments(cfg: QWienerConfig, grid, stream) -> np.ndarray:
    """Per-step increments of the Q-Wiener process; shape (len(grid)-1, modes)."""
    grid = _check_grid(grid)
    return wiener_increments_for_steps(cfg, np.diff(grid), stream)


# ------------------------------------------------------------------ jump part


def _power_integral(a: float, b: float, p: float) -> float:
    """``int_a^b s**p ds`` for 0 <= a <= b <= inf (inf where divergent)."""
    if b <= a:
        return 0.0
    if p == -1.0:
        return math.inf if a == 0 or math.isinf(b) else math.log(b / a)
    e = p + 1.0
    if a == 0 and e <= 0:
        return math.inf
    if math.isinf(b):
        return math.inf if e >= 0 else -(a**e) / e
    return (b**e - a**e) / e


@dataclass(frozen=True)
class JumpMeasureConfig:
    """Closed-form intensity measure of the jump sizes.

    ``truncated_power_law``: density ``c_plus s^(-1-alpha)`` for sizes in
    ``(0, s_max]`` and ``c_minus |s|^(-1-alpha)`` for sizes in ``[-s_max, 0)``,
    with ``0 < alpha < 2``.

    ``finite_atoms``: ``parameters["atoms"]`` is a list of ``{"size", "rate"}``.
    """

    family: str
    small_cutoff: float
    parameters: dict = field(default_factory=dict)
    direction_mode: str = "random_mode"
    direction_index: int = 1

    def __post_init__(self):
        if self.family not in JUMP_FAMILIES:
            raise ValueError(f"unknown jump family {self.family!r}")
        if not 0 < self.small_cutoff < 1:
            raise ValueError("small_cutoff must lie in (0, 1)")
        if self.direction_mode not in DIRECTION_MODES:
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.direction_index < 1:
            raise ValueError("direction_index is 1-based")
        p = dict(self.parameters)
        if self.family == "truncated_power_law":
            allowed = {"alpha", "c_plus", "c_minus", "s_max"}
            if set(p) - allowed:
                raise ValueError(f"unknown power-law parameters {sorted(set(p) - allowed)}")
            p = {"alpha": 0.5, "c_plus": 0.5, "c_minus": 0.5, "s_max": 2.0, **p}
            p = {k: float(v) for k, v in p.items()}
            if not 0 < p["alpha"] < 2:
                raise ValueError("alpha must lie in (0, 2)")
            if p["c_plus"] < 0 or p["c_minus"] < 0 or p["c_plus"] + p["c_minus"] <= 0:
                raise ValueError("c_plus, c_minus must be nonnegative and not both zero")
            if not 0 < p["s_max"] < math.inf:
                raise ValueError("s_max must be positive and finite")
        else:
            if set(p) - {"atoms"}:
                raise ValueError(f"unknown atom parameters {sorted(set(p) - {'atoms'})}")
            atoms = p.get("atoms")
            if not atoms:
                raise ValueError("finite_atoms needs a non-empty 'atoms' list")
            clean = []
            for a in atoms:
                size, rate = float(a["size"]), float(a["rate"])
                if size == 0 or not math.isfinite(size):
                    raise ValueError("atom size must be finite and nonzero")
                if not 0 < rate < math.inf:
                    raise ValueError("atom rate must be positive and finite")
                clean.append({"size": size, "rate": rate})
            p = {"atoms": clean}
        object.__setattr__(self, "parameters", p)
        if not math.isfinite(self.rate(self.small_cutoff, math.inf)):
            raise ValueError("intensity above small_cutoff must be finite")

    # closed-form integrals over size bands lo <= |s| < hi

    def abs_moment(self, lo: float, hi: float, power: float) -> float:
        """``int_{lo <= |y| < hi} |y|**power nu(dy)``."""
        p = self.parameters
        if self.family == "truncated_power_law":
            c = p["c_plus"] + p["c_minus"]
            hi = min(hi, p["s_max"])
            if hi <= lo:
                return 0.0
            return c * _power_integral(lo, hi, power - 1.0 - p["alpha"])
        return sum(
            a["rate"] * abs(a["size"]) ** power
            for a in p["atoms"]
            if lo <= abs(a["size"]) < hi
        )

    def rate(self, lo: float, hi: float) -> float:
        return self.abs_moment(lo, hi, 0.0)

    def signed_moment(self, lo: float, hi: float) -> float:
        """``int_{lo <= |y| < hi} s nu(ds)`` for the scalar size s."""
        p = self.parameters
        if self.family == "truncated_power_law":
            hi_ = min(hi, p["s_max"])
            if hi_ <= lo:
                return 0.0
            return (p["c_plus"] - p["c_minus"]) * _power_integral(lo, hi_, -p["alpha"])
        return sum(a["rate"] * a["size"] for a in p["atoms"] if lo <= abs(a["size"]) < hi)

    @property
    def b(self) -> float:
        """Mass of the large jumps, ``nu(|y| >= 1)``."""
        return self.rate(1.0, math.inf)

    @property
    def small_rate(self) -> float:
        return self.rate(self.small_cutoff, 1.0)

    def levy_integrability(self) -> float:
        """``int min(|y|^2, 1) nu(dy)``; finite for every supported family."""
        return self.abs_moment(0.0, 1.0, 2.0) + self.b

    def direction_mean(self, modes: int) -> np.ndarray:
        """Expected unit direction vector ``E[e_k]``."""
        if self.direction_mode == "fixed":
            if self.direction_index > modes:
                raise ValueError("direction_index exceeds the number of modes")
            e = np.zeros(modes)
            e[self.direction_index - 1] = 1.0
            return e
        return np.full(modes, 1.0 / modes)

    def sample_sizes(self, rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
        """Signed sizes drawn from nu restricted to ``lo <= |s| < hi``."""
        if n == 0:
            return np.empty(0)
        p = self.parameters
        if self.family == "finite_atoms":
            sel = [a for a in p["atoms"] if lo <= abs(a["size"]) < hi]
            sizes = np.array([a["size"] for a in sel])
            rates = np.array([a["rate"] for a in sel])
            return sizes[rng.choice(sizes.size, size=n, p=rates / rates.sum())]
        alpha = p["alpha"]
        hi = min(hi, p["s_max"])
        u = rng.random(n)
        a, b = lo ** (-alpha), hi ** (-alpha)
        mags = (a - u * (a - b)) ** (-1.0 / alpha)
        sign_plus = p["c_plus"] / (p["c_plus"] + p["c_minus"])
        signs = np.where(rng.random(n) < sign_plus, 1.0, -1.0)
        return signs * mags

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "small_cutoff": self.small_cutoff,
            "parameters": self.parameters,
            "direction": {"mode": self.direction_mode, "index": self.direction_index},
        }


@dataclass(frozen=True)
class JumpEvents:
    """Jump events; ``modes`` are 0-based direction indices, ``cells`` grid cells."""

    times: np.ndarray
    sizes: np.ndarray
    modes: np.ndarray
    cells: np.ndarray

    @classmethod
    def empty(cls) -> "JumpEvents":
        return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    def __len__(self):
        return self.times.size

    def vectors(self, modes: int) -> np.ndarray:
        y = np.zeros((len(self), modes))
        y[np.arange(len(self)), self.modes] = self.sizes
        return y

    def binned(self, n_cells: int, modes: int) -> np.ndarray:
        """Sum of jump vectors per grid cell; shape (n_cells, modes)."""
        out = np.zeros((n_cells, modes))
        np.add.at(out, (self.cells, self.modes), self.sizes)
        return out

    def _concat(self, other: "JumpEvents") -> "JumpEvents":
        return JumpEvents(
            np.concatenate([self.times, other.times]),
            np.concatenate([self.sizes, other.sizes]),
            np.concatenate([self.modes, other.modes]),
            np.concatenate([self.cells, other.cells]),
        )

    def _sorted(self) -> "JumpEvents":
        order = np.argsort(self.times, kind="stable")
        return JumpEvents(self.times[order], self.sizes[order], self.modes[order], self.cells[order])


def _sample_band(cfg: JumpMeasureConfig, lo: float, hi: float, left, steps, cell_ids,
                 rng: np.random.Generator, modes: int) -> JumpEvents:
    rate = cfg.rate(lo, hi)
    counts = rng.poisson(rate * steps)
    total = int(counts.sum())
    if total == 0:
        return JumpEvents.empty()
    cells = np.repeat(cell_ids, counts)
    times = np.repeat(left, counts) + rng.random(total) * np.repeat(steps, counts)
    sizes = cfg.sample_sizes(rng, total, lo, hi)
    if cfg.direction_mode == "fixed":
        dirs = np.full(total, cfg.direction_index - 1, dtype=np.int64)
    else:
        dirs = rng.integers(0, modes, size=total)
    return JumpEvents(times, sizes, dirs, cells.astype(np.int64))


def sample_jumps(cfg: JumpMeasureConfig, grid, stream, modes: int = 1,
                 backward: bool = False) -> tuple[JumpEvents, JumpEvents]:
    """Sample (small, large) jump events on the grid.

    Counts per cell are Poisson with mean ``nu(band) * dt`` and event times are
    uniform inside their cell, so window counts are exact Poisson at any grid
    resolution. Small events have ``small_cutoff <= |y| < 1``, large ``|y| >= 1``.
    """
    grid = _check_grid(grid)
    if isinstance(stream, np.random.Generator):
        rng_small = rng_large = stream
    else:
        sid = StreamId(*stream)
        rng_small = sid._replace(purpose=PURPOSE_SMALL).rng()
        rng_large = sid._replace(purpose=PURPOSE_LARGE).rng()
    left, steps = grid[:-1], np.diff(grid)
    cells = np.arange(steps.size)
    if backward:
        # cells enumerated from the right end (the anchor) outwards
        left, steps, cells = left[::-1], steps[::-1], cells[::-1]
    small = _sample_band(cfg, cfg.small_cutoff, 1.0, left, steps, cells, rng_small, modes)
    large = _sample_band(cfg, 1.0, math.inf, left, steps, cells, rng_large, modes)
    return small._sorted(), large._sorted()


def compensator_drift(cfg: JumpMeasureConfig, modes: int = 1) -> np.ndarray:
    """``int_{small_cutoff <= |y| < 1} y nu(dy)`` as a vector, per unit time."""
    return cfg.signed_moment(cfg.small_cutoff, 1.0) * cfg.direction_mean(modes)


# -------------------------------------------------------------- path segments


@dataclass(frozen=True)
class LevyPathSegment:
    """Sampled noise on a grid.

    ``wiener`` holds per-cell increments, ``small``/``large`` the jump events.
    ``anchor`` is the time origin of the two-sided construction: cells right
    of it come from the forward process, cells left of it from an independent
    copy run backwards in time.
    """

    grid: np.ndarray
    anchor: float
    wiener: np.ndarray
    small: JumpEvents
    large: JumpEvents
    seed_record: tuple = ()

    @property
    def n_cells(self) -> int:
        return self.grid.size - 1

    @property
    def modes(self) -> int:
        return self.wiener.shape[1]

    @classmethod
    def quiet(cls, grid, modes: int, anchor: float | None = None) -> "LevyPathSegment":
        """Noise-free segment (zero increments, no jumps)."""
        grid = _check_grid(grid)
        return cls(grid, float(grid[0] if anchor is None else anchor),
                   np.zeros((grid.size - 1, modes)), JumpEvents.empty(), JumpEvents.empty())

    def shifted(self, offset: float) -> "LevyPathSegment":
        """Same increments and events on a grid translated by ``offset``."""
        return LevyPathSegment(
            self.grid + offset,
            self.anchor + offset,
            self.wiener,
            replace(self.small, times=self.small.times + offset),
            replace(self.large, times=self.large.times + offset),
            self.seed_record,
        )

    def binned_jumps(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.small.binned(self.n_cells, self.modes),
                self.large.binned(self.n_cells, self.modes))

    def coarsen(self, factor: int) -> "LevyPathSegment":
        """Aggregate onto every ``factor``-th grid point (same underlying path)."""
        if factor < 1 or self.n_cells % factor:
            raise ValueError(f"cannot coarsen {self.n_cells} cells by {factor}")
        n = self.n_cells // factor
        wiener = self.wiener.reshape(n, factor, self.modes).sum(axis=1)
        small = replace(self.small, cells=self.small.cells // factor)
        large = replace(self.large, cells=self.large.cells // factor)
        return LevyPathSegment(self.grid[::factor].copy(), self.anchor, wiener, small, large,
                               self.seed_record)


def sample_levy_segment(wiener_cfg: QWienerConfig, jump_cfg: JumpMeasureConfig, grid,
                        seed: int, path: int = 0, anchor: float | None = None) -> LevyPathSegment:
    """Sample a two-sided segment driven by streams ``(seed, path, purpose, side)``.

    ``anchor`` must be a grid point (or lie outside the grid span); it
    defaults to the first grid point, giving a one-sided segment.
    """
    grid = _check_grid(grid)
    modes = wiener_cfg.modes
    anchor = float(grid[0] if anchor is None else anchor)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(grid))))
    if grid[0] < anchor < grid[-1]:
        hits = np.flatnonzero(np.abs(grid - anchor) <= tol)
        if hits.size == 0:
            raise ValueError("anchor must coincide with a grid point")
        split = int(hits[0])
    else:
        split = 0 if anchor <= grid[0] + tol else grid.size - 1

    steps = np.diff(grid)
    wiener = np.empty((steps.size, modes))
    small, large = JumpEvents.empty(), JumpEvents.empty()

    if split < grid.size - 1:
        fwd = grid[split:]
        wiener[split:] = wiener_increments_for_steps(
            wiener_cfg, np.diff(fwd), StreamId(seed, path, PURPOSE_WIENER, SIDE_FORWARD))
        s, l = sample_jumps(jump_cfg, fwd, StreamId(seed, path, PURPOSE_SMALL, SIDE_FORWARD), modes)
        small = small._concat(replace(s, cells=s.cells + split))
        large = large._concat(replace(l, cells=l.cells + split))
    if split > 0:
        bwd = grid[: split + 1]
        # increments enumerated from the anchor outwards
        inc = wiener_increments_for_steps(
            wiener_cfg, np.diff(bwd)[::-1], StreamId(seed, path, PURPOSE_WIENER, SIDE_BACKWARD))
        wiener[:split] = inc[::-1]
        s, l = sample_jumps(jump_cfg, bwd, StreamId(seed, path, PURPOSE_SMALL, SIDE_BACKWARD),
                            modes, backward=True)
        small = small._concat(s)
        large = large._concat(l)

    return LevyPathSegment(grid, anchor, wiener, small._sorted(), large._sorted(),
                           (int(seed), int(path)))


def write_segment_csv(segment: LevyPathSegment, stem) -> tuple[Path, Path]:
    """Dump increments (t, mode, increment) and events (t, abs_y, mode, size, kind)."""
    stem = Path(stem)
    inc_path = stem.with_name(stem.name + "_wiener.csv")
    ev_path = stem.with_name(stem.name + "_events.csv")
    with open(inc_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mode", "increment"])
        for k, t in enumerate(segment.grid[:-1]):
            for n in range(segment.modes):
                w.writerow([repr(float(t)), n + 1, repr(float(segment.wiener[k, n]))])
    with open(ev_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "abs_y", "mode", "size", "kind"])
        for kind, ev in (("small", segment.small), ("large", segment.large)):
            for t, s, m in zip(ev.times, ev.sizes, ev.modes):
                w.writerow([repr(float(t)), repr(abs(float(s))), int(m) + 1, repr(float(s)), kind])
    return inc_path, ev_path
