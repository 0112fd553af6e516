"""Constants and pass/fail checks for the well-posedness conditions of mild solutions.

Computes the kernel constant ``theta``, the radius budget
``Delta_r <= omega^2 r / (20 theta K^2)``, the memory-weighted moduli
``L_g .. L_G`` and the contraction constant ``vartheta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import bisect

from .kernels import exp_scan
from .scenario import MODULUS_NAMES, Scenario, eval_modulus

DEFAULT_SUP_WINDOW = 200.0
DEFAULT_SUP_STEP = 0.001
DEFAULT_R_GRID = np.logspace(-3, 3, 121)
# memory cut-off: weights below exp(-40) are dropped
_MEMORY_E_FOLDS = 40.0


def kernel_norms(scn: Scenario) -> tuple[float, float, float]:
    """(||B1||_L1, ||B2||_L1, ||B2||^2_L2), closed form."""
    return scn.B1.l1_norm, scn.B2.l1_norm, scn.B2.l2_norm_sq


def compute_theta(scn: Scenario) -> float:
    b1_l1, b2_l1, b2_l2sq = kernel_norms(scn)
    b = scn.jumps.b
    return max(1.0, b1_l1**2, 4.0 * b2_l2sq, 2.0 * b * b2_l1**2)


@dataclass(frozen=True)
class RadiusBudget:
    r: np.ndarray
    delta_r: np.ndarray
    bound: np.ndarray
    feasible: np.ndarray

    @property
    def interval(self):
        """(min, max) of the feasible radii on the grid, or None."""
        if not self.feasible.any():
            return None
        rr = self.r[self.feasible]
        return float(rr.min()), float(rr.max())

    @property
    def is_interval(self) -> bool:
        idx = np.flatnonzero(self.feasible)
        return idx.size == 0 or idx[-1] - idx[0] + 1 == idx.size


def check_radius_budget(scn: Scenario, r_grid=None) -> RadiusBudget:
    """Evaluate ``Delta(r) <= omega^2 r / (20 theta K^2)`` over ``r_grid``."""
    r = np.asarray(DEFAULT_R_GRID if r_grid is None else r_grid, dtype=np.float64)
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    sg = scn.semigroup
    theta = compute_theta(scn)
    bound = sg.stability_omega**2 * r / (20.0 * theta * sg.stability_K**2)
    delta_r = scn.moduli.envelope(r)
    return RadiusBudget(r, delta_r, bound, delta_r <= bound)


def _weight_rates(scn: Scenario) -> dict:
    """Exponential rate of each L-constant's weight, or None for a zero weight."""
    two_b2 = None if scn.B2.is_zero else 2.0 * scn.B2.rate
    return {
        "g": scn.semigroup.stability_omega,
        "f": None if scn.B1.is_zero else scn.B1.rate,
        "h": two_b2,
        "F": two_b2,
        "G": two_b2,
    }


def sup_exponential_convolution(m, rate: float, window: float = DEFAULT_SUP_WINDOW,
                                step: float = DEFAULT_SUP_STEP) -> float:
    """``sup_{t in [0, window]} int_{-inf}^t exp(-rate (t - s)) m(s) ds``.

    The convolution is propagated on a grid with the exponential weight
    integrated exactly against a piecewise-linear interpolant of ``m``; the
    lower limit is cut where the weight drops below ``exp(-40)``.
    """
    return float(_sup_convolutions([m], [rate], window, step)[0])


def _sup_convolutions(funcs, rates, window, step):
    rates = np.asarray(rates, dtype=np.float64)
    burn = _MEMORY_E_FOLDS / rates.min()
    n_burn = int(math.ceil(burn / step))
    n_win = int(round(window / step))
    t = step * np.arange(-n_burn, n_win + 1)
    vals = np.column_stack([np.broadcast_to(np.asarray(f(t), dtype=np.float64), t.shape)
                            for f in funcs])
    kh = rates * step
    E = np.exp(-kh)
    phi1 = -np.expm1(-kh) / rates
    phi2 = 1.0 / rates - phi1 / kh
    forcing = (phi1 - phi2) * vals[:-1] + phi2 * vals[1:]
    conv = exp_scan(E, forcing)
    return conv[n_burn:].max(axis=0)


@dataclass(frozen=True)
class LConstants:
    L_g: float
    L_f: float
    L_h: float
    L_F: float
    L_G: float

    def as_tuple(self):
        return (self.L_g, self.L_f, self.L_h, self.L_F, self.L_G)


def compute_L_constants(scn: Scenario, step: float = DEFAULT_SUP_STEP,
                        window: float = DEFAULT_SUP_WINDOW) -> LConstants:
    rates = _weight_rates(scn)
    moduli = scn.moduli
    out = {name: 0.0 for name in MODULUS_NAMES}
    active = [n for n in MODULUS_NAMES if rates[n] is not None]
    if active:
        funcs = [lambda t, n=n: eval_modulus(moduli, n, t) for n in active]
        sups = _sup_convolutions(funcs, [rates[n] for n in active], window, step)
        out.update(zip(active, (float(s) for s in sups)))
    return LConstants(*(out[n] for n in MODULUS_NAMES))


def compute_vartheta(scn: Scenario, L: LConstants | None = None) -> float:
    if L is None:
        L = compute_L_constants(scn)
    sg = scn.semigroup
    K, w = sg.stability_K, sg.stability_omega
    b1_l1, b2_l1, _ = kernel_norms(scn)
    b = scn.jumps.b
    bracket = w * L.L_g + L.L_f * b1_l1 + L.L_h + L.L_F + 2.0 * (1.0 + b * b2_l1) * L.L_G
    return 10.0 * K**2 / w**2 * bracket


@dataclass
class HypothesisReport:
    scenario: str
    scenario_hash: str
    theta: float
    b: float
    kernel_norms: tuple
    radius_budget: RadiusBudget
    L: LConstants
    vartheta: float
    sup_window: float
    sup_step: float
    passes: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())

    def to_dict(self) -> dict:
        rb = self.radius_budget
        interval = rb.interval
        return {
            "scenario": self.scenario,
            "scenario_hash": self.scenario_hash,
            "theta": float(self.theta),
            "b": float(self.b),
            "kernel_norms": {
                "B1_L1": float(self.kernel_norms[0]),
                "B2_L1": float(self.kernel_norms[1]),
                "B2_L2_squared": float(self.kernel_norms[2]),
            },
            "radius_budget": {
                "r_min": float(rb.r.min()),
                "r_max": float(rb.r.max()),
                "points": int(rb.r.size),
                "feasible_interval": None if interval is None else list(interval),
                "contiguous": bool(rb.is_interval),
            },
            "L_constants": {k: float(v) for k, v in asdict(self.L).items()},
            "vartheta": float(self.vartheta),
            "sup_grid": {"window": float(self.sup_window), "step": float(self.sup_step)},
            "passes": {k: bool(v) for k, v in self.passes.items()},
            "all_pass": bool(self.all_pass),
        }

    def summary_line(self) -> str:
        status = "PASS" if self.all_pass else "FAIL"
        failed = [k for k, v in self.passes.items() if not v]
        tail = "" if not failed else " failed=" + ",".join(failed)
        return (f"{status} scenario={self.scenario} theta={self.theta:.6g} "
                f"vartheta={self.vartheta:.6g}{tail}")

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


def check_hypotheses(scn: Scenario, r_grid=None, window: float = DEFAULT_SUP_WINDOW,
                     step: float = DEFAULT_SUP_STEP) -> HypothesisReport:
    theta = compute_theta(scn)
    budget = check_radius_budget(scn, r_grid)
    L = compute_L_constants(scn, step, window)
    vartheta = compute_vartheta(scn, L)
    norms = kernel_norms(scn)
    passes = {
        "semigroup_stable": scn.semigroup.stability_omega > 0 and scn.semigroup.stability_K >= 1,
        "kernels_integrable": all(math.isfinite(v) for v in norms),
        "levy_integrable": math.isfinite(scn.jumps.levy_integrability()),
        "L_finite": all(math.isfinite(v) for v in L.as_tuple()),
        "radius_budget": budget.interval is not None,
        "contraction": vartheta < 1.0,
    }
    return HypothesisReport(scn.name, scn.hash, theta, scn.jumps.b, norms, budget, L,
                            vartheta, window, step, passes)


def critical_delta(scn: Scenario, xtol: float = 1e-13, **kw) -> float:
    """Amplitude ``delta*`` with ``vartheta(delta*) = 1``, found by bisection."""

    def excess(delta):
        return compute_vartheta(scn.with_coefficients(delta=float(delta)), None) - 1.0

    if scn.coefficients.family != "paper_example_5":
        raise ValueError("critical_delta needs an amplitude-scaled family")
    hi = 1.0
    while excess(hi) <= 0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("vartheta does not reach 1; no critical amplitude")
    lo = 0.0
    return float(bisect(excess, lo, hi, xtol=xtol, **kw))
