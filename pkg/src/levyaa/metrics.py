"""Bounded-Lipschitz distance and the empirical almost-automorphy test.

``beta(mu, nu) = sup |int f dmu - int f dnu|`` over ``||f||_L + ||f||_inf <= 1``.
For finitely supported measures this is the linear program over the values
of ``f`` on the joint support together with the split ``(L, c)`` of the unit
budget between Lipschitz constant and sup bound.

The same value is the maximum over ``L in [0, 1]`` of the optimal transport
cost for the truncated metric ``min(L d, 2 (1 - L))`` (Kantorovich duality;
the sup bound becomes an oscillation bound because both measures have unit
mass). That function of ``L`` is concave, so a bounded scalar search with an
exact transport solver per evaluation is used for large supports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog, minimize_scalar
from scipy.spatial.distance import cdist, pdist
from scipy.stats import spearmanr

LP_MAX_POINTS = 200
# simplex with tight feasibility tolerances: the metric axioms are checked at 1e-8
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class EmpiricalMeasure:
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.support, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64)
        if s.shape[0] == 0:
            raise ValueError("support must be nonempty")
        if w.shape != (s.shape[0],):
            raise ValueError("one weight per support point required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not np.all(np.isfinite(s)):
            raise ValueError("support points must be finite")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def dirac(cls, point) -> "EmpiricalMeasure":
        return cls.uniform(np.asarray(point, dtype=np.float64)[None, :])

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def projected(self, m: int) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.support[:, :m], self.weights)


def _bl_lp(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    pts = np.vstack([mu.support, nu.support])
    w = np.concatenate([mu.weights, -nu.weights])
    n = pts.shape[0]
    if n == 1:
        return 0.0
    i, j = np.triu_indices(n, 1)
    d = pdist(pts)
    k = i.size
    rows = np.arange(2 * k).repeat(3)
    # f_i - f_j - L d_ij <= 0 and f_j - f_i - L d_ij <= 0; columns: f, L, c
    cols = np.column_stack([
        np.concatenate([i, j]), np.concatenate([j, i]), np.full(2 * k, n)]).ravel()
    vals = np.column_stack([
        np.ones(2 * k), -np.ones(2 * k), -np.concatenate([d, d])]).ravel()
    lip = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * k, n + 2))
    eye = sparse.identity(n, format="csr")
    zero_col = sparse.csr_matrix((n, 1))
    minus_one = sparse.csr_matrix(-np.ones((n, 1)))
    upper = sparse.hstack([eye, zero_col, minus_one])
    lower = sparse.hstack([-eye, zero_col, minus_one])
    budget = sparse.csr_matrix(np.concatenate([np.zeros(n), [1.0, 1.0]])[None, :])
    A = sparse.vstack([lip, upper, lower, budget]).tocsr()
    b = np.concatenate([np.zeros(2 * k + 2 * n), [1.0]])
    cost = np.concatenate([-w, [0.0, 0.0]])
    bounds = [(None, None)] * n + [(0, None), (0, None)]
    res = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method="highs-ds", options=_LP_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return -res.fun


def transport_cost(a, b, cost) -> float:
    """Exact optimal transport cost between weight vectors ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = cost.shape
    if n1 == n2 and np.allclose(a, 1.0 / n1, rtol=0, atol=1e-15) and np.allclose(
            b, 1.0 / n2, rtol=0, atol=1e-15):
        r, c = linear_sum_assignment(cost)
        return float(cost[r, c].sum() / n1)
    # transportation LP over the coupling matrix
    row = sparse.kron(sparse.identity(n1), np.ones((1, n2)))
    col = sparse.kron(np.ones((1, n1)), sparse.identity(n2))
    A = sparse.vstack([row, col]).tocsr()
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs-ds", options=_LP_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def truncated_transport_value(mu: EmpiricalMeasure, nu: EmpiricalMeasure, lip: float,
                              distances=None) -> float:
    """Transport cost for the metric ``min(lip d, 2 (1 - lip))``."""
    D = cdist(mu.support, nu.support) if distances is None else distances
    return transport_cost(mu.weights, nu.weights, np.minimum(lip * D, 2.0 * (1.0 - lip)))


def _bl_transport(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    D = cdist(mu.support, nu.support)
    if not np.any(D > 0):
        return 0.0

    def value(L):
        return truncated_transport_value(mu, nu, min(max(L, 0.0), 1.0), D)

    res = minimize_scalar(lambda L: -value(L), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    best_L, best = float(res.x), -float(res.fun)
    # Brent stops ~sqrt(eps) from the kink; intersect the two linear pieces around it
    h = 1e-6
    xs = best_L + h * np.array([-2.0, -1.0, 1.0, 2.0])
    vs = [value(x) for x in xs]
    left = (vs[1] - vs[0]) / h
    right = (vs[3] - vs[2]) / h
    if left > right:
        x = (vs[2] - vs[1] + left * xs[1] - right * xs[2]) / (left - right)
        if xs[1] <= x <= xs[2]:
            best = max(best, value(x))
    return max(best, *vs)


def bl_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure, method: str = "auto") -> float:
    """Bounded-Lipschitz distance between two finitely supported measures.

    ``method`` is ``"lp"`` (joint linear program), ``"transport"``
    (concave search over the Lipschitz share) or ``"auto"`` (LP for joint
    supports up to ``LP_MAX_POINTS`` points).
    """
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if method == "auto":
        method = "lp" if mu.support.shape[0] + nu.support.shape[0] <= LP_MAX_POINTS else "transport"
    if method == "lp":
        value = _bl_lp(mu, nu)
    elif method == "transport":
        value = _bl_transport(mu, nu)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(min(max(value, 0.0), 2.0))


# ------------------------------------------------------------ recurrences


def recurrence_error(frequencies, tau):
    """``max_j`` circle distance of ``omega_j tau`` to a multiple of ``2 pi``."""
    w = np.asarray(frequencies, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    phase = np.multiply.outer(tau, w)
    dist = np.abs(np.mod(phase + np.pi, 2.0 * np.pi) - np.pi)
    return dist.max(axis=-1) if w.size else np.zeros_like(tau)


@dataclass(frozen=True)
class ShiftSequence:
    shifts: np.ndarray
    recurrence_errors: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.shifts)
        object.__setattr__(self, "shifts", np.asarray(self.shifts, dtype=np.float64)[order])
        object.__setattr__(self, "recurrence_errors",
                           np.asarray(self.recurrence_errors, dtype=np.float64)[order])

    def __len__(self):
        return self.shifts.size

    @property
    def best(self) -> float:
        return float(self.shifts[np.argmin(self.recurrence_errors)])


def find_recurrence_shifts(frequencies, horizon: float, count: int, step: float = 0.01,
                           min_separation: float = 1.0) -> ShiftSequence:
    """The ``count`` best simultaneous near-periods in ``(0, horizon]``.

    Candidates are grid points ``k * step``; only local minima of the
    recurrence error are kept, at least ``min_separation`` apart, so the
    returned shifts are distinct recurrences rather than neighbours of one.
    The origin counts as already chosen, which excludes the trivial
    near-recurrences ``tau < min_separation``.
    """
    if len(frequencies) == 0:
        raise ValueError("frequencies must be nonempty")
    if horizon <= 0 or count < 1:
        raise ValueError("horizon must be positive and count >= 1")
    n = int(math.floor(horizon / step + 1e-9))
    if n < 1:
        raise ValueError("horizon shorter than one grid step")
    tau = step * np.arange(1, n + 1)
    eps = recurrence_error(frequencies, tau)
    left = np.concatenate([[np.inf], eps[:-1]])
    right = np.concatenate([eps[1:], [np.inf]])
    cand = np.flatnonzero((eps <= left) & (eps <= right))
    cand = cand[np.lexsort((cand, eps[cand]))]
    chosen = []
    for c in cand:
        if tau[c] >= min_separation and all(
                abs(tau[c] - tau[o]) >= min_separation for o in chosen):
            chosen.append(c)
            if len(chosen) == count:
                break
    chosen = np.array(chosen, dtype=int)
    return ShiftSequence(tau[chosen], eps[chosen])


# ----------------------------------------------------------- empirical laws


def empirical_law(ensemble, t: float, m: int) -> EmpiricalMeasure:
    """Uniform empirical measure of the first ``m`` coordinates at time ``t``."""
    if not ensemble:
        raise ValueError("empty ensemble")
    if m < 1 or m > ensemble[0].states.shape[1]:
        raise ValueError(f"projection dimension {m} out of range")
    pts = np.array([p.at(t)[:m] for p in ensemble])
    return EmpiricalMeasure.uniform(pts)


@dataclass
class AutomorphyReport:
    rows: list
    best_shift: float
    control_shift: float
    fraction_beating_control: float
    rank_correlation: float
    pass_fraction: float
    projection_dim: int
    passed: bool
    per_shift: list = field(default_factory=list)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "tau", "epsilon", "beta"])
            for r in self.rows:
                w.writerow([repr(r["t"]), repr(r["tau"]), repr(r["epsilon"]), repr(r["beta"])])
        return path

    def to_dict(self) -> dict:
        return {
            "best_shift": self.best_shift,
            "control_shift": self.control_shift,
            "fraction_beating_control": self.fraction_beating_control,
            "rank_correlation": None if math.isnan(self.rank_correlation)
            else self.rank_correlation,
            "pass_fraction": self.pass_fraction,
            "projection_dim": self.projection_dim,
            "passed": bool(self.passed),
            "per_shift": self.per_shift,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AutomorphyReport":
        corr = d["rank_correlation"]
        return cls(d["rows"], d["best_shift"], d["control_shift"],
                   d["fraction_beating_control"], float("nan") if corr is None else corr,
                   d["pass_fraction"], d["projection_dim"], d["passed"], d["per_shift"])

    def summary(self) -> str:
        lines = [
            f"projection_dim: {self.projection_dim}",
            f"best_shift: {self.best_shift!r}",
            f"control_shift: {self.control_shift!r}",
            f"fraction_beating_control: {self.fraction_beating_control:.4f}",
            f"required_fraction: {self.pass_fraction:.4f}",
            f"rank_correlation_epsilon_beta: {self.rank_correlation:.4f}",
            "shifts (tau, epsilon, mean_beta, kind):",
        ]
        for s in self.per_shift:
            lines.append(f"  {s['tau']!r}, {s['epsilon']:.6f}, {s['mean_beta']:.6f}, {s['kind']}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def automorphy_profile(frequencies, base, shifted: dict, shifts: ShiftSequence, t_grid,
                       m: int = 8, control_offset: float = 0.5, pass_fraction: float = 0.7,
                       method: str = "auto", zero_tol: float = 1e-12) -> AutomorphyReport:
    """Compare laws at ``t + tau`` with the law at ``t`` along recurrence shifts.

    ``base`` is the ensemble on the reference window; ``shifted[tau]`` the
    ensemble on the window translated by ``tau`` (same seeds). ``shifted``
    must hold every ``tau_n`` and the control ``tau* + control_offset`` for
    the best shift ``tau*``; extra controls ``tau_n + control_offset`` are
    used when present.
    """
    n = len(base)
    for tau, ens in shifted.items():
        if len(ens) != n:
            raise ValueError(f"ensemble at tau={tau} has {len(ens)} paths, base has {n}")

    def lookup(tau):
        for k in shifted:
            if abs(k - tau) <= 1e-9 * max(1.0, abs(tau)):
                return shifted[k]
        raise ValueError(f"no ensemble for shift {tau}")

    best = shifts.best
    control = best + control_offset
    taus = [(float(t), "shift") for t in shifts.shifts]
    for t in shifts.shifts:
        c = float(t + control_offset)
        if any(abs(k - c) <= 1e-9 * max(1.0, c) for k in shifted) or t == best:
            taus.append((c, "control"))
    t_grid = np.asarray(t_grid, dtype=np.float64)

    rows = []
    table = {}
    for t in t_grid:
        ref = empirical_law(base, t, m)
        for tau, kind in taus:
            law = empirical_law(lookup(tau), t + tau, m)
            beta = bl_distance(law, ref, method)
            eps = float(recurrence_error(frequencies, tau)) if len(frequencies) else 0.0
            rows.append({"t": float(t), "tau": tau, "epsilon": eps, "beta": beta, "kind": kind})
            table[(float(t), tau)] = beta

    beats = []
    for t in t_grid:
        b_best, b_ctrl = table[(float(t), best)], table[(float(t), control)]
        beats.append(b_best < b_ctrl or (b_best <= zero_tol and b_ctrl <= zero_tol))
    fraction = float(np.mean(beats))

    per_shift = []
    for tau, kind in taus:
        betas = [table[(float(t), tau)] for t in t_grid]
        eps = float(recurrence_error(frequencies, tau)) if len(frequencies) else 0.0
        per_shift.append({"tau": tau, "epsilon": eps, "mean_beta": float(np.mean(betas)),
                          "kind": kind})
    all_zero = all(r["beta"] <= zero_tol for r in rows)
    eps_arr = np.array([s["epsilon"] for s in per_shift])
    beta_arr = np.array([s["mean_beta"] for s in per_shift])
    if len(per_shift) > 1 and np.ptp(eps_arr) > 0 and np.ptp(beta_arr) > 0:
        corr = float(spearmanr(eps_arr, beta_arr).statistic)
    else:
        corr = float("nan")
    passed = fraction >= pass_fraction and (all_zero or corr > 0)
    return AutomorphyReport(rows, best, control, fraction, corr, pass_fraction, m, passed,
                            per_shift)


def write_svg_chart(report: AutomorphyReport, path, width: int = 480, height: int = 320) -> Path:
    """Static scatter of mean beta against recurrence error, one marker per shift."""
    path = Path(path)
    pad = 48
    eps = np.array([s["epsilon"] for s in report.per_shift] or [0.0])
    beta = np.array([s["mean_beta"] for s in report.per_shift] or [0.0])
    ex = max(float(eps.max()), 1e-12)
    by = max(float(beta.max()), 1e-12)

    def xy(e, b):
        return (pad + (width - 2 * pad) * e / ex, height - pad - (height - 2 * pad) * b / by)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">'
        f'recurrence error (max {ex:.3g})</text>',
        f'<text x="14" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 14 {height / 2:.1f})" '
        f'text-anchor="middle">mean beta (max {by:.3g})</text>',
    ]
    for s in report.per_shift:
        x, y = xy(s["epsilon"], s["mean_beta"])
        color = "#1f77b4" if s["kind"] == "shift" else "#d62728"
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color}"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path
