"""Problem instances: semigroup, memory kernels, coefficients, noise, moduli.

Coefficient families are compiled in and selected by name so that the
Lipschitz moduli and growth envelopes reported to the hypothesis checker
always describe the evaluators actually used by the solver.

``paper_example_5`` is the heat-equation example with quasi-periodic forcing::

    g(t, u)     = delta * sin(u + phase) * (sin t + sin(sqrt2 t))
    f(t, u)     = delta * sin(u + phase) * (sin t + sin(sqrt3 t))
    h(t, u)     = delta * sin(u + phase) * (sin t + sin(sqrt5 t))
    theta(t, u) = delta * sin(u + phase) * (sin t + sin(pi t))

with ``sin`` applied pointwise in physical space. ``h`` and ``theta`` act on
noise as per-mode multipliers: ``h(t,u) dW = sum_n h_n dW_n e_n`` and the jump
coefficients are ``F(t,u,y) = theta(t,u) * y`` on ``|y| < 1`` and
``G(t,u,y) = theta(t,u) * y`` on ``|y| >= 1``. ``phase = 0`` gives the unshifted
coefficients; there ``x = 0`` is an exact solution, and a nonzero phase leaves
every modulus unchanged while making the solution nontrivial.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml

from .noise import JumpMeasureConfig, QWienerConfig
from .spectral import Semigroup, SpaceConfig, SpatialQuadrature, make_semigroup

COEFFICIENT_FAMILIES = ("paper_example_5", "zero", "linear_test")
COEFFICIENT_NAMES = ("g", "f", "h", "theta")
MODULUS_NAMES = ("g", "f", "h", "F", "G")
KERNEL_FAMILIES = ("exponential", "zero")
DEFAULT_FREQUENCIES = (1.0, math.sqrt(2.0), math.sqrt(3.0), math.sqrt(5.0), math.pi)
# which two frequencies modulate each coefficient
_FREQ_PAIRS = {"g": (0, 1), "f": (0, 2), "h": (0, 3), "theta": (0, 4)}


class ScenarioError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Kernel:
    family: str = "exponential"
    rate: float = math.pi**2

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "exponential" and not (0 < self.rate < math.inf):
            raise ValueError(f"exponential kernel rate must be positive, got {self.rate}")

    @property
    def is_zero(self) -> bool:
        return self.family == "zero"

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.is_zero:
            return np.zeros_like(t)
        return np.where(t >= 0, np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)

    @property
    def l1_norm(self) -> float:
        return 0.0 if self.is_zero else 1.0 / self.rate

    @property
    def l2_norm_sq(self) -> float:
        return 0.0 if self.is_zero else 1.0 / (2.0 * self.rate)

    def decay(self, dt: float) -> float:
        """Kernel weight across one step, ``B(dt)/B(0)``."""
        return 0.0 if self.is_zero else math.exp(-self.rate * dt)

    def cell_integral(self, dt: float) -> float:
        """``int_0^dt B(s) ds``."""
        return 0.0 if self.is_zero else -math.expm1(-self.rate * dt) / self.rate

    def to_dict(self) -> dict:
        return {"family": self.family, "rate": float(self.rate)}


@dataclass(frozen=True)
class CoefficientSet:
    """Named coefficient family.

    ``linear_test`` sets each coefficient listed in ``terms`` to the constant
    ``delta * e_1`` (independent of time and state) and the others to zero.
    """

    family: str = "paper_example_5"
    delta: float = 0.05
    frequencies: tuple = DEFAULT_FREQUENCIES
    phase: float = 0.0
    jump_coupling: str = "theta"
    terms: tuple = ("g",)

    def __post_init__(self):
        if self.family not in COEFFICIENT_FAMILIES:
            raise ValueError(f"unknown coefficient family {self.family!r}")
        if not math.isfinite(self.delta) or self.delta < 0:
            raise ValueError("delta must be a nonnegative finite number")
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.family == "paper_example_5" and len(self.frequencies) != 5:
            raise ValueError("paper_example_5 needs exactly five frequencies")
        if self.jump_coupling not in ("theta", "h"):
            raise ValueError("jump_coupling must be 'theta' or 'h'")
        if set(self.terms) - set(COEFFICIENT_NAMES):
            raise ValueError(f"terms must be drawn from {COEFFICIENT_NAMES}")

    @property
    def jump_name(self) -> str:
        return self.jump_coupling

    def amplitude(self, which: str, t):
        """Temporal factor ``sin(a t) + sin(b t)`` of a paper_example_5 coefficient."""
        i, j = _FREQ_PAIRS[which]
        t = np.asarray(t, dtype=np.float64)
        return np.sin(self.frequencies[i] * t) + np.sin(self.frequencies[j] * t)

    def forcing_frequencies(self) -> tuple:
        """Frequencies the coefficients actually depend on."""
        if self.family == "paper_example_5" and self.delta > 0:
            return self.frequencies
        return ()

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "delta": float(self.delta),
            "frequencies": [float(w) for w in self.frequencies],
            "phase": float(self.phase),
            "jump_coupling": self.jump_coupling,
            "terms": list(self.terms),
        }


@dataclass(frozen=True)
class ModulusSet:
    """Closed-form moduli ``m_g .. m_G`` and the growth envelope ``Delta(r)``."""

    coefficients: CoefficientSet
    q_norm: float
    small_second_moment: float
    large_second_moment: float
    small_first_moment: float
    large_first_moment: float

    def __call__(self, which: str, t):
        return eval_modulus(self, which, t)

    def envelope(self, r):
        """Upper bound on the five suprema defining ``Delta_r``."""
        c = self.coefficients
        r = np.asarray(r, dtype=np.float64)
        jump_factor = max(self.small_first_moment, self.large_first_moment)
        if c.family == "zero" or c.delta == 0:
            return np.zeros_like(r)
        if c.family == "linear_test":
            parts = [1.0 if name in c.terms else 0.0 for name in ("g", "f", "h")]
            if "theta" in c.terms and c.jump_coupling == "theta":
                parts.append(jump_factor)
            if "h" in c.terms and c.jump_coupling == "h":
                parts.append(jump_factor)
            return c.delta * max(parts) * np.ones_like(r)
        # |sin(u + phase)| <= min(|sin phase| + |u|, 1) pointwise; |amplitude| <= 2
        shape = np.minimum(abs(math.sin(c.phase)) + r, 1.0)
        with np.errstate(invalid="ignore"):
            return 2.0 * c.delta * shape * max(1.0, jump_factor)


def eval_modulus(moduli: ModulusSet, which: str, t):
    """Evaluate ``m_which(t)`` for which in g, f, h, F, G."""
    if which not in MODULUS_NAMES:
        raise ValueError(f"unknown modulus {which!r}")
    c = moduli.coefficients
    t = np.asarray(t, dtype=np.float64)
    if c.family != "paper_example_5" or c.delta == 0:
        return np.zeros_like(t)
    d2 = c.delta**2
    if which == "g":
        return d2 * c.amplitude("g", t) ** 2
    if which == "f":
        return d2 * c.amplitude("f", t) ** 2
    if which == "h":
        return d2 * moduli.q_norm * c.amplitude("h", t) ** 2
    amp2 = c.amplitude(c.jump_name, t) ** 2
    if which == "F":
        return d2 * moduli.small_second_moment * amp2
    return d2 * moduli.large_second_moment * amp2


@dataclass(frozen=True, eq=False)
class Scenario:
    space: SpaceConfig
    semigroup: Semigroup
    kernels: tuple
    wiener: QWienerConfig
    jumps: JumpMeasureConfig
    coefficients: CoefficientSet
    name: str = "custom"
    _extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = self.space.modes
        if self.semigroup.modes != m:
            raise ScenarioError("semigroup", f"has {self.semigroup.modes} modes, space has {m}")
        if self.wiener.modes != m:
            raise ScenarioError("noise.wiener.q_eigenvalues", f"length must be {m}")
        if self.jumps.direction_mode == "fixed" and self.jumps.direction_index > m:
            raise ScenarioError("noise.jumps.direction.index", "exceeds modes")
        if len(self.kernels) != 2:
            raise ScenarioError("kernels", "need exactly B1 and B2")

    @property
    def modes(self) -> int:
        return self.space.modes

    @property
    def B1(self) -> Kernel:
        return self.kernels[0]

    @property
    def B2(self) -> Kernel:
        return self.kernels[1]

    @cached_property
    def quadrature(self) -> SpatialQuadrature:
        return SpatialQuadrature(self.modes)

    @cached_property
    def moduli(self) -> ModulusSet:
        j = self.jumps
        return ModulusSet(
            self.coefficients,
            self.wiener.operator_norm,
            j.abs_moment(0.0, 1.0, 2.0),
            j.abs_moment(1.0, math.inf, 2.0),
            j.abs_moment(0.0, 1.0, 1.0),
            j.abs_moment(1.0, math.inf, 1.0),
        )

    def evaluate(self, t, u) -> dict:
        """Evaluate g, f, h, theta at times ``t`` (n,) and states ``u`` (n, modes).

        Returns arrays of shape (n, modes). The pointwise nonlinearity is
        computed once and shared by all four coefficients.
        """
        c = self.coefficients
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        n, m = u.shape
        zero = np.zeros((n, m))
        if c.family == "zero" or c.delta == 0:
            return {k: zero for k in COEFFICIENT_NAMES}
        if c.family == "linear_test":
            const = np.zeros((n, m))
            const[:, 0] = c.delta
            return {k: (const if k in c.terms else zero) for k in COEFFICIENT_NAMES}
        q = self.quadrature
        shape = q.analyse(np.sin(q.synthesise(u) + c.phase))
        return {k: (c.delta * c.amplitude(k, t))[:, None] * shape for k in COEFFICIENT_NAMES}

    def jump_coefficient(self, coeffs: dict) -> np.ndarray:
        return coeffs[self.coefficients.jump_name]

    def to_dict(self) -> dict:
        sg = self.semigroup
        d = {
            "space": {"modes": self.modes},
            "semigroup": {
                "type": self.space.basis_label,
                "K": float(sg.stability_K),
                "omega": float(sg.stability_omega),
            },
            "kernels": {"B1": self.B1.to_dict(), "B2": self.B2.to_dict()},
            "noise": {
                "wiener": {"q_eigenvalues": [float(v) for v in self.wiener.q_eigenvalues]},
                "jumps": self.jumps.to_dict(),
            },
            "coefficients": self.coefficients.to_dict(),
        }
        if self.space.basis_label == "abstract_diagonal":
            d["semigroup"]["decay_rates"] = [float(v) for v in sg.decay_rates]
        return d

    @cached_property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_coefficients(self, **changes) -> "Scenario":
        d = self.to_dict()
        d["coefficients"].update(changes)
        return scenario_from_dict(d, name=self.name)


def eval_coefficient(scn: Scenario, which: str, t: float, u) -> np.ndarray:
    """Single-time evaluation of g, f, h or theta as a spectral vector."""
    if which not in COEFFICIENT_NAMES:
        raise ValueError(f"unknown coefficient {which!r}")
    return scn.evaluate([t], np.asarray(u, dtype=np.float64)[None, :])[which][0]


# ------------------------------------------------------------------ loading

_SCHEMA = {
    "builtin": None,
    "name": None,
    "space": {"modes": None},
    "semigroup": {"type": None, "K": None, "omega": None, "decay_rates": None},
    "kernels": {"B1": {"family": None, "rate": None}, "B2": {"family": None, "rate": None}},
    "noise": {
        "wiener": {"q_eigenvalues": None},
        "jumps": {"family": None, "small_cutoff": None, "parameters": None, "direction": None},
    },
    "coefficients": {
        "family": None, "delta": None, "frequencies": None, "phase": None,
        "jump_coupling": None, "terms": None,
    },
}


def _check_keys(d, schema, prefix=""):
    if not isinstance(d, dict):
        raise ScenarioError(prefix.rstrip(".") or "<root>", "expected a mapping")
    for k, v in d.items():
        path = f"{prefix}{k}"
        if k not in schema:
            raise ScenarioError(path, "unknown key")
        if isinstance(schema[k], dict):
            _check_keys(v, schema[k], path + ".")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "parameters":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def paper_example_5_dict(delta: float = 0.05, omega: float | None = None, modes: int = 64,
                         phase: float = 0.0) -> dict:
    rate = math.pi**2 if omega is None else float(omega)
    return {
        "space": {"modes": modes},
        "semigroup": {"type": "dirichlet_sine", "K": 1.0, "omega": math.pi**2},
        "kernels": {
            "B1": {"family": "exponential", "rate": rate},
            "B2": {"family": "exponential", "rate": rate},
        },
        "noise": {
            "wiener": {"q_eigenvalues": {"power": 2.0, "scale": 1.0}},
            "jumps": {
                "family": "truncated_power_law",
                "small_cutoff": 0.1,
                "parameters": {"alpha": 0.5, "c_plus": 0.5, "c_minus": 0.5, "s_max": 2.0},
                "direction": {"mode": "random_mode", "index": 1},
            },
        },
        "coefficients": {
            "family": "paper_example_5",
            "delta": float(delta),
            "frequencies": list(DEFAULT_FREQUENCIES),
            "phase": float(phase),
            "jump_coupling": "theta",
        },
    }


BUILTINS = {"paper_example_5": paper_example_5_dict}


def builtin_scenario(name: str = "paper_example_5", **kwargs) -> Scenario:
    if name not in BUILTINS:
        raise ScenarioError("builtin", f"unknown builtin {name!r}")
    return scenario_from_dict(BUILTINS[name](**kwargs), name=name)


def _get(d, key, path, default=None, required=False):
    if key in d and d[key] is not None:
        return d[key]
    if required:
        raise ScenarioError(path, "missing")
    return default


def _float(v, path):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ScenarioError(path, f"expected a number, got {v!r}") from None
    if not math.isfinite(x):
        raise ScenarioError(path, "must be finite")
    return x


def _spectrum(spec, modes, path):
    if isinstance(spec, dict):
        extra = set(spec) - {"power", "scale"}
        if extra:
            raise ScenarioError(f"{path}.{sorted(extra)[0]}", "unknown key")
        p = _float(spec.get("power", 2.0), f"{path}.power")
        s = _float(spec.get("scale", 1.0), f"{path}.scale")
        return s * np.arange(1, modes + 1, dtype=np.float64) ** (-p)
    try:
        arr = np.asarray(spec, dtype=np.float64)
    except (TypeError, ValueError):
        raise ScenarioError(path, "expected a list of numbers") from None
    if arr.shape != (modes,):
        raise ScenarioError(path, f"length must equal modes={modes}")
    return arr


def scenario_from_dict(raw: dict, name: str | None = None) -> Scenario:
    """Build and validate a scenario from a config tree (see module docs)."""
    _check_keys(raw, _SCHEMA)
    raw = dict(raw)
    if "builtin" in raw:
        bname = raw.pop("builtin")
        if bname not in BUILTINS:
            raise ScenarioError("builtin", f"unknown builtin {bname!r}")
        raw = _merge(BUILTINS[bname](), raw)
        name = name or bname
    name = raw.pop("name", None) or name or "custom"

    sp = _get(raw, "space", "space", required=True)
    modes = _get(sp, "modes", "space.modes", required=True)
    if isinstance(modes, bool) or not isinstance(modes, (int, np.integer)) or modes < 1:
        raise ScenarioError("space.modes", f"must be a positive integer, got {modes!r}")
    modes = int(modes)

    sg = _get(raw, "semigroup", "semigroup", {})
    basis = _get(sg, "type", "semigroup.type", "dirichlet_sine")
    try:
        space = SpaceConfig(modes, basis)
    except ValueError as e:
        raise ScenarioError("semigroup.type", str(e)) from None
    rates = sg.get("decay_rates")
    if rates is not None:
        rates = _spectrum(rates, modes, "semigroup.decay_rates")
    K = sg.get("K")
    omega = sg.get("omega")
    try:
        semigroup = make_semigroup(
            space, rates,
            None if K is None else _float(K, "semigroup.K"),
            None if omega is None else _float(omega, "semigroup.omega"),
        )
    except ValueError as e:
        raise ScenarioError("semigroup", str(e)) from None

    kd = _get(raw, "kernels", "kernels", {})
    kernels = []
    for key in ("B1", "B2"):
        k = _get(kd, key, f"kernels.{key}", {})
        fam = _get(k, "family", f"kernels.{key}.family", "exponential")
        rate = _float(_get(k, "rate", f"kernels.{key}.rate", semigroup.stability_omega),
                      f"kernels.{key}.rate")
        if fam == "exponential" and rate <= 0:
            raise ScenarioError(f"kernels.{key}.rate", "must be positive (kernel not integrable)")
        try:
            kernels.append(Kernel(fam, rate if fam == "exponential" else 0.0))
        except ValueError as e:
            raise ScenarioError(f"kernels.{key}", str(e)) from None

    nd = _get(raw, "noise", "noise", {})
    wd = _get(nd, "wiener", "noise.wiener", {})
    q = _spectrum(_get(wd, "q_eigenvalues", "noise.wiener.q_eigenvalues", {"power": 2.0}),
                  modes, "noise.wiener.q_eigenvalues")
    try:
        wiener = QWienerConfig(q)
    except ValueError as e:
        raise ScenarioError("noise.wiener.q_eigenvalues", str(e)) from None
    jd = _get(nd, "jumps", "noise.jumps", required=True)
    direction = _get(jd, "direction", "noise.jumps.direction", {})
    if not isinstance(direction, dict) or set(direction) - {"mode", "index"}:
        raise ScenarioError("noise.jumps.direction", "expected {mode, index}")
    try:
        jumps = JumpMeasureConfig(
            _get(jd, "family", "noise.jumps.family", required=True),
            _float(_get(jd, "small_cutoff", "noise.jumps.small_cutoff", required=True),
                   "noise.jumps.small_cutoff"),
            dict(_get(jd, "parameters", "noise.jumps.parameters", {})),
            direction.get("mode", "random_mode"),
            int(direction.get("index", 1)),
        )
    except (ValueError, KeyError, TypeError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError("noise.jumps", str(e)) from None

    cd = _get(raw, "coefficients", "coefficients", required=True)
    try:
        coeffs = CoefficientSet(
            family=_get(cd, "family", "coefficients.family", required=True),
            delta=_float(_get(cd, "delta", "coefficients.delta", 0.0), "coefficients.delta"),
            frequencies=tuple(_get(cd, "frequencies", "coefficients.frequencies",
                                   DEFAULT_FREQUENCIES)),
            phase=_float(_get(cd, "phase", "coefficients.phase", 0.0), "coefficients.phase"),
            jump_coupling=_get(cd, "jump_coupling", "coefficients.jump_coupling", "theta"),
            terms=tuple(_get(cd, "terms", "coefficients.terms", ("g",))),
        )
    except (ValueError, TypeError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError("coefficients", str(e)) from None

    return Scenario(space, semigroup, tuple(kernels), wiener, jumps, coeffs, name)


def read_scenario_source(source) -> tuple[dict, str | None]:
    """Raw scenario mapping and its name from a YAML path, mapping or builtin name."""
    if isinstance(source, dict):
        return copy.deepcopy(source), source.get("name")
    if isinstance(source, str) and source in BUILTINS:
        return BUILTINS[source](), source
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError("<file>", f"cannot read {path}: {e}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError("<file>", f"not valid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "expected a mapping at top level")
    return raw, raw.get("name") or path.stem


def apply_overrides(raw: dict, assignments) -> dict:
    """Set dotted keys from ``"a.b=value"`` strings; values are parsed as YAML."""
    out = copy.deepcopy(raw)
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ScenarioError("<override>", f"expected key=value, got {item!r}")
        try:
            parsed = yaml.safe_load(value)
        except yaml.YAMLError as e:
            raise ScenarioError(key, f"cannot parse override value: {e}") from None
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ScenarioError(key, f"{part!r} is not a mapping")
            node = child
        node[parts[-1]] = parsed
    return out


def load_scenario(source, overrides=()) -> Scenario:
    """Load a scenario from a YAML file, a mapping, or a builtin name."""
    if isinstance(source, Scenario) and not overrides:
        return source
    if isinstance(source, Scenario):
        raw, name = {"name": source.name, **source.to_dict()}, source.name
    else:
        raw, name = read_scenario_source(source)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return scenario_from_dict(raw, name=name)


def dump_scenario(scn: Scenario, path) -> Path:
    path = Path(path)
    d = {"name": scn.name, **scn.to_dict()}
    path.write_text(yaml.safe_dump(d, sort_keys=False))
    return path
