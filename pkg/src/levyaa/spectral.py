"""Truncated Hilbert space, diagonal generator and its semigroup.

Elements of the truncated space are plain 1-D float arrays of basis
coefficients (``SpectralVector``). With an orthonormal basis the Euclidean
norm of the coefficients is the Hilbert-space norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SpectralVector = np.ndarray

BASIS_LABELS = ("dirichlet_sine", "abstract_diagonal")
QUADRATURE_POINTS = 512


@dataclass(frozen=True)
class SpaceConfig:
    modes: int = 64
    basis_label: str = "dirichlet_sine"

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError(f"modes must be a positive integer, got {self.modes!r}")
        if self.basis_label not in BASIS_LABELS:
            raise ValueError(f"unknown basis_label {self.basis_label!r}")


@dataclass(frozen=True)
class Semigroup:
    """Diagonal exponentially stable semigroup ``T(t) e_n = exp(-rate_n t) e_n``.

    ``stability_K`` and ``stability_omega`` are the constants of the bound
    ``||T(t)|| <= K exp(-omega t)``; they are validated against the rates.
    """

    decay_rates: np.ndarray
    stability_K: float = 1.0
    stability_omega: float = np.pi**2

    def __post_init__(self):
        rates = np.asarray(self.decay_rates, dtype=np.float64)
        rates.setflags(write=False)
        object.__setattr__(self, "decay_rates", rates)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("decay_rates must be a non-empty 1-D array")
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("decay_rates must be positive and finite")
        if self.stability_K < 1:
            raise ValueError("stability_K must be >= 1")
        if self.stability_omega <= 0:
            raise ValueError("stability_omega must be > 0")
        # for a diagonal semigroup the bound holds iff omega <= min rate (K >= 1)
        if self.stability_omega > rates.min() * (1 + 1e-12):
            raise ValueError(
                f"stability_omega={self.stability_omega} exceeds the slowest decay "
                f"rate {rates.min()}; the stability bound would not hold"
            )

    @classmethod
    def dirichlet(cls, modes: int) -> "Semigroup":
        """Heat semigroup of the Dirichlet Laplacian on (0, 1)."""
        n = np.arange(1, modes + 1, dtype=np.float64)
        return cls(n**2 * np.pi**2, 1.0, float(np.pi**2))

    @property
    def modes(self) -> int:
        return self.decay_rates.size

    def factors(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"semigroup time must be nonnegative, got {t}")
        return np.exp(-self.decay_rates * t)

    def apply(self, t: float, v: SpectralVector) -> SpectralVector:
        return semigroup_apply(self, t, v)

    def bound(self, t: float) -> float:
        return self.stability_K * np.exp(-self.stability_omega * t)


def semigroup_apply(sg: Semigroup, t: float, v: SpectralVector) -> SpectralVector:
    """Return ``T(t) v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != sg.modes:
        raise ValueError(f"vector has {v.shape[-1]} modes, semigroup has {sg.modes}")
    return sg.factors(t) * v


def vector_norm(v: SpectralVector) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(v, dtype=np.float64)))))


def sine_basis(r, modes: int) -> np.ndarray:
    """Values of ``sqrt(2) sin(n pi r)`` for n = 1..modes; shape (len(r), modes)."""
    r = np.asarray(r, dtype=np.float64)
    n = np.arange(1, modes + 1)
    return np.sqrt(2.0) * np.sin(np.pi * np.outer(r, n))


@dataclass(frozen=True)
class SpatialQuadrature:
    """Fixed midpoint rule on (0, 1) mapping coefficients <-> point values.

    With midpoints ``(j + 1/2)/J`` the sampled sine basis is discretely
    orthonormal for ``modes <= J``, so ``analyse(synthesise(c)) == c`` up to
    rounding and ``synthesise`` is an isometry into the weighted point space.
    """

    modes: int
    points: int = QUADRATURE_POINTS
    nodes: np.ndarray = field(init=False, repr=False)
    basis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.modes > self.points:
            raise ValueError("quadrature needs at least as many points as modes")
        nodes = (np.arange(self.points) + 0.5) / self.points
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "basis", sine_basis(nodes, self.modes))

    def synthesise(self, coeffs: np.ndarray) -> np.ndarray:
        """Point values of ``sum_n c_n e_n``; works on a trailing mode axis."""
        return np.asarray(coeffs) @ self.basis.T

    def analyse(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values) @ self.basis) / self.points


def make_semigroup(space: SpaceConfig, decay_rates=None, K: float | None = None,
                   omega: float | None = None) -> Semigroup:
    if space.basis_label == "dirichlet_sine":
        if decay_rates is not None:
            raise ValueError("dirichlet_sine fixes the decay rates; do not pass them")
        base = Semigroup.dirichlet(space.modes)
        return Semigroup(
            base.decay_rates,
            base.stability_K if K is None else float(K),
            base.stability_omega if omega is None else float(omega),
        )
    if decay_rates is None:
        raise ValueError("abstract_diagonal requires decay_rates")
    rates = np.asarray(decay_rates, dtype=np.float64)
    if rates.shape != (space.modes,):
        raise ValueError(f"decay_rates must have length {space.modes}")
    return Semigroup(
        rates,
        1.0 if K is None else float(K),
        float(rates.min()) if omega is None else float(omega),
    )
