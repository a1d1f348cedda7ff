"""Physical parameters, polynomial potentials, drive schedules and the
dissipation factor shared by every solver in the package."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PhysicalParams",
    "PotentialSpec",
    "Schedule",
    "gamma",
    "potential_derivative",
    "hamiltonian",
]

MAX_DEGREE = 6


@dataclass(frozen=True)
class PhysicalParams:
    """Bath and particle constants. beta is derived, never stored."""

    m: float
    nu: float
    T: float
    kB: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("m", "nu", "T", "kB", "hbar"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.m <= 0:
            raise ValueError("mass m must be > 0")
        if self.T <= 0:
            raise ValueError("temperature T must be > 0")
        if self.kB <= 0:
            raise ValueError("kB must be > 0")
        if self.nu < 0:
            raise ValueError("dissipative coefficient nu must be >= 0")
        if self.hbar < 0:
            raise ValueError("hbar must be >= 0")

    @property
    def beta(self) -> float:
        return 1.0 / (self.kB * self.T)

    @property
    def kT(self) -> float:
        return self.kB * self.T

    def with_bath(self, nu: float | None = None, T: float | None = None) -> "PhysicalParams":
        """Copy with a different bath coupling/temperature (engine segments)."""
        return PhysicalParams(
            m=self.m,
            nu=self.nu if nu is None else nu,
            T=self.T if T is None else T,
            kB=self.kB,
            hbar=self.hbar,
        )


@dataclass(frozen=True)
class PotentialSpec:
    """Polynomial potential V(x, lam) = sum_n c_n x^n with one coefficient
    driven multiplicatively by the control parameter.

    ``lambda_index = n*`` means the effective coefficient is
    ``lam * coefficients[n*]``; store 1.0 there to get ``c_{n*} = lam``
    exactly.  With ``lambda_index=None`` the potential is static and the
    work channel is identically zero.
    """

    coefficients: tuple[float, ...]
    lambda_index: int | None = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) == 0:
            raise ValueError("need at least one coefficient")
        if self.degree > MAX_DEGREE:
            raise ValueError(f"polynomial degree {self.degree} > {MAX_DEGREE} unsupported")
        if self.lambda_index is not None and not (0 <= self.lambda_index < len(coeffs)):
            raise ValueError("lambda_index outside coefficient range")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def effective_coefficients(self, lam: float) -> np.ndarray:
        c = np.array(self.coefficients, dtype=float)
        if self.lambda_index is not None:
            c[self.lambda_index] *= lam
        return c

    def is_confining(self, lam: float) -> bool:
        """Even leading degree with positive leading coefficient."""
        c = self.effective_coefficients(lam)
        nz = np.nonzero(c)[0]
        if len(nz) == 0:
            return False
        d = nz[-1]
        return d >= 2 and d % 2 == 0 and c[d] > 0

    def value(self, x, lam: float):
        c = self.effective_coefficients(lam)
        return np.polynomial.polynomial.polyval(x, c)

    def derivative(self, n: int, x, lam: float):
        """Exact n-th x-derivative of the polynomial at (x, lam)."""
        if n < 0:
            raise ValueError("derivative order must be >= 0")
        c = self.effective_coefficients(lam)
        for _ in range(n):
            c = np.polynomial.polynomial.polyder(c)
            if len(c) == 0:
                c = np.zeros(1)
        return np.polynomial.polynomial.polyval(x, c)

    def derivative_coefficients(self, n: int, lam: float) -> np.ndarray:
        c = self.effective_coefficients(lam)
        for _ in range(n):
            c = np.polynomial.polynomial.polyder(c)
            if len(c) == 0:
                c = np.zeros(1)
        return c

    def lambda_partial(self, x):
        """d V / d lam at fixed x; zero for a static potential."""
        if self.lambda_index is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        n = self.lambda_index
        return self.coefficients[n] * np.asarray(x, dtype=float) ** n


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear control protocol lam(t), constant outside the
    breakpoint range.  The rate at a breakpoint is the right derivative."""

    breakpoints: tuple[tuple[float, float], ...]
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.breakpoints)
        if len(pts) == 0:
            raise ValueError("schedule needs at least one breakpoint")
        times = np.array([p[0] for p in pts])
        if np.any(np.diff(times) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        object.__setattr__(self, "breakpoints", pts)
        object.__setattr__(self, "_times", times)
        object.__setattr__(self, "_values", np.array([p[1] for p in pts]))

    @classmethod
    def constant(cls, lam: float) -> "Schedule":
        return cls(breakpoints=((0.0, lam),))

    @classmethod
    def ramp(cls, t0: float, lam0: float, t1: float, lam1: float) -> "Schedule":
        return cls(breakpoints=((t0, lam0), (t1, lam1)))

    def value(self, t: float) -> float:
        return float(np.interp(t, self._times, self._values))

    def rate(self, t: float) -> float:
        """Right derivative of lam at t (zero outside the breakpoints)."""
        times = self._times
        if t < times[0] or t >= times[-1]:
            return 0.0
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(times) - 2)
        return float((self._values[i + 1] - self._values[i]) / (times[i + 1] - times[i]))

    @property
    def final_value(self) -> float:
        return float(self._values[-1])

    @property
    def end_time(self) -> float:
        return float(self._times[-1])

    def shifted(self, dt: float) -> "Schedule":
        return Schedule(tuple((t + dt, v) for t, v in self.breakpoints))


def gamma(params: PhysicalParams, t: float) -> float:
    """Dissipation factor e^(-nu t / m) governing commutator decay."""
    if t < 0:
        raise ValueError("gamma undefined for negative time")
    return math.exp(-params.nu * t / params.m)


def potential_derivative(spec: PotentialSpec, n: int, x, lam: float):
    return spec.derivative(n, x, lam)


def hamiltonian(params: PhysicalParams, spec: PotentialSpec, x, p, lam: float):
    return np.asarray(p, dtype=float) ** 2 / (2.0 * params.m) + spec.value(x, lam)
