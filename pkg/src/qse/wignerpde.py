"""Phase-space solver for the dissipative Wigner evolution equation and its
classical (Kramers / Fokker-Planck) counterpart on a shared rectangular grid.

The generator splits into a classical part

    L rho = [-(p/m) d_x + V'(x) d_p + (nu/m) d_p p + (nu/beta) d_p^2] rho

plus, for quantum fields, a finite sum of odd momentum derivatives

    Sigma = sum_{l>=1} V^(2l+1)/(2l+1)! (-hbar^2 gamma^2(t)/4)^l d_p^(2l+1) rho

which is exact for polynomial potentials (degree <= 6 means l <= 2).  Space
is discretized with 4th-order central stencils and zero boundary values; time
stepping is classical RK4 on the method of lines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import NumericalAbort
from .model import PhysicalParams, PotentialSpec, Schedule, gamma

__all__ = [
    "PhaseGrid",
    "WignerField",
    "gaussian_wigner",
    "gaussian_field",
    "rhs_eval",
    "evolve",
    "evolve_fields",
    "moments",
    "stability_limits",
    "stable_dt",
    "save_snapshot",
    "load_snapshot",
]


def fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights on integer offsets for the given derivative
    order (unit spacing), from the moment conditions sum w_j j^k = k! d_{k,order}."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    if order >= n:
        raise ValueError("not enough points for requested derivative order")
    a = np.vander(offsets, n, increasing=True).T
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(a, b)


# 4th-order central stencils (unit spacing)
_W1 = fd_weights(np.arange(-2, 3), 1)
_W2 = fd_weights(np.arange(-2, 3), 2)
_W3 = fd_weights(np.arange(-3, 4), 3)
_W5 = fd_weights(np.arange(-4, 5), 5)


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform rectangular (x, p) grid; fields are indexed [ix, ip]."""

    x_min: float
    x_max: float
    nx: int
    p_min: float
    p_max: float
    np_: int

    def __post_init__(self):
        if self.nx < 32 or self.np_ < 32:
            raise ValueError("grid must be at least 32 x 32")
        if self.x_max <= self.x_min or self.p_max <= self.p_min:
            raise ValueError("empty phase-space domain")

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hp(self) -> float:
        return (self.p_max - self.p_min) / (self.np_ - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.np_)

    def trapezoid_weights(self) -> np.ndarray:
        wx = np.full(self.nx, self.hx)
        wx[0] = wx[-1] = 0.5 * self.hx
        wp = np.full(self.np_, self.hp)
        wp[0] = wp[-1] = 0.5 * self.hp
        return wx[:, None] * wp[None, :]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.trapezoid_weights() * values))


@dataclass
class WignerField:
    """Real-valued phase-space field (quantum fields may go negative)."""

    grid: PhaseGrid
    values: np.ndarray
    t: float = 0.0
    kind: str = "quantum"

    def __post_init__(self):
        if self.kind not in ("quantum", "classical"):
            raise ValueError("kind must be 'quantum' or 'classical'")
        if self.values.shape != (self.grid.nx, self.grid.np_):
            raise ValueError("values shape does not match grid")

    def norm(self) -> float:
        return self.grid.integrate(self.values)

    def min_value(self) -> float:
        return float(self.values.min())

    def copy(self) -> "WignerField":
        return replace(self, values=self.values.copy())


def gaussian_field(
    grid: PhaseGrid, x0: float, p0: float, sx: float, sp: float, kind: str = "quantum"
) -> WignerField:
    """Normalized uncorrelated Gaussian with Var(x) = sx^2, Var(p) = sp^2."""
    x = grid.x[:, None]
    p = grid.p[None, :]
    vals = np.exp(-((x - x0) ** 2) / (2 * sx**2) - ((p - p0) ** 2) / (2 * sp**2))
    f = WignerField(grid=grid, values=vals, t=0.0, kind=kind)
    f.values /= f.norm()
    return f


def gaussian_wigner(grid: PhaseGrid, packet, params: PhysicalParams) -> WignerField:
    """Wigner function of a minimum-uncertainty Gaussian wavepacket with
    position spread sigma: Var(x) = sigma^2, Var(p) = hbar^2 / (4 sigma^2)."""
    if params.hbar <= 0:
        raise ValueError("gaussian_wigner needs hbar > 0; use gaussian_field for classical data")
    sx = packet.sigma
    sp = params.hbar / (2.0 * packet.sigma)
    if sx < 4 * grid.hx:
        raise ValueError(f"packet x-spread {sx:g} unresolvable: need sigma >= 4 hx = {4*grid.hx:g}")
    if sp < 4 * grid.hp:
        raise ValueError(
            f"packet p-spread {sp:g} unresolvable: need hbar/(2 sigma) >= 4 hp = {4*grid.hp:g}"
        )
    return gaussian_field(grid, packet.x0, packet.p0, sx, sp, kind="quantum")


def _deriv(values: np.ndarray, weights: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    return correlate1d(values, weights, axis=axis, mode="constant", cval=0.0) / h**order


def sigma_term(
    field_values: np.ndarray,
    grid: PhaseGrid,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
    gamma_value: float,
) -> np.ndarray:
    """Quantum correction: finite sum of odd p-derivatives weighted by odd
    potential derivatives and powers of -hbar^2 gamma^2 / 4."""
    out = np.zeros_like(field_values)
    if params.hbar == 0.0 or gamma_value == 0.0:
        return out
    pref = -(params.hbar**2) * gamma_value**2 / 4.0
    for l, (wts, order) in enumerate(((_W3, 3), (_W5, 5)), start=1):
        k = 2 * l + 1
        if spec.degree < k:
            break
        v_k = spec.derivative(k, grid.x, lam)
        if not np.any(v_k):
            continue
        dpr = _deriv(field_values, wts, axis=1, h=grid.hp, order=order)
        out += (pref**l / math.factorial(k)) * np.asarray(v_k)[:, None] * dpr
    return out


def rhs_eval(
    field: WignerField,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
    t: float,
    gamma_value: float | None = None,
) -> np.ndarray:
    """Time derivative of the field at (lam, t); quantum kind adds the Sigma
    correction with gamma taken from (params, t) unless overridden."""
    g = field.grid
    rho = field.values
    drho_dx = _deriv(rho, _W1, axis=0, h=g.hx, order=1)
    drho_dp = _deriv(rho, _W1, axis=1, h=g.hp, order=1)
    d2rho_dp = _deriv(rho, _W2, axis=1, h=g.hp, order=2)

    p_row = g.p[None, :]
    v1_col = np.asarray(spec.derivative(1, g.x, lam))[:, None]
    nu, m = params.nu, params.m

    out = (
        -(p_row / m) * drho_dx
        + v1_col * drho_dp
        + (nu / m) * (rho + p_row * drho_dp)
        + nu * params.kT * d2rho_dp
    )
    if field.kind == "quantum":
        gv = gamma(params, t) if gamma_value is None else gamma_value
        out += sigma_term(rho, g, params, spec, lam, gv)
    return out


def stability_limits(
    grid: PhaseGrid,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam_values,
    gamma_max: float = 1.0,
) -> dict[str, float]:
    """Named per-term step-size bounds (before the safety factor)."""
    lams = np.atleast_1d(np.asarray(lam_values, dtype=float))
    p_max = max(abs(grid.p_min), abs(grid.p_max))
    v1_max = max(
        float(np.max(np.abs(spec.derivative(1, grid.x, lam)))) for lam in lams
    )
    lims: dict[str, float] = {}
    lims["advection_x"] = grid.hx / max(p_max / params.m, 1e-300)
    lims["advection_p"] = grid.hp / max(v1_max, 1e-300)
    diff = params.nu * params.kT
    if diff > 0:
        lims["diffusion_p"] = grid.hp**2 / diff
    if params.hbar > 0 and spec.degree >= 3:
        v3_max = max(
            float(np.max(np.abs(spec.derivative(3, grid.x, lam)))) for lam in lams
        )
        disp = params.hbar**2 * gamma_max**2 * v3_max / 4.0
        if disp > 0:
            lims["dispersion_p3"] = grid.hp**3 / disp
    return lims


def stable_dt(
    grid: PhaseGrid,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam_values,
    gamma_max: float = 1.0,
    safety: float = 0.4,
    dispersion_safety: float | None = None,
) -> float:
    """Largest permitted step: safety * min over the named bounds.  The
    dispersive (d_p^3) bound may carry its own safety factor."""
    lims = stability_limits(grid, params, spec, lam_values, gamma_max)
    dts = []
    for name, value in lims.items():
        c = safety
        if name == "dispersion_p3" and dispersion_safety is not None:
            c = dispersion_safety
        dts.append(c * value)
    return min(dts)


@dataclass
class EvolveOptions:
    safety: float = 0.4
    dispersion_safety: float | None = None
    blowup_factor: float = 10.0
    check_stride: int = 50
    norm_tol: float = 1e-6


def evolve_fields(
    fields: list[WignerField],
    params: PhysicalParams,
    spec: PotentialSpec,
    schedule: Schedule,
    t_end: float,
    dt: float | None = None,
    sample_times=None,
    gamma_fn=None,
    options: EvolveOptions | None = None,
) -> list[list[WignerField]]:
    """Advance several fields (shared grid and protocol, possibly different
    kinds) together with RK4, from the fields' current time stamp to the
    absolute time t_end, and return snapshot lists, one per field.

    dt=None picks the step adaptively from the stability bound, re-evaluated
    between samples as gamma decays.  Snapshots are taken exactly at
    sample_times (absolute; t_end is always included).
    """
    opts = options or EvolveOptions()
    if gamma_fn is None:
        gamma_fn = lambda t: gamma(params, t)
    t0 = fields[0].t
    samples = set(float(s) for s in (sample_times if sample_times is not None else [t0]))
    samples.add(float(t_end))
    sample_times = sorted(s for s in samples if s >= t0 - 1e-12)

    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError("co-evolved fields must share a grid")
    t = t0
    t_stop = max(sample_times[-1], t)
    values = [f.values.copy() for f in fields]
    kinds = [f.kind for f in fields]
    peaks = [opts.blowup_factor * float(np.max(np.abs(v))) for v in values]
    norms0 = [grid.integrate(v) for v in values]

    snapshots: list[list[WignerField]] = [[] for _ in fields]

    def take_sample(time: float) -> None:
        for i, v in enumerate(values):
            snapshots[i].append(WignerField(grid=grid, values=v.copy(), t=time, kind=kinds[i]))

    def rhs(v: np.ndarray, kind: str, time: float) -> np.ndarray:
        f = WignerField(grid=grid, values=v, t=time, kind=kind)
        return rhs_eval(f, params, spec, schedule.value(time), time, gamma_value=gamma_fn(time))

    next_sample = 0
    while next_sample < len(sample_times) and sample_times[next_sample] <= t + 1e-12:
        take_sample(t)
        next_sample += 1

    steps_done = 0
    while t < t_stop - 1e-12:
        target = sample_times[next_sample] if next_sample < len(sample_times) else t_stop
        if dt is None:
            lam_probe = (schedule.value(t), schedule.value(target))
            dt_now = stable_dt(
                grid, params, spec, lam_probe, gamma_max=gamma_fn(t),
                safety=opts.safety, dispersion_safety=opts.dispersion_safety,
            )
        else:
            dt_now = dt
        span = target - t
        n_sub = max(1, int(math.ceil(span / dt_now - 1e-9)))
        h = span / n_sub
        for _ in range(n_sub):
            for i, v in enumerate(values):
                k1 = rhs(v, kinds[i], t)
                k2 = rhs(v + 0.5 * h * k1, kinds[i], t + 0.5 * h)
                k3 = rhs(v + 0.5 * h * k2, kinds[i], t + 0.5 * h)
                k4 = rhs(v + h * k3, kinds[i], t + h)
                values[i] = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            steps_done += 1
            if steps_done % opts.check_stride == 0:
                for i, v in enumerate(values):
                    if not np.isfinite(v).all() or np.max(np.abs(v)) > peaks[i]:
                        raise NumericalAbort(
                            f"field {i} ({kinds[i]}) unstable at t={t:.6g}: "
                            f"max |value| {np.max(np.abs(v)):.3e} exceeds "
                            f"{peaks[i]:.3e} (10x initial peak)"
                        )
        t = target
        if next_sample < len(sample_times):
            take_sample(t)
            next_sample += 1

    for i, v in enumerate(values):
        drift = abs(grid.integrate(v) - norms0[i])
        if drift > opts.norm_tol:
            raise NumericalAbort(
                f"field {i} normalization drifted by {drift:.3e} (> {opts.norm_tol:g})"
            )
    return snapshots


def evolve(
    field: WignerField,
    params: PhysicalParams,
    spec: PotentialSpec,
    schedule: Schedule,
    t_end: float,
    dt: float | None = None,
    sample_times=None,
    gamma_fn=None,
    options: EvolveOptions | None = None,
) -> list[WignerField]:
    """Single-field front end of evolve_fields."""
    return evolve_fields(
        [field], params, spec, schedule, t_end, dt=dt,
        sample_times=sample_times, gamma_fn=gamma_fn, options=options,
    )[0]


def moments(
    field: WignerField, params: PhysicalParams, spec: PotentialSpec, lam: float
) -> dict[str, float]:
    """First and second moments plus the mean energy, by quadrature."""
    g = field.grid
    w = g.trapezoid_weights() * field.values
    x = g.x[:, None]
    p = g.p[None, :]
    h = p**2 / (2 * params.m) + np.asarray(spec.value(g.x, lam))[:, None]
    return {
        "x": float(np.sum(w * x)),
        "p": float(np.sum(w * p)),
        "x2": float(np.sum(w * x**2)),
        "p2": float(np.sum(w * p**2)),
        "xp": float(np.sum(w * x * p)),
        "H": float(np.sum(w * h)),
    }


_SNAPSHOT_DTYPE = "<f8"  # little-endian float64, C row-major, x index first


def save_snapshot(field: WignerField, path_base: str | Path) -> tuple[Path, Path]:
    """Write <base>.bin (raw little-endian float64, C order) and a JSON header
    <base>.json describing grid, time stamp, kind and byte layout."""
    base = Path(path_base)
    bin_path = base.with_suffix(".bin")
    json_path = base.with_suffix(".json")
    field.values.astype(_SNAPSHOT_DTYPE).tofile(bin_path)
    header = {
        "x_min": field.grid.x_min,
        "x_max": field.grid.x_max,
        "nx": field.grid.nx,
        "p_min": field.grid.p_min,
        "p_max": field.grid.p_max,
        "np": field.grid.np_,
        "t": field.t,
        "kind": field.kind,
        "dtype": _SNAPSHOT_DTYPE,
        "order": "C",
        "index_order": ["x", "p"],
    }
    json_path.write_text(json.dumps(header, sort_keys=True, indent=1) + "\n")
    return bin_path, json_path


def load_snapshot(path_base: str | Path) -> WignerField:
    base = Path(path_base)
    header = json.loads(base.with_suffix(".json").read_text())
    grid = PhaseGrid(
        x_min=header["x_min"], x_max=header["x_max"], nx=header["nx"],
        p_min=header["p_min"], p_max=header["p_max"], np_=header["np"],
    )
    values = np.fromfile(base.with_suffix(".bin"), dtype=header["dtype"]).reshape(
        grid.nx, grid.np_
    )
    return WignerField(grid=grid, values=values, t=header["t"], kind=header["kind"])
