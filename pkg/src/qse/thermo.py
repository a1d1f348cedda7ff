"""Entropy functionals, heat flux, work rate, the second-law residual
identity, equilibrium quantities and the modified free energy.

The memory entropy rate and the residual identity couple the quantum field
rho_W to the classical field rho_KR evolved from the same initial data; with
harmonic potentials or hbar = 0 the two coincide and every memory quantity
vanishes identically.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .model import PhysicalParams, PotentialSpec, gamma
from .wignerpde import PhaseGrid, WignerField, _W1, _deriv, moments

__all__ = [
    "EntropyLedger",
    "LedgerRow",
    "shannon_entropy",
    "memory_entropy_rate",
    "heat_flux",
    "work_rate",
    "second_law_residual",
    "equilibrium_field",
    "free_energy_tilde",
    "build_ledger",
]

DEFAULT_EPSILON_REL = 1e-12


def _support_mask(values: np.ndarray, epsilon: float) -> np.ndarray:
    return np.abs(values) > epsilon


def shannon_entropy(
    field: WignerField,
    epsilon: float | None = None,
    kB: float = 1.0,
    with_sensitivity: bool = False,
):
    """-kB * integral of rho ln|rho| restricted to cells with |rho| > epsilon.

    The default floor is 1e-12 of the field's peak.  With
    with_sensitivity=True also returns |S(eps) - S(eps/10)|, an estimate of
    how much the exclusion rule matters.
    """
    if epsilon is None:
        epsilon = DEFAULT_EPSILON_REL * float(np.abs(field.values).max())
    if epsilon <= 0:
        raise ValueError("epsilon floor must be > 0")

    w = field.grid.trapezoid_weights()

    def entropy_at(eps: float) -> float:
        mask = _support_mask(field.values, eps)
        vals = field.values[mask]
        return float(-kB * np.sum(w[mask] * vals * np.log(np.abs(vals))))

    s = entropy_at(epsilon)
    if not with_sensitivity:
        return s
    return s, abs(s - entropy_at(epsilon / 10.0))


def _phase_space_velocity_sq(
    rho_w: np.ndarray, grid: PhaseGrid, params: PhysicalParams, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """{p/m + (1/beta) d_p ln|rho_W|}^2 and the retained-cell mask."""
    mask = _support_mask(rho_w, epsilon)
    drho_dp = _deriv(rho_w, _W1, axis=1, h=grid.hp, order=1)
    p_full = np.broadcast_to(grid.p[None, :], rho_w.shape)
    phi = np.zeros_like(rho_w)
    phi[mask] = p_full[mask] / params.m + (drho_dp[mask] / rho_w[mask]) / params.beta
    return phi**2, mask


def memory_entropy_rate(
    rho_w: WignerField,
    rho_kr: WignerField,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
    t: float,
    epsilon: float | None = None,
    gamma_value: float | None = None,
) -> float:
    """Instantaneous rate of the history-dependent entropy induced by quantum
    fluctuations:

        kB * int dG [ Sigma ln|rho_W|
                      - beta nu (rho_W - rho_KR) {p/m + (1/beta) d_p ln|rho_W|}^2 ]

    Zero identically for harmonic potentials and in the classical limit.
    """
    from .wignerpde import sigma_term

    if rho_w.grid != rho_kr.grid:
        raise ValueError("fields must share a grid")
    if abs(rho_w.t - rho_kr.t) > 1e-12:
        raise ValueError("fields must share a time stamp")
    grid = rho_w.grid
    if epsilon is None:
        epsilon = DEFAULT_EPSILON_REL * float(np.abs(rho_w.values).max())
    w = grid.trapezoid_weights()

    gv = gamma(params, t) if gamma_value is None else gamma_value
    sig = sigma_term(rho_w.values, grid, params, spec, lam, gv)

    mask = _support_mask(rho_w.values, epsilon)
    term1 = np.zeros_like(rho_w.values)
    term1[mask] = sig[mask] * np.log(np.abs(rho_w.values[mask]))

    phi2, mask2 = _phase_space_velocity_sq(rho_w.values, grid, params, epsilon)
    delta = rho_w.values - rho_kr.values
    term2 = np.where(mask2, params.beta * params.nu * delta * phi2, 0.0)

    return float(params.kB * np.sum(w * (term1 - term2)))


def heat_flux(field: WignerField, params: PhysicalParams) -> float:
    """Expected heat absorbed from the bath per unit time,
    nu (kB T / m - <p^2>/m^2)."""
    g = field.grid
    w = g.trapezoid_weights() * field.values
    p2 = float(np.sum(w * g.p[None, :] ** 2))
    return params.nu * (params.kT / params.m - p2 / params.m**2)


def work_rate(field: WignerField, spec: PotentialSpec, lam: float, lam_dot: float) -> float:
    """lam_dot * < dV/dlam > under the field."""
    if lam_dot == 0.0:
        return 0.0
    g = field.grid
    w = g.trapezoid_weights() * field.values
    dv = np.asarray(spec.lambda_partial(g.x))[:, None]
    return float(lam_dot * np.sum(w * dv))


def second_law_residual(
    rho_w: WignerField,
    rho_kr: WignerField,
    ds_dt: float,
    dq_dt: float,
    params: PhysicalParams,
    epsilon: float | None = None,
) -> tuple[float, float]:
    """Both sides of the entropy-balance identity:

        lhs = T dS/dt - <dQ/dt>
        rhs = nu int dG rho_KR {p/m + (1/beta) d_p ln|rho_W|}^2  >= 0

    ds_dt must combine the Shannon part (finite differences across samples)
    with the instantaneous memory rate.
    """
    if rho_w.grid != rho_kr.grid:
        raise ValueError("fields must share a grid")
    grid = rho_w.grid
    if epsilon is None:
        epsilon = DEFAULT_EPSILON_REL * float(np.abs(rho_w.values).max())
    phi2, mask = _phase_space_velocity_sq(rho_w.values, grid, params, epsilon)
    w = grid.trapezoid_weights()
    rhs = params.nu * float(np.sum(w[mask] * rho_kr.values[mask] * phi2[mask]))
    lhs = params.T * ds_dt - dq_dt
    return lhs, rhs


def equilibrium_field(
    grid: PhaseGrid,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam_eq: float,
    kind: str = "classical",
    boundary_tol: float = 1e-10,
) -> tuple[WignerField, float]:
    """Gibbs field e^(-beta H)/Z_c and the classical partition function Z_c
    by quadrature."""
    if not spec.is_confining(lam_eq):
        raise ValueError("equilibrium requires a confining potential")
    x = grid.x[:, None]
    p = grid.p[None, :]
    h = p**2 / (2 * params.m) + np.asarray(spec.value(grid.x, lam_eq))[:, None]
    vals = np.exp(-params.beta * (h - h.min()))
    zc = grid.integrate(vals) * math.exp(-params.beta * h.min())
    vals *= math.exp(-params.beta * h.min()) / zc
    boundary = max(vals[0, :].max(), vals[-1, :].max(), vals[:, 0].max(), vals[:, -1].max())
    if boundary > boundary_tol * vals.max():
        raise ValueError(
            f"domain too small for equilibrium at lam={lam_eq:g}: boundary/peak = "
            f"{boundary / vals.max():.2e}"
        )
    return WignerField(grid=grid, values=vals, t=0.0, kind=kind), zc


def free_energy_tilde(
    field: WignerField,
    s_total: float,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
) -> float:
    """<H> - T S with S = S_SH + accumulated memory entropy."""
    return moments(field, params, spec, lam)["H"] - params.T * s_total


@dataclass
class LedgerRow:
    t: float
    s_sh: float
    s_me_rate: float
    s_me_acc: float
    dq_dt: float
    work_rate: float
    energy: float
    lhs25: float
    rhs25: float
    epsilon_sensitivity: float


@dataclass
class EntropyLedger:
    """Time series of entropy bookkeeping along a run.  lhs/rhs of the
    entropy-balance identity are filled on interior samples only (centered
    differences need both neighbours)."""

    rows: list[LedgerRow] = field(default_factory=list)
    epsilon_rel: float = DEFAULT_EPSILON_REL

    CSV_SCHEMA = "qse.ledger.v1"
    CSV_COLUMNS = (
        "t,S_SH,S_ME_rate,S_ME_acc,dQdt,work_rate,energy,lhs25,rhs25,epsilon_sensitivity"
    )

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def s_total(self) -> np.ndarray:
        return self.column("s_sh") + self.column("s_me_acc")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {self.CSV_SCHEMA}\n")
        buf.write(self.CSV_COLUMNS + "\n")
        for r in self.rows:
            buf.write(
                ",".join(
                    repr(v)
                    for v in (
                        r.t, r.s_sh, r.s_me_rate, r.s_me_acc, r.dq_dt,
                        r.work_rate, r.energy, r.lhs25, r.rhs25,
                        r.epsilon_sensitivity,
                    )
                )
                + "\n"
            )
        return buf.getvalue()


def build_ledger(
    snaps_w: list[WignerField],
    snaps_kr: list[WignerField],
    params: PhysicalParams,
    spec: PotentialSpec,
    schedule,
    gamma_fn=None,
    epsilon: float | None = None,
) -> EntropyLedger:
    """Assemble the entropy ledger from paired snapshot sequences.

    dS_SH/dt uses centered differences over the sample times; the memory
    entropy enters as an instantaneous rate and is accumulated by trapezoid.
    For a purely classical run pass the same snapshot list twice.
    """
    if len(snaps_w) != len(snaps_kr):
        raise ValueError("snapshot sequences must have equal length")
    n = len(snaps_w)
    times = np.array([f.t for f in snaps_w])

    s_sh = np.empty(n)
    sens = np.empty(n)
    me_rate = np.empty(n)
    dq = np.empty(n)
    wr = np.empty(n)
    en = np.empty(n)
    for k in range(n):
        fw, fk = snaps_w[k], snaps_kr[k]
        lam = schedule.value(fw.t)
        s_sh[k], sens[k] = shannon_entropy(
            fw, epsilon=epsilon, kB=params.kB, with_sensitivity=True
        )
        gv = gamma_fn(fw.t) if gamma_fn is not None else None
        me_rate[k] = memory_entropy_rate(
            fw, fk, params, spec, lam, fw.t, epsilon=epsilon, gamma_value=gv
        )
        dq[k] = heat_flux(fw, params)
        wr[k] = work_rate(fw, spec, lam, schedule.rate(fw.t))
        en[k] = moments(fw, params, spec, lam)["H"]

    me_acc = np.concatenate(
        [[0.0], np.cumsum(0.5 * (me_rate[1:] + me_rate[:-1]) * np.diff(times))]
    )

    ledger = EntropyLedger()
    for k in range(n):
        if 0 < k < n - 1:
            ds_sh_dt = (s_sh[k + 1] - s_sh[k - 1]) / (times[k + 1] - times[k - 1])
            lhs, rhs = second_law_residual(
                snaps_w[k], snaps_kr[k], ds_sh_dt + me_rate[k],
                dq[k], params, epsilon=epsilon,
            )
        else:
            lhs = rhs = float("nan")
        ledger.rows.append(
            LedgerRow(
                t=float(times[k]), s_sh=float(s_sh[k]), s_me_rate=float(me_rate[k]),
                s_me_acc=float(me_acc[k]), dq_dt=float(dq[k]), work_rate=float(wr[k]),
                energy=float(en[k]), lhs25=float(lhs), rhs25=float(rhs),
                epsilon_sensitivity=float(sens[k]),
            )
        )
    return ledger
