"""Heisenberg-picture stochastic integrator for the position/momentum
operator SDEs in a truncated oscillator basis.

The pair (X, P) starts from the ladder-operator matrices (canonical up to the
unavoidable truncation defect on the top level) and is advanced with a Heun
predictor-corrector; the additive bath noise is a c-number per step
multiplying the identity.  Heat and work are accumulated as matrices so the
energy balance can be checked at the operator level, not just in expectation.

All step arithmetic broadcasts over leading axes, so a batch of trajectories
is stepped as stacked (m, n, n) arrays by the same code path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalAbort
from .model import PhysicalParams, PotentialSpec, Schedule, gamma
from .noise import ChunkedNoise, NoisePath

__all__ = [
    "BasisSpec",
    "InitialWavepacket",
    "OperatorState",
    "StepIncrements",
    "initial_state",
    "step_heisenberg",
    "heat_increment",
    "work_increment",
    "first_law_defect",
    "commutator_defect",
    "heat_commutator_check",
    "uncertainty_check",
    "run_ensemble",
    "ensemble_expectation",
    "EnsembleResult",
    "hamiltonian_matrix",
]

DEFAULT_GUARD = 16
ENSEMBLE_BLOCK = 1024  # fixed partition, so worker count cannot change results


@dataclass(frozen=True)
class BasisSpec:
    """Truncated oscillator basis: n_levels levels at reference frequency
    omega_ref.  The ladder matrices give hermitian X0, P0 with
    [X0, P0] = i hbar diag(1, ..., 1, 1 - n)."""

    n_levels: int
    omega_ref: float = 1.0

    def __post_init__(self):
        if self.n_levels < 4:
            raise ValueError("need at least 4 basis levels")
        if self.omega_ref <= 0:
            raise ValueError("omega_ref must be > 0")

    def lowering(self) -> np.ndarray:
        return np.diag(np.sqrt(np.arange(1, self.n_levels)), 1).astype(complex)

    def operators(self, params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
        """(X0, P0) for the given mass and hbar."""
        if params.hbar <= 0:
            raise ValueError("operator representation needs hbar > 0")
        a = self.lowering()
        ad = a.conj().T
        x_s = math.sqrt(params.hbar / (2.0 * params.m * self.omega_ref))
        p_s = math.sqrt(params.hbar * params.m * self.omega_ref / 2.0)
        return x_s * (a + ad), 1j * p_s * (ad - a)

    def length_scale(self, params: PhysicalParams) -> float:
        return math.sqrt(params.hbar / (params.m * self.omega_ref))


@dataclass(frozen=True)
class InitialWavepacket:
    """Gaussian packet centered at (x0, p0) with position spread sigma."""

    x0: float
    p0: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    def to_vector(
        self,
        basis: BasisSpec,
        params: PhysicalParams,
        guard: int = DEFAULT_GUARD,
        guard_tol: float = 1e-8,
    ) -> np.ndarray:
        """Expansion coefficients in the oscillator basis, by quadrature
        against the Hermite eigenfunctions.  Rejects packets whose top guard
        levels hold more than guard_tol population."""
        n = basis.n_levels
        hbar, m = params.hbar, params.m
        x_char = math.sqrt(hbar / (m * basis.omega_ref))
        span = 10.0 * max(self.sigma, x_char * math.sqrt(2 * n + 1) / 3.0)
        x = np.linspace(self.x0 - span, self.x0 + span, 4001)
        dx = x[1] - x[0]

        psi = (2 * math.pi * self.sigma**2) ** (-0.25) * np.exp(
            -((x - self.x0) ** 2) / (4 * self.sigma**2) + 1j * self.p0 * x / hbar
        )

        xi = x / x_char
        phi = np.empty((n, len(x)))
        phi[0] = (m * basis.omega_ref / (math.pi * hbar)) ** 0.25 * np.exp(-(xi**2) / 2)
        if n > 1:
            phi[1] = math.sqrt(2.0) * xi * phi[0]
        for k in range(2, n):
            phi[k] = (math.sqrt(2.0 / k) * xi * phi[k - 1]
                      - math.sqrt((k - 1) / k) * phi[k - 2])

        coeff = phi @ psi * dx
        norm = float(np.linalg.norm(coeff))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(
                f"packet poorly represented in {n} levels (captured norm {norm:.8f})"
            )
        top = float(np.sum(np.abs(coeff[n - guard :]) ** 2))
        if top > guard_tol:
            raise ValueError(
                f"packet populates top {guard} guard levels at {top:.2e} (> {guard_tol:g})"
            )
        return coeff / norm


@dataclass
class OperatorState:
    """Evolved operator pair plus accumulated heat/work matrices for one
    noise realization."""

    X: np.ndarray
    P: np.ndarray
    t: float
    Q_acc: np.ndarray
    W_acc: np.ndarray
    psi0: np.ndarray | None = None
    leak: float = 0.0

    @property
    def dim(self) -> int:
        return self.X.shape[-1]


@dataclass(frozen=True)
class StepIncrements:
    """Per-step increments and the midpoint bath force."""

    dX: np.ndarray
    dP: np.ndarray
    F_mid: np.ndarray
    dQ: np.ndarray
    dW: np.ndarray
    dB: float
    dt: float


def initial_state(
    basis: BasisSpec,
    params: PhysicalParams,
    packet: InitialWavepacket | None = None,
    guard: int = DEFAULT_GUARD,
) -> OperatorState:
    x0, p0 = basis.operators(params)
    zero = np.zeros_like(x0)
    psi = packet.to_vector(basis, params, guard=guard) if packet is not None else None
    return OperatorState(X=x0, P=p0, t=0.0, Q_acc=zero.copy(), W_acc=zero.copy(), psi0=psi)


def _poly_matrix(coeffs: np.ndarray, x: np.ndarray):
    """sum_n coeffs[n] X^n for stacked hermitian matrices (Horner).  Returns
    the scalar 0.0 for an identically-zero polynomial so callers can rely on
    broadcasting."""
    n = x.shape[-1]
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if len(coeffs) == 0:
        return 0.0
    eye = np.eye(n, dtype=complex)
    if len(coeffs) == 1:
        return np.broadcast_to(coeffs[0] * eye, x.shape).copy()
    if len(coeffs) == 2:
        if coeffs[0] == 0.0:
            return coeffs[1] * x
        return coeffs[1] * x + coeffs[0] * eye
    out = coeffs[-1] * x + coeffs[-2] * eye
    for c in coeffs[-3::-1]:
        out = out @ x
        if c != 0.0:
            out += c * eye
    return out


def _force_matrix(spec: PotentialSpec, x: np.ndarray, lam: float) -> np.ndarray:
    return _poly_matrix(spec.derivative_coefficients(1, lam), x)


def hamiltonian_matrix(
    params: PhysicalParams, spec: PotentialSpec, x: np.ndarray, p: np.ndarray, lam: float
) -> np.ndarray:
    return p @ p / (2.0 * params.m) + _poly_matrix(spec.effective_coefficients(lam), x)


def _heun_step(
    x: np.ndarray,
    p: np.ndarray,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
    lam_next: float,
    db,
    dt: float,
    track_heat: bool = True,
    track_work: bool = True,
):
    """One Stratonovich-consistent predictor-corrector step of the operator
    SDE pair; broadcasts over leading batch axes.  db is a scalar or (m,)
    array of Wiener increments."""
    n = x.shape[-1]
    nu, m = params.nu, params.m
    amp = math.sqrt(2.0 * nu * params.kT)
    scalar_db = np.isscalar(db) or np.asarray(db).ndim == 0
    db_col = float(db) if scalar_db else np.asarray(db, dtype=float)[..., None]

    def add_to_diag(a: np.ndarray, value) -> None:
        a.reshape(a.shape[:-2] + (n * n,))[..., :: n + 1] += value

    fp1 = -(nu / m) * p - _force_matrix(spec, x, lam)
    xp = x + (dt / m) * p
    pp = p + dt * fp1
    add_to_diag(pp, amp * db_col)
    fp2 = -(nu / m) * pp - _force_matrix(spec, xp, lam_next)
    x_new = x + (0.5 * dt / m) * (p + pp)
    fp1 += fp2
    p_new = p + 0.5 * dt * fp1
    add_to_diag(p_new, amp * db_col)

    dx = x_new - x
    dp = p_new - p
    f_mid = (-0.5 * nu / m) * (p + p_new)
    add_to_diag(f_mid, amp * db_col / dt)

    dq = heat_increment(dx, f_mid) if track_heat else None
    dw = None
    if track_work and lam_next != lam and spec.lambda_index is not None:
        dw = work_increment(x, x_new, spec, lam, lam_next)
    return x_new, p_new, dx, dp, f_mid, dq, dw


def heat_increment(dx: np.ndarray, f_mid: np.ndarray) -> np.ndarray:
    """Symmetrized Stratonovich heat: (dX F + F dX)/2."""
    return 0.5 * (dx @ f_mid + f_mid @ dx)


def work_increment(
    x_t: np.ndarray,
    x_next: np.ndarray,
    spec: PotentialSpec,
    lam: float,
    lam_next: float,
) -> np.ndarray:
    """Midpoint evaluation of dV/dlam times the control increment."""
    n = x_t.shape[-1]
    if lam_next == lam or spec.lambda_index is None:
        shape = x_t.shape
        return np.zeros(shape, dtype=complex)
    nstar = spec.lambda_index
    mono = np.eye(nstar + 1)[nstar]
    dvl = spec.coefficients[nstar]
    mid = 0.5 * (_poly_matrix(mono, x_t) + _poly_matrix(mono, x_next))
    return dvl * mid * (lam_next - lam)


def _hermiticity_defect(a: np.ndarray) -> float:
    return float(
        np.max(np.linalg.norm(a - np.conj(np.swapaxes(a, -1, -2)), axis=(-2, -1))
               / np.maximum(np.linalg.norm(a, axis=(-2, -1)), 1e-300))
    )


def _leak(x: np.ndarray, p: np.ndarray, psi: np.ndarray, guard: int) -> float:
    """Fraction of the reference state's image under X and P that lands in
    the top guard levels."""
    xv = x @ psi
    pv = p @ psi
    top = (np.abs(xv[..., -guard:]) ** 2).sum(axis=-1) + (np.abs(pv[..., -guard:]) ** 2).sum(axis=-1)
    tot = (np.abs(xv) ** 2).sum(axis=-1) + (np.abs(pv) ** 2).sum(axis=-1)
    return float(np.max(top / np.maximum(tot, 1e-300)))


def step_heisenberg(
    state: OperatorState,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
    lam_next: float,
    dB: float,
    dt: float,
    guard: int = DEFAULT_GUARD,
    leak_tol: float = 1e-6,
    herm_tol: float = 1e-10,
    check: bool = True,
) -> tuple[OperatorState, StepIncrements]:
    """Advance one state by dt; returns the new state and the increments.

    The step is rejected (NumericalAbort) if hermiticity or guard-level
    leakage of the reference state exceeds tolerance.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x_new, p_new, dx, dp, f_mid, dq, dw = _heun_step(
        state.X, state.P, params, spec, lam, lam_next, dB, dt
    )
    if dw is None:
        dw = np.zeros_like(x_new)
    leak = 0.0
    if check:
        h_def = max(_hermiticity_defect(x_new), _hermiticity_defect(p_new))
        if h_def > herm_tol:
            raise NumericalAbort(f"hermiticity defect {h_def:.2e} > {herm_tol:g} at t={state.t:g}")
        if state.psi0 is not None:
            leak = _leak(x_new, p_new, state.psi0, guard)
            if leak > leak_tol:
                raise NumericalAbort(
                    f"guard-level leakage {leak:.2e} > {leak_tol:g} at t={state.t:g}"
                )
    new_state = OperatorState(
        X=x_new, P=p_new, t=state.t + dt,
        Q_acc=state.Q_acc + dq, W_acc=state.W_acc + dw,
        psi0=state.psi0, leak=leak,
    )
    inc = StepIncrements(dX=dx, dP=dp, F_mid=f_mid, dQ=dq, dW=dw, dB=float(dB), dt=dt)
    return new_state, inc


def _guard_block(a: np.ndarray, guard: int) -> np.ndarray:
    keep = a.shape[-1] - guard
    return a[..., :keep, :keep]


def _spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.ndim == 2 else float(
        np.max(np.linalg.norm(a, ord=2, axis=(-2, -1)))
    )


def first_law_defect(
    state_t: OperatorState,
    state_next: OperatorState,
    dq: np.ndarray,
    dw: np.ndarray,
    spec: PotentialSpec,
    params: PhysicalParams,
    lam: float,
    lam_next: float,
    guard: int = DEFAULT_GUARD,
) -> float:
    """Norm of dH - dQ - dW on the guarded subspace for one step."""
    h0 = hamiltonian_matrix(params, spec, state_t.X, state_t.P, lam)
    h1 = hamiltonian_matrix(params, spec, state_next.X, state_next.P, lam_next)
    defect = _guard_block(h1 - h0 - dq - dw, guard)
    return _spectral_norm(defect)


def commutator_defect(
    state: OperatorState, params: PhysicalParams, guard: int = DEFAULT_GUARD
) -> float:
    """|| Pi ([X, P] - i hbar gamma(t) I) Pi || / hbar."""
    comm = state.X @ state.P - state.P @ state.X
    n = state.dim
    target = 1j * params.hbar * gamma(params, state.t) * np.eye(n)
    return _spectral_norm(_guard_block(comm - target, guard)) / params.hbar


def heat_commutator_check(
    state_before: OperatorState,
    inc: StepIncrements,
    params: PhysicalParams,
    guard: int = DEFAULT_GUARD,
) -> tuple[float, float]:
    """Defect norms of the Ito-ordered heat commutators for one step:

      (a) [P_t, dQ] = 0
      (b) [X_t, dQ] = (2 i hbar / m)(gammadot P_t dt + gamma sqrt(nu kT / 2) dB I)

    both on the guarded subspace; both scale as O(dt^(3/2)).
    """
    x_t, p_t = state_before.X, state_before.P
    dq = inc.dQ
    defect_a = _spectral_norm(_guard_block(p_t @ dq - dq @ p_t, guard))

    g = gamma(params, state_before.t)
    gdot = -(params.nu / params.m) * g
    n = state_before.dim
    target = (2j * params.hbar / params.m) * (
        gdot * p_t * inc.dt
        + g * math.sqrt(params.nu * params.kT / 2.0) * inc.dB * np.eye(n)
    )
    defect_b = _spectral_norm(_guard_block(x_t @ dq - dq @ x_t - target, guard))
    return defect_a, defect_b


def ito_force_heat_increment(
    state_before: OperatorState,
    inc: StepIncrements,
    params: PhysicalParams,
) -> np.ndarray:
    """Heat increment with the dissipative force taken at the step's start
    (Ito evaluation) instead of the midpoint average.

    Converting between this form and the midpoint form drops terms of
    O(dt^(3/2)); the first-law defect built with this increment therefore
    exposes exactly that order, where the production (midpoint) bookkeeping
    is superconvergent.
    """
    n = state_before.dim
    f_ito = -(params.nu / params.m) * state_before.P + math.sqrt(
        2.0 * params.nu * params.kT
    ) * (inc.dB / inc.dt) * np.eye(n)
    return heat_increment(inc.dX, f_ito)


# ---------------------------------------------------------------------------
# batched ensemble machinery


def _matvec(op: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", op, v)


def _expect(op_times_psi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Re <psi| (op psi)> over the batch."""
    return np.real(np.einsum("i,...i->...", psi.conj(), op_times_psi))


def _norm_sq(v: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("...i,...i->...", v.conj(), v))


def _observe(
    name: str,
    x: np.ndarray,
    p: np.ndarray,
    q: np.ndarray | None,
    w: np.ndarray | None,
    psi: np.ndarray,
    params: PhysicalParams,
    spec: PotentialSpec,
    lam: float,
) -> np.ndarray:
    """Per-path expectation values, all via matrix-vector products (second
    moments use hermiticity: <A^2> = |A psi|^2)."""
    batch = x.shape[:-2]
    if name == "one":
        return np.full(batch, _norm_sq(psi))
    if name == "x":
        return _expect(_matvec(x, psi), psi)
    if name == "p":
        return _expect(_matvec(p, psi), psi)
    if name == "x2":
        return _norm_sq(_matvec(x, psi))
    if name == "p2":
        return _norm_sq(_matvec(p, psi))
    if name == "H":
        kin = _norm_sq(_matvec(p, psi)) / (2 * params.m)
        coeffs = np.trim_zeros(spec.effective_coefficients(lam), "b")
        pot = np.full(batch, coeffs[0] if len(coeffs) else 0.0)
        vec = psi
        for k in range(1, len(coeffs)):
            vec = _matvec(x, vec)
            if coeffs[k] != 0.0:
                pot = pot + coeffs[k] * _expect(vec, psi)
        return kin + pot
    if name == "Q":
        return _expect(_matvec(q, psi), psi)
    if name == "W":
        return _expect(_matvec(w, psi), psi)
    raise ValueError(f"unknown observable {name!r}")


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    per_path: dict[str, np.ndarray] = field(default_factory=dict)
    commutator_defect: np.ndarray | None = None
    leak_max: float = 0.0
    final: dict[str, np.ndarray] = field(default_factory=dict)


def run_ensemble(
    basis: BasisSpec,
    params: PhysicalParams,
    spec: PotentialSpec,
    schedule: Schedule,
    packet: InitialWavepacket,
    m_paths: int,
    seed: int,
    dt: float,
    t_end: float,
    sample_times=None,
    observables: tuple[str, ...] = ("x", "p", "x2", "p2", "H"),
    track_heat: bool = True,
    guard: int = DEFAULT_GUARD,
    leak_tol: float = 1e-6,
    check_stride: int = 100,
    workers: int = 1,
    keep_per_path: bool = False,
    keep_final: bool = False,
    track_commutator: bool = False,
) -> EnsembleResult:
    """Evolve m_paths independent trajectories and return double-expectation
    time series <<A>> = <psi0| E[A] |psi0> with standard errors.

    Trajectories are partitioned into fixed-size blocks; workers only choose
    which thread runs a block, and the reduction is in block order, so the
    result is bitwise independent of the worker count.
    """
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer number of steps")
    if sample_times is None:
        sample_times = [0.0, t_end]
    sample_steps = sorted(set(int(round(s / dt)) for s in sample_times))
    if any(abs(k * dt - s) > 1e-9 for k, s in zip(sample_steps, sorted(set(sample_times)))):
        raise ValueError("sample times must lie on the step grid")
    times = np.array([k * dt for k in sample_steps])

    psi0 = packet.to_vector(basis, params, guard=guard)
    x0, p0 = basis.operators(params)
    obs = tuple(observables) + (("Q", "W") if track_heat else ())

    blocks = [
        (b0, min(b0 + ENSEMBLE_BLOCK, m_paths)) for b0 in range(0, m_paths, ENSEMBLE_BLOCK)
    ]

    def run_block(lo: int, hi: int):
        m = hi - lo
        x = np.broadcast_to(x0, (m,) + x0.shape).copy()
        p = np.broadcast_to(p0, (m,) + p0.shape).copy()
        q = np.zeros_like(x) if track_heat else None
        w = np.zeros_like(x) if track_heat else None
        noise = ChunkedNoise(seed, m, offset=lo)
        sq = math.sqrt(dt)

        vals = {name: np.empty((m, len(sample_steps))) for name in obs}
        comm = np.zeros(len(sample_steps)) if track_commutator else None
        leak_max = 0.0
        si = 0
        eye = np.eye(basis.n_levels)

        def sample(step_idx: int, col: int) -> None:
            lam_s = schedule.value(step_idx * dt)
            for name in obs:
                vals[name][:, col] = _observe(name, x, p, q, w, psi0, params, spec, lam_s)
            if track_commutator:
                c = x @ p - p @ x
                tgt = 1j * params.hbar * gamma(params, step_idx * dt) * eye
                comm[col] = float(
                    np.max(np.linalg.norm(_guard_block(c - tgt, guard), ord=2, axis=(-2, -1)))
                ) / params.hbar

        if sample_steps[0] == 0:
            sample(0, 0)
            si = 1
        for k in range(n_steps):
            t = k * dt
            db = noise.next_step() * sq
            lam, lam_next = schedule.value(t), schedule.value(t + dt)
            x, p, dx, dp, f_mid, dq, dw = _heun_step(
                x, p, params, spec, lam, lam_next, db, dt,
                track_heat=track_heat, track_work=track_heat,
            )
            if track_heat:
                q += dq
                if dw is not None:
                    w += dw
            if (k + 1) % check_stride == 0 or k + 1 == n_steps:
                leak_max = max(leak_max, _leak(x, p, psi0, guard))
                if leak_max > leak_tol:
                    raise NumericalAbort(
                        f"guard-level leakage {leak_max:.2e} > {leak_tol:g} at t={t + dt:g}"
                    )
            if si < len(sample_steps) and k + 1 == sample_steps[si]:
                sample(k + 1, si)
                si += 1
        out_final = {}
        if keep_final:
            out_final = {"X": x, "P": p}
            if track_heat:
                out_final.update({"Q": q, "W": w, "dQ_last": dq, "dB_last": db})
        return vals, comm, leak_max, out_final

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda b: run_block(*b), blocks))
    else:
        results = [run_block(*b) for b in blocks]

    per_path = {
        name: np.concatenate([r[0][name] for r in results], axis=0) for name in obs
    }
    mean = {name: per_path[name].mean(axis=0) for name in obs}
    stderr = {
        name: per_path[name].std(axis=0, ddof=1) / math.sqrt(m_paths) for name in obs
    }
    comm = None
    if track_commutator:
        comm = np.max(np.stack([r[1] for r in results]), axis=0)
    leak = max(r[2] for r in results)
    final: dict[str, np.ndarray] = {}
    if keep_final:
        final = {
            key: np.concatenate([r[3][key] for r in results], axis=0)
            for key in results[0][3]
        }
    return EnsembleResult(
        times=times,
        mean=mean,
        stderr=stderr,
        per_path=per_path if keep_per_path else {},
        commutator_defect=comm,
        leak_max=leak,
        final=final,
    )


def ensemble_expectation(
    basis: BasisSpec,
    params: PhysicalParams,
    spec: PotentialSpec,
    schedule: Schedule,
    packet: InitialWavepacket,
    observable: str,
    m_paths: int,
    seed: int,
    dt: float,
    t_end: float,
    sample_times=None,
    **kwargs,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, mean, stderr) of one named observable over the ensemble."""
    res = run_ensemble(
        basis, params, spec, schedule, packet, m_paths, seed, dt, t_end,
        sample_times=sample_times, observables=(observable,),
        track_heat=observable in ("Q", "W"), **kwargs,
    )
    return res.times, res.mean[observable], res.stderr[observable]


def uncertainty_check(
    x: np.ndarray,
    p: np.ndarray,
    dq_last: np.ndarray,
    psi0: np.ndarray,
    params: PhysicalParams,
    t: float,
    dt: float,
) -> tuple[float, float]:
    """Both sides of the measurement restriction at finite step size:

        (Delta x) (Delta dQ/dt)  >=  (hbar/m) |gammadot <<p>>|

    evaluated with the discrete heat-rate operator dQ/dt over the ensemble
    arrays of the last step.
    """
    a = dq_last / dt
    xv = _matvec(x, psi0)
    x_mean = _expect(xv, psi0)
    x2_mean = _norm_sq(xv)
    av = _matvec(a, psi0)
    a_mean = _expect(av, psi0)
    a2_mean = _norm_sq(av)
    p_mean = _expect(_matvec(p, psi0), psi0)

    var_x = float(np.mean(x2_mean) - np.mean(x_mean) ** 2)
    var_a = float(np.mean(a2_mean) - np.mean(a_mean) ** 2)
    lhs = math.sqrt(max(var_x, 0.0)) * math.sqrt(max(var_a, 0.0))
    gdot = -(params.nu / params.m) * gamma(params, t)
    rhs = (params.hbar / params.m) * abs(gdot * float(np.mean(p_mean)))
    return lhs, rhs
