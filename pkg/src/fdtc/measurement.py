"""Dispersive readout metrics and Lindblad qubit-reset simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .circuits import (
    CouplingParams,
    DtcParams,
    FluxoniumParams,
    ResonatorParams,
    fluxonium_hamiltonian,
    qubit_resonator_hamiltonian,
)
from .noise import NoiseEnvironment, purcell_rate, shot_noise_dephasing
from .operators import canonical_eigh, charge_operator
from .spectra import InfeasibleDesignError


class MeasurementError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReadoutMetrics:
    """Dispersive-readout figures for the 0/1 subspace."""

    chi2_mhz: float          # |2 chi| / 2 pi in MHz
    n_crit: float
    snr_ratio: float         # |2 chi| / kappa
    purcell_plasmon_per_us: float

    def __post_init__(self):
        if min(self.chi2_mhz, self.n_crit, self.snr_ratio) < 0:
            raise MeasurementError("readout metrics must be non-negative")


@dataclass(frozen=True)
class ResetOutcome:
    times_ns: np.ndarray
    fidelity_trace: np.ndarray
    t_reset_ns: float        # settled crossing of the threshold (inf if never)
    F_reset: float           # final ground-state population
    threshold: float
    flux_window_rad: Optional[float] = None


# ---------------------------------------------------------------------------
# dispersive readout
# ---------------------------------------------------------------------------

def _dressed_level_energies(
    q: FluxoniumParams,
    r: ResonatorParams,
    include_dtc: Optional[DtcParams],
    levels: tuple[int, ...],
    K_q: int,
    coupling: Optional[CouplingParams] = None,
) -> dict:
    system = qubit_resonator_hamiltonian(q, r, include_dtc=include_dtc, K_q=K_q,
                                         coupling=coupling)
    evals, vecs = canonical_eigh(system.hamiltonian)
    evals = evals - evals[0]
    overlap = np.abs(vecs) ** 2
    dims = system.dims
    out = {}
    for ql in levels:
        for nph in (0, 1):
            idx = (ql, 0, nph) if include_dtc is not None else (ql, nph)
            b = np.ravel_multi_index(idx, dims)
            k = int(np.argmax(overlap[b, :]))
            if overlap[b, k] < 0.5:
                f_near = evals[k]
                raise MeasurementError(
                    f"dressed state |q={ql}, n={nph}> is not resolvable: the "
                    f"resonator collides with a qubit transition near "
                    f"{f_near:.4f} GHz (max overlap {overlap[b, k]:.2f})"
                )
            out[(ql, nph)] = float(evals[k])
    return out


def dispersive_shift(
    q: FluxoniumParams,
    r: ResonatorParams,
    include_dtc: Optional[DtcParams] = None,
    levels: tuple[int, int] = (0, 1),
    K_q: int = 6,
    coupling: Optional[CouplingParams] = None,
) -> float:
    """Full dispersive shift 2*chi between two qubit levels, in GHz (signed).

    2 chi = [E(l,1) - E(l,0)] - [E(k,1) - E(k,0)] from exact diagonalization
    of the qubit-resonator composite with dressed-label differences.
    """
    k, l = levels
    E = _dressed_level_energies(q, r, include_dtc, (k, l), K_q, coupling)
    return (E[(l, 1)] - E[(l, 0)]) - (E[(k, 1)] - E[(k, 0)])


def critical_photon_number(
    q: FluxoniumParams,
    r: ResonatorParams,
    transitions: tuple[tuple[int, int], ...] = ((0, 3), (1, 4)),
    dim: int = 60,
    cap: float = 1e6,
) -> float:
    """n_crit = min over contributing transitions of Delta^2 / (4 g_t^2).

    g_t dresses the bare resonator coupling with the fluxonium charge
    matrix element of each transition.  A vanishing coupling reports the
    ``cap`` sentinel.
    """
    H = fluxonium_hamiltonian(q, dim)
    evals, vecs = canonical_eigh(H.values)
    n_op = charge_operator(H.basis).values
    best = cap
    for k, l in transitions:
        f_kl = float(evals[l] - evals[k])
        g_t = r.g_r * abs(vecs[:, k].conj() @ n_op @ vecs[:, l])
        if g_t <= 0:
            continue
        n_c = (f_kl - r.omega_r) ** 2 / (4 * g_t ** 2)
        best = min(best, n_c)
    return best


def snr_condition(two_chi: float, omega_r: float, Q: float) -> float:
    """|2 chi| / kappa with kappa = omega_r / Q (same frequency units)."""
    return abs(two_chi) / (omega_r / Q)


def readout_metrics(
    q: FluxoniumParams,
    r: ResonatorParams,
    include_dtc: Optional[DtcParams] = None,
) -> ReadoutMetrics:
    """Aggregate dispersive metrics at one (omega_r, g_r, Q) point."""
    two_chi = dispersive_shift(q, r, include_dtc=include_dtc)
    n_crit = critical_photon_number(q, r)
    H = fluxonium_hamiltonian(q)
    evals, vecs = canonical_eigh(H.values)
    n_op = charge_operator(H.basis).values
    f12 = float(evals[2] - evals[1])
    g12 = r.g_r * abs(vecs[:, 1].conj() @ n_op @ vecs[:, 2])
    purcell = purcell_rate(f12 - r.omega_r, g12, r.kappa)
    return ReadoutMetrics(
        chi2_mhz=abs(two_chi) * 1e3,
        n_crit=n_crit,
        snr_ratio=snr_condition(two_chi, r.omega_r, r.Q),
        purcell_plasmon_per_us=purcell,
    )


def plasmon_resonator_coherence(
    q: FluxoniumParams,
    r: ResonatorParams,
    env: NoiseEnvironment,
) -> tuple[float, float]:
    """(T1_Purcell, T_phi_shot) in us for the plasmon 1-2 transition.

    Purcell uses the matrix-element-dressed coupling; shot noise uses the
    exact-diagonalization dispersive shift between levels 1 and 2.
    """
    H = fluxonium_hamiltonian(q)
    evals, vecs = canonical_eigh(H.values)
    n_op = charge_operator(H.basis).values
    f12 = float(evals[2] - evals[1])
    g12 = r.g_r * abs(vecs[:, 1].conj() @ n_op @ vecs[:, 2])
    gamma_p = purcell_rate(f12 - r.omega_r, g12, r.kappa)
    chi = 0.5 * dispersive_shift(q, r, levels=(1, 2))
    gamma_s = shot_noise_dephasing(chi, r.kappa, r.omega_r, env)
    t1 = 1.0 / gamma_p if gamma_p > 0 else math.inf
    tphi = 1.0 / gamma_s if gamma_s > 0 else math.inf
    return t1, tphi


# ---------------------------------------------------------------------------
# reset
# ---------------------------------------------------------------------------

def reset_resonance_flux(
    q: FluxoniumParams, omega_target: float, dim: int = 60
) -> float:
    """Qubit flux in (0, pi) where f_01 equals the reset-resonator frequency."""
    def f01(phi):
        evals = np.linalg.eigvalsh(fluxonium_hamiltonian(q.at_flux(phi), dim).values)
        return float(evals[1] - evals[0])

    lo, hi = 0.05, math.pi - 0.02
    f_lo, f_hi = f01(lo), f01(hi)
    if not (min(f_lo, f_hi) <= omega_target <= max(f_lo, f_hi)):
        raise InfeasibleDesignError(
            f"f_01 never reaches {omega_target} GHz inside (0, pi): "
            f"range is ({min(f_lo, f_hi):.3f}, {max(f_lo, f_hi):.3f})"
        )
    return brentq(lambda p: f01(p) - omega_target, lo, hi, xtol=1e-10)


def _lindblad_trace(
    H: np.ndarray,
    collapse: np.ndarray,
    rho0: np.ndarray,
    projector: np.ndarray,
    times: np.ndarray,
    rtol: float,
) -> np.ndarray:
    """Integrate d rho/dt = -i[2 pi H, rho] + D[L] rho and trace a projector."""
    dim = H.shape[0]
    H2p = 2 * math.pi * H
    L = collapse
    Ld = L.conj().T
    LdL = Ld @ L

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        drho = -1j * (H2p @ rho - rho @ H2p)
        drho += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return drho.ravel()

    sol = solve_ivp(rhs, (times[0], times[-1]), rho0.ravel().astype(complex),
                    t_eval=times, rtol=rtol, atol=rtol * 1e-2, method="RK45")
    if not sol.success:
        raise MeasurementError(f"reset integration failed: {sol.message}")
    out = np.empty(len(times))
    for i in range(len(times)):
        rho = sol.y[:, i].reshape(dim, dim)
        out[i] = float(np.real(np.trace(projector @ rho)))
    final = sol.y[:, -1].reshape(dim, dim)
    _validate_density_matrix(final)
    return out


def _validate_density_matrix(rho: np.ndarray, tol: float = 1e-6):
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-5:
        raise MeasurementError(f"density matrix trace drifted to {tr:.8f}")
    if np.linalg.norm(rho - rho.conj().T) > tol * max(np.linalg.norm(rho), 1.0):
        raise MeasurementError("density matrix lost Hermiticity")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -1e-6:
        raise MeasurementError("density matrix developed negative population")


def reset_simulation(
    q: FluxoniumParams,
    reset_r: ResonatorParams,
    t_max_ns: float = 400.0,
    flux_offset: float = 0.0,
    include_dtc: Optional[DtcParams] = None,
    coupling: Optional[CouplingParams] = None,
    threshold: float = 0.99,
    K_q: int = 5,
    fock_dim: int = 4,
    K_dtc: int = 2,
    n_times: int = 81,
    rtol: float = 1e-8,
    kappa_override: Optional[float] = None,
) -> ResetOutcome:
    """Lindblad reset: bias f_01 into resonance with the reset resonator and
    let the photon decay drain the excitation.

    Starts from the bare |1> qubit state with the resonator in vacuum; the
    reported fidelity is the dressed-ground-state population.  ``t_reset``
    is the settled threshold crossing: the earliest grid time after which
    the trace never falls below the threshold.  The coupler (held at its
    own flux, typically turn-off) can be included with ``K_dtc`` levels.
    """
    phi_res = reset_resonance_flux(q, reset_r.omega_r)
    q_biased = q.at_flux(phi_res + flux_offset)
    if reset_r.fock_dim != fock_dim:
        reset_r = ResonatorParams(reset_r.omega_r, reset_r.g_r, reset_r.Q,
                                  reset_r.alpha, fock_dim)
    if include_dtc is not None:
        system = qubit_resonator_hamiltonian(
            q_biased, reset_r, include_dtc=include_dtc, K_q=K_q, K_c=K_dtc,
            coupling=coupling,
        )
        init_index = np.ravel_multi_index((1, 0, 0), system.dims)
    else:
        system = qubit_resonator_hamiltonian(q_biased, reset_r, K_q=K_q)
        init_index = np.ravel_multi_index((1, 0), system.dims)

    H = system.hamiltonian
    dim = H.shape[0]
    kappa = kappa_override if kappa_override is not None else 2 * math.pi * reset_r.kappa
    collapse = math.sqrt(kappa) * system.operators["a"]
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[init_index, init_index] = 1.0
    evals, vecs = canonical_eigh(H)
    ground = vecs[:, 0]
    projector = np.outer(ground, ground.conj())
    times = np.linspace(0.0, t_max_ns, n_times)
    trace = _lindblad_trace(H, collapse, rho0, projector, times, rtol)
    below = np.where(trace < threshold)[0]
    if len(below) == 0:
        t_settled = float(times[0])
    elif below[-1] + 1 < len(times):
        t_settled = float(times[below[-1] + 1])
    else:
        t_settled = math.inf
    return ResetOutcome(
        times_ns=times,
        fidelity_trace=trace,
        t_reset_ns=t_settled,
        F_reset=float(trace[-1]),
        threshold=threshold,
    )


def reset_flux_window(
    q: FluxoniumParams,
    reset_r: ResonatorParams,
    threshold: float = 0.99,
    t_eval_ns: float = 300.0,
    search_max: float = 0.2,
    xtol: float = 1e-5,
    **sim_kwargs,
) -> float:
    """Largest symmetric flux offset (rad) keeping F_reset above threshold.

    Bisects on the offset magnitude, requiring both signs to pass; raises
    if the threshold is not met at zero offset (infeasible reset design).
    """
    def passes(delta: float) -> bool:
        for sign in (+1.0, -1.0):
            out = reset_simulation(q, reset_r, t_max_ns=t_eval_ns,
                                   flux_offset=sign * delta,
                                   threshold=threshold, **sim_kwargs)
            if out.F_reset < threshold:
                return False
        return True

    if threshold <= 0:
        return search_max
    if not passes(0.0):
        raise InfeasibleDesignError(
            f"reset fidelity below {threshold} even at zero flux offset"
        )
    if passes(search_max):
        return search_max
    lo, hi = 0.0, search_max
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo
