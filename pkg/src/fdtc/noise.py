"""Coherence-rate estimators: 1/f flux noise, dielectric loss, Purcell decay,
photon shot noise, and the resulting single-qubit gate fidelity.

Conventions
-----------
Rates are returned in 1/us.  Transition frequencies are ordinary
frequencies in GHz (omega/2pi); matrix elements of dH/dPhi are in GHz per
flux quantum.  The 1/f flux spectral density S_Phi(omega) = 2*pi*A^2/omega
with the amplitude A in units of Phi_0 reduces, in these units, to
S(f) = A^2/f with dimension Phi_0^2 * ns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .circuits import (
    CompositeSystem,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    composite_2q,
    fluxonium_flux_derivative,
    fluxonium_hamiltonian,
)
from .operators import canonical_eigh
from .spectra import SpectrumResult, diagonalize_labelled

# h * 1 GHz / (2 k_B), in kelvin: argument of coth is COTH_K * f[GHz] / T[K]
COTH_K = 0.5 * 6.62607015e-25 / 1.380649e-23
NS_TO_US = 1e3  # rates computed in 1/ns, reported in 1/us


class NoiseModelError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseEnvironment:
    """Flux-noise amplitude, dielectric loss-tangent model and temperature.

    ``A_phi`` is the 1/f flux-noise amplitude in units of Phi_0 (e.g.
    3.7e-6 for 3.7 uPhi_0).  The loss tangent follows the power law
    tan_delta(f) = tan_delta_ref * (f/omega_ref)**exponent.  ``T_eff``
    enters the thermal factors; the packaged default of 8 mK reproduces
    the reference coherence landscapes (see README) and is echoed in every
    report.
    """

    A_phi: float = 3.7e-6
    tan_delta_ref: float = 4.0e-6
    tan_delta_exponent: float = 0.26
    omega_ref: float = 6.0
    T_eff: float = 0.008

    def __post_init__(self):
        if min(self.A_phi, self.tan_delta_ref, self.omega_ref) <= 0 or self.T_eff < 0:
            raise NoiseModelError("noise environment parameters must be positive")

    def tan_delta(self, f: float) -> float:
        return self.tan_delta_ref * (abs(f) / self.omega_ref) ** self.tan_delta_exponent

    def s_phi(self, f: float) -> float:
        """1/f flux spectral density at |f| GHz, in Phi_0^2 * ns."""
        if f == 0:
            raise NoiseModelError("1/f spectral density diverges at zero frequency")
        return self.A_phi ** 2 / abs(f)

    def coth_factor(self, f: float) -> float:
        """coth(h f / 2 k_B T); equals 1 in the zero-temperature limit."""
        if self.T_eff == 0:
            return 1.0
        return 1.0 / math.tanh(COTH_K * abs(f) / self.T_eff)

    def nbar(self, f: float) -> float:
        """Thermal photon number of a mode at f GHz."""
        if self.T_eff == 0:
            return 0.0
        return 1.0 / math.expm1(2 * COTH_K * abs(f) / self.T_eff)


@dataclass(frozen=True)
class RateReport:
    """One decoherence channel for one transition, rate in 1/us."""

    channel: str
    rate: float
    transition: tuple = ()

    def __post_init__(self):
        if self.rate < -1e-15:
            raise NoiseModelError(f"negative rate in channel {self.channel}")


# ---------------------------------------------------------------------------
# generic and specialized rates
# ---------------------------------------------------------------------------

def relaxation_rate_generic(
    dh_element: float,
    f_kl: float,
    spectral_density: Callable[[float], float],
) -> float:
    """Depolarization rate (2/hbar^2) |<k|dH/dl|l>|^2 S_l(omega_kl), 1/us.

    ``dh_element`` is the matrix element of the Hamiltonian derivative in
    GHz per noise-parameter unit; ``spectral_density(f)`` must return
    (noise unit)^2 * ns at ordinary frequency f GHz.
    """
    if f_kl == 0:
        raise NoiseModelError("relaxation rate undefined at zero transition frequency")
    gamma_ns = 8 * math.pi ** 2 * abs(dh_element) ** 2 * spectral_density(f_kl)
    return gamma_ns * NS_TO_US


def flux_relaxation_fluxonium(
    E_L: float, phi_element: float, f_kl: float, env: NoiseEnvironment
) -> float:
    """1/f flux-noise relaxation: 8 (pi E_L / hbar Phi_0)^2 |phi_kl|^2 S(f)."""
    gamma_ns = 32 * math.pi ** 4 * E_L ** 2 * env.A_phi ** 2 * abs(phi_element) ** 2 / abs(f_kl)
    return gamma_ns * NS_TO_US


def dephasing_rates_1f(
    domega_dphi: float, d2omega_dphi2: float, A: float
) -> tuple[float, float]:
    """First- and second-order 1/f dephasing rates in 1/us.

    Derivatives are of the ordinary transition frequency (GHz) with respect
    to the reduced flux (rad); A is the flux-noise amplitude in Phi_0.
    """
    g1 = (2 * math.pi) ** 2 * A * abs(domega_dphi)
    g2 = (2 * math.pi) ** 3 * A ** 2 * abs(d2omega_dphi2)
    return g1 * NS_TO_US, g2 * NS_TO_US


def dielectric_rate_fluxonium(
    E_C: float, phi_element: float, f_kl: float, env: NoiseEnvironment
) -> float:
    """Dielectric loss (1/4E_C)|phi_kl|^2 hbar w^2 tan_delta coth(hw/2kT)."""
    gamma_ns = (
        math.pi * f_kl ** 2 / (2 * E_C)
        * abs(phi_element) ** 2
        * env.tan_delta(f_kl)
        * env.coth_factor(f_kl)
    )
    return gamma_ns * NS_TO_US


def dielectric_rate_dtc(
    p: DtcParams, phi_d_element: float, f_kl: float, env: NoiseEnvironment
) -> float:
    """Differential-mode dielectric loss of the coupler.

    Uses the effective capacitance C_eff = (C1+C2)/2 + 2*C12 expressed as a
    charging energy; ``phi_d_element`` is the matrix element of the
    differential phase (phi1 - phi2)/2.
    """
    e_eff = p.differential_mode_charging_energy()
    gamma_ns = (
        math.pi * f_kl ** 2 / (4 * e_eff)
        * abs(phi_d_element) ** 2
        * env.tan_delta(f_kl)
        * env.coth_factor(f_kl)
    )
    return gamma_ns * NS_TO_US


def dtc_flux_relaxation(
    p: DtcParams,
    dh_element: float,
    f_kl: float,
    env: NoiseEnvironment,
) -> float:
    """Coupler-loop 1/f flux-noise relaxation via the generic formula.

    ``dh_element`` is a matrix element of ``dtc_flux_derivative`` (GHz per
    flux quantum), typically taken between dressed composite states.
    """
    return relaxation_rate_generic(dh_element, f_kl, env.s_phi)


def purcell_rate(delta: float, g: float, kappa: float) -> float:
    """Purcell decay through a lossy resonator, 1/us.

    All inputs are ordinary frequencies in GHz: detuning delta = f_kl - f_r,
    coupling g (already dressed by the charge matrix element), linewidth
    kappa = f_r/Q.  Closed form; exact at resonance and in the dispersive
    limit kappa g^2/delta^2.
    """
    A = delta ** 2 + 4 * g ** 2 - kappa ** 2 / 4
    inner = math.sqrt(A * A + (kappa * delta) ** 2)
    gamma_f = kappa / 2 - math.sqrt(2) / 2 * math.sqrt(max(inner - A, 0.0))
    return 2 * math.pi * max(gamma_f, 0.0) * NS_TO_US


def shot_noise_dephasing(
    chi: float, kappa: float, omega_r: float, env: NoiseEnvironment
) -> float:
    """Thermal-photon dephasing of an undriven resonator, 1/us.

    Gamma = eta * 4 chi^2 nbar / kappa with eta = kappa^2/(kappa^2+4chi^2);
    chi and kappa in GHz.
    """
    if kappa <= 0:
        raise NoiseModelError("kappa must be positive")
    eta = kappa ** 2 / (kappa ** 2 + 4 * chi ** 2)
    nbar = env.nbar(omega_r)
    return 2 * math.pi * eta * 4 * chi ** 2 * nbar / kappa * NS_TO_US


def single_qubit_fidelity(T1_us: float, Tphi_us: float, t_g_ns: float) -> float:
    """Average gate fidelity 1 - [t/(3 T1) + (t/T_phi)^2 / 3]."""
    if T1_us <= 0 or Tphi_us <= 0 or t_g_ns < 0:
        raise NoiseModelError("times must be positive")
    t = t_g_ns / 1e3
    return 1.0 - (t / (3.0 * T1_us) + (t / Tphi_us) ** 2 / 3.0)


# ---------------------------------------------------------------------------
# single-fluxonium coherence summary (used by the landscape sweep)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoherenceSummary:
    T1_dielectric_us: float
    T1_flux_us: float
    Tphi_flux_us: float
    F_1q: float


def _fluxonium_f01_vs_flux(p: FluxoniumParams, dim: int) -> Callable[[float], float]:
    def f01(phi):
        evals = np.linalg.eigvalsh(fluxonium_hamiltonian(p.at_flux(phi), dim).values)
        return float(evals[1] - evals[0])
    return f01


def flux_derivatives(
    f: Callable[[float], float], x0: float, step: float = 1e-4
) -> tuple[float, float]:
    """Central first/second derivatives with one Richardson refinement."""
    def d1(h):
        return (f(x0 + h) - f(x0 - h)) / (2 * h)

    def d2(h, f0):
        return (f(x0 + h) - 2 * f0 + f(x0 - h)) / h ** 2

    f0 = f(x0)
    first = (4 * d1(step / 2) - d1(step)) / 3
    second = (4 * d2(step / 2, f0) - d2(step, f0)) / 3
    return first, second


def fluxonium_coherence(
    p: FluxoniumParams,
    env: NoiseEnvironment,
    t_g_ns: float = 50.0,
    dim: int = 60,
    levels: tuple[int, int] = (0, 1),
) -> CoherenceSummary:
    """Dielectric and flux-noise limited coherence of a single fluxonium.

    T1 combines nothing across channels here; the reported fidelity uses
    1/T1 = sum of the two relaxation channels and T_phi from the combined
    first- plus second-order 1/f dephasing of the qubit transition.
    """
    k, l = levels
    H = fluxonium_hamiltonian(p, dim)
    evals, vecs = canonical_eigh(H.values)
    from .operators import phase_operator
    phi_op = phase_operator(H.basis).values
    phi_kl = abs(vecs[:, k].conj() @ phi_op @ vecs[:, l])
    f_kl = float(evals[l] - evals[k])
    g_diel = dielectric_rate_fluxonium(p.E_C, phi_kl, f_kl, env)
    g_flux = flux_relaxation_fluxonium(p.E_L, phi_kl, f_kl, env)
    f01 = _fluxonium_f01_vs_flux(p, dim)
    d1, d2 = flux_derivatives(f01, p.phi_ext)
    g1, g2 = dephasing_rates_1f(d1, d2, env.A_phi)
    T1 = 1.0 / (g_diel + g_flux)
    Tphi = 1.0 / (g1 + g2)
    return CoherenceSummary(
        T1_dielectric_us=1.0 / g_diel if g_diel > 0 else math.inf,
        T1_flux_us=1.0 / g_flux if g_flux > 0 else math.inf,
        Tphi_flux_us=Tphi,
        F_1q=single_qubit_fidelity(T1, Tphi, t_g_ns),
    )


# ---------------------------------------------------------------------------
# composite-system rates (dressed states, embedded local operators)
# ---------------------------------------------------------------------------

def composite_rates(
    ps: ParameterSet,
    transition: tuple[Sequence[int], Sequence[int]],
    env: NoiseEnvironment,
    system: Optional[CompositeSystem] = None,
    spectrum: Optional[SpectrumResult] = None,
    K_q: int = 8,
    K_c: int = 6,
) -> list[RateReport]:
    """All relaxation channels for one dressed transition of the 2q composite.

    The bare-channel formulas are evaluated with matrix elements of the
    embedded local operators between dressed eigenstates.
    """
    if system is None:
        system = composite_2q(ps, K_q=K_q, K_c=K_c)
    needed = ["phi_q1", "phi_q2", "dH_q1", "dH_q2", "dH_c", "sin_phi_d_c"]
    if spectrum is None:
        spectrum = diagonalize_labelled(system, operators={k: system.operators[k] for k in needed})
    lo, hi = transition
    k, l = spectrum.index_of(lo), spectrum.index_of(hi)
    f_kl = float(spectrum.energies[l] - spectrum.energies[k])
    mel = {name: abs(spectrum.matrix_elements[name][k, l]) for name in needed}
    reports = [
        RateReport("dielectric-q1",
                   dielectric_rate_fluxonium(ps.qubits[0].E_C, mel["phi_q1"], f_kl, env),
                   (tuple(lo), tuple(hi))),
        RateReport("dielectric-q2",
                   dielectric_rate_fluxonium(ps.qubits[1].E_C, mel["phi_q2"], f_kl, env),
                   (tuple(lo), tuple(hi))),
        RateReport("dielectric-dtc",
                   dielectric_rate_dtc(ps.couplers[0], mel["sin_phi_d_c"] / 2.0, f_kl, env),
                   (tuple(lo), tuple(hi))),
        RateReport("flux-relax-q1",
                   relaxation_rate_generic(mel["dH_q1"], f_kl, env.s_phi),
                   (tuple(lo), tuple(hi))),
        RateReport("flux-relax-q2",
                   relaxation_rate_generic(mel["dH_q2"], f_kl, env.s_phi),
                   (tuple(lo), tuple(hi))),
        RateReport("flux-relax-dtc",
                   relaxation_rate_generic(mel["dH_c"], f_kl, env.s_phi),
                   (tuple(lo), tuple(hi))),
    ]
    return reports


def total_state_relaxation(
    ps: ParameterSet,
    state: Sequence[int],
    env: NoiseEnvironment,
    system: Optional[CompositeSystem] = None,
    spectrum: Optional[SpectrumResult] = None,
    K_q: int = 8,
    K_c: int = 6,
) -> float:
    """Total decay rate of a dressed state: all channels, all lower states."""
    if system is None:
        system = composite_2q(ps, K_q=K_q, K_c=K_c)
    needed = ["phi_q1", "phi_q2", "dH_q1", "dH_q2", "dH_c", "sin_phi_d_c"]
    if spectrum is None:
        spectrum = diagonalize_labelled(system, operators={k: system.operators[k] for k in needed})
    i_state = spectrum.index_of(state)
    total = 0.0
    for j in range(i_state):
        f_kl = float(spectrum.energies[i_state] - spectrum.energies[j])
        if f_kl < 1e-9:
            continue
        mel = {name: abs(spectrum.matrix_elements[name][j, i_state]) for name in needed}
        total += dielectric_rate_fluxonium(ps.qubits[0].E_C, mel["phi_q1"], f_kl, env)
        total += dielectric_rate_fluxonium(ps.qubits[1].E_C, mel["phi_q2"], f_kl, env)
        total += dielectric_rate_dtc(ps.couplers[0], mel["sin_phi_d_c"] / 2.0, f_kl, env)
        total += relaxation_rate_generic(mel["dH_q1"], f_kl, env.s_phi)
        total += relaxation_rate_generic(mel["dH_q2"], f_kl, env.s_phi)
        total += relaxation_rate_generic(mel["dH_c"], f_kl, env.s_phi)
    return total


def composite_dephasing_matrix(
    ps: ParameterSet,
    states: Sequence[Sequence[int]],
    env: NoiseEnvironment,
    K_q: int = 8,
    K_c: int = 6,
    step: float = 1e-4,
) -> np.ndarray:
    """Pairwise 1/f dephasing rates Gamma_phi[k,l] (1/us) among dressed states.

    Transition-frequency derivatives are taken against each of the three
    loop fluxes (both qubits and the coupler) by Richardson-refined central
    differences; first- and second-order contributions add.
    """
    states = [tuple(s) for s in states]

    def energies_at(dq1=0.0, dq2=0.0, dc=0.0) -> np.ndarray:
        q1 = ps.qubits[0].at_flux(ps.qubits[0].phi_ext + dq1)
        q2 = ps.qubits[1].at_flux(ps.qubits[1].phi_ext + dq2)
        c = ps.couplers[0].at_flux(ps.couplers[0].phi_ext + dc)
        varied = ParameterSet(qubits=(q1, q2), couplers=(c,), couplings=ps.couplings)
        spec = diagonalize_labelled(composite_2q(varied, K_q=K_q, K_c=K_c))
        return np.array([spec.energy_of(s) for s in states])

    e0 = energies_at()
    n = len(states)
    gamma = np.zeros((n, n))
    for knob in ("q1", "q2", "c"):
        samples = {}
        for h in (step, step / 2, -step, -step / 2):
            kw = {"dq1": 0.0, "dq2": 0.0, "dc": 0.0}
            kw["d" + knob] = h
            samples[h] = energies_at(**kw)
        d1_h = (samples[step] - samples[-step]) / (2 * step)
        d1_h2 = (samples[step / 2] - samples[-step / 2]) / step
        d1 = (4 * d1_h2 - d1_h) / 3
        d2_h = (samples[step] - 2 * e0 + samples[-step]) / step ** 2
        d2_h2 = (samples[step / 2] - 2 * e0 + samples[-step / 2]) / (step / 2) ** 2
        d2 = (4 * d2_h2 - d2_h) / 3
        for a in range(n):
            for b in range(n):
                if a == b:
                    continue
                g1, g2 = dephasing_rates_1f(d1[b] - d1[a], d2[b] - d2[a], env.A_phi)
                gamma[a, b] += g1 + g2
    return gamma
