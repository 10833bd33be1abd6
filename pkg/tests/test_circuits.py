import math

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from fdtc.circuits import (
    CircuitError,
    CouplingParams,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    ResonatorParams,
    composite_2q,
    composite_3q,
    drive_operator,
    dtc_hamiltonian,
    dtc_ho_hamiltonian,
    dtc_ho_parameters,
    dtc_split_operators,
    fluxonium_hamiltonian,
    qubit_resonator_hamiltonian,
)
from fdtc.config import load_config, packaged_config

REF = load_config(packaged_config("reference.toml"))[0]
Q_TBL = FluxoniumParams(E_C=1.10, E_J=4.65, E_L=0.65)


def spectrum(H, n=10):
    evals = np.linalg.eigvalsh(np.asarray(H.values if hasattr(H, "values") else H))
    return evals[:n] - evals[0]


def fluxonium_phase_grid(p: FluxoniumParams, n_levels=6, span=14.0, npts=4001):
    """Independent oracle: finite-difference discretization on a phase grid."""
    x = np.linspace(p.phi_ext - span, p.phi_ext + span, npts)
    h = x[1] - x[0]
    diag = 8 * p.E_C / h**2 - p.E_J * np.cos(x) + 0.5 * p.E_L * (x - p.phi_ext) ** 2
    off = -4 * p.E_C / h**2 * np.ones(npts - 1)
    evals = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1))[0]
    return evals - evals[0]


def test_fluxonium_harmonic_limit():
    p = FluxoniumParams(E_C=1.2, E_J=1e-12, E_L=0.8, phi_ext=0.0)
    evals = spectrum(fluxonium_hamiltonian(p))
    assert evals[1] == pytest.approx(math.sqrt(8 * 1.2 * 0.8), abs=1e-8)


def test_fluxonium_against_phase_grid_oracle():
    evals_ho = spectrum(fluxonium_hamiltonian(Q_TBL), n=5)
    evals_fd = fluxonium_phase_grid(Q_TBL, n_levels=5)
    assert np.allclose(evals_ho, evals_fd, atol=1e-4)


def test_fluxonium_reference_transitions():
    # plasmon and readout-band transitions of the reference design, frozen
    # from two independent diagonalization routes (HO basis and phase grid)
    evals = spectrum(fluxonium_hamiltonian(Q_TBL), n=5)
    assert evals[1] == pytest.approx(0.276833, abs=2e-5)           # f_01
    assert evals[2] - evals[1] == pytest.approx(4.178115, abs=2e-5)  # f_12
    assert evals[3] == pytest.approx(6.48138, abs=5e-5)            # f_03
    assert evals[4] - evals[1] == pytest.approx(9.48076, abs=5e-5)  # f_14


def test_fluxonium_requires_positive_energies():
    with pytest.raises(CircuitError):
        FluxoniumParams(E_C=1.0, E_J=-1.0, E_L=0.5)


def test_fluxonium_dimension_guard():
    with pytest.raises(CircuitError):
        fluxonium_hamiltonian(Q_TBL, dim=10)


def test_fluxonium_flux_periodicity_and_sweet_spot():
    base = spectrum(fluxonium_hamiltonian(Q_TBL.at_flux(0.3)))
    shifted = spectrum(fluxonium_hamiltonian(Q_TBL.at_flux(0.3 + 2 * math.pi), dim=80))
    assert np.allclose(base[:6], shifted[:6], atol=1e-9)

    def f01(phi):
        e = spectrum(fluxonium_hamiltonian(Q_TBL.at_flux(phi)))
        return e[1]

    d = (f01(math.pi + 1e-5) - f01(math.pi - 1e-5)) / 2e-5
    assert abs(d) < 1e-6


DTC_REF = REF.couplers[0]


def test_dtc_decoupled_limit_is_two_transmons():
    p = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=11.3, E_J2=11.3, E_J12=0.0, J12=0.0,
                  phi_ext=1.1)
    joint = spectrum(dtc_hamiltonian(p, n_max=10), n=6)
    # single transmon (its own flux shift is a gauge, so any phi works)
    single = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=11.3, E_J2=11.3, E_J12=1e-12,
                       J12=0.0, phi_ext=0.0)
    split = dtc_split_operators(single, K=4, n_max=10)
    e1 = split.energies[0]
    pair_sums = sorted(a + b for a in e1[:3] for b in e1[:3])
    assert np.allclose(joint[:6], pair_sums[:6], atol=1e-8)


def test_dtc_flux_periodicity():
    for phi in (0.7, 2.0):
        a = spectrum(dtc_hamiltonian(DTC_REF.at_flux(phi), n_max=8), n=8)
        b = spectrum(dtc_hamiltonian(DTC_REF.at_flux(phi + 2 * math.pi), n_max=8), n=8)
        assert np.allclose(a, b, atol=1e-9)


def test_dtc_sweet_spot_at_pi():
    def tunable(phi):
        return spectrum(dtc_hamiltonian(DTC_REF.at_flux(phi), n_max=8))[1]

    d = (tunable(math.pi + 1e-5) - tunable(math.pi - 1e-5)) / 2e-5
    assert abs(d) < 1e-6


def test_dtc_charge_cutoff_convergence():
    a = spectrum(dtc_hamiltonian(DTC_REF, n_max=8), n=6)
    b = spectrum(dtc_hamiltonian(DTC_REF, n_max=12), n=6)
    assert np.allclose(a, b, atol=1e-7)


def test_dtc_flux_distribution_sums_to_one():
    c1, c2, c12 = DTC_REF.flux_distribution()
    assert c1 + c2 + c12 == pytest.approx(1.0, abs=1e-12)
    assert c12 > c1 > 0


def test_dtc_shared_junction_bound():
    with pytest.raises(CircuitError):
        DtcParams(E_C1=0.3, E_C2=0.3, E_J1=5.0, E_J2=5.0, E_J12=6.0, J12=0.1)


def test_dtc_ho_parameters_turnoff_structure():
    # with J12 = 0, the inductive coupling vanishes exactly at phi = pi/2
    p = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=11.3, E_J2=11.3, E_J12=1.3, J12=0.0,
                  phi_ext=math.pi / 2)
    par = dtc_ho_parameters(p)
    assert par.g_ind == pytest.approx(0.0, abs=1e-15)
    assert par.g_cap == 0.0
    # capacitive coupling is positive for positive mutual capacitance
    import dataclasses
    p2 = dataclasses.replace(p.at_flux(1.0), J12=0.14)
    assert dtc_ho_parameters(p2).g_cap > 0


def test_dtc_ho_matches_exact_small_shared_junction():
    # Two-mode oscillator model against exact diagonalization at phi = pi.
    # The model keeps per-mode quartics only; the shared-junction quartic it
    # drops costs ~4% on the flux-tunable mode at E_J12/E_J ~ 0.12 and under
    # 1% on the flat mode.
    p = load_config(packaged_config("reduced_detuning.toml"))[0].couplers[0]
    exact = spectrum(dtc_hamiltonian(p, n_max=10), n=3)
    ho = spectrum(dtc_ho_hamiltonian(p, dim=10), n=3)
    assert abs(ho[1] - exact[1]) / exact[1] < 0.04
    assert abs(ho[2] - exact[2]) / exact[2] < 0.01


def test_dtc_ho_invalid_flux_combination():
    p = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=1.0, E_J2=1.0, E_J12=1.0, J12=0.0,
                  phi_ext=math.pi / 2)
    with pytest.raises(CircuitError):
        dtc_ho_parameters(p)


def make_2q(J=0.5, gamma=0.35, coupler=None):
    return ParameterSet(
        qubits=(Q_TBL, Q_TBL),
        couplers=(coupler or DTC_REF,),
        couplings=(CouplingParams(J, gamma),),
    )


def test_composite_decoupled_limit():
    ps = make_2q(J=0.0)
    system = composite_2q(ps, K_q=5, K_c=4)
    evals = spectrum(system.hamiltonian, n=12)
    e_q = spectrum(fluxonium_hamiltonian(Q_TBL), n=5)[:5]
    e_c = spectrum(dtc_hamiltonian(DTC_REF), n=4)[:4]
    bare = sorted(float(a + b + c) for a in e_q for b in e_c for c in e_q)
    assert np.allclose(evals, bare[:12], atol=1e-9)


def test_composite_swap_symmetry():
    ps = make_2q()
    e1 = spectrum(composite_2q(ps, K_q=6, K_c=5).hamiltonian, n=10)
    swapped = ParameterSet(qubits=(ps.qubits[1], ps.qubits[0]),
                           couplers=ps.couplers, couplings=ps.couplings)
    e2 = spectrum(composite_2q(swapped, K_q=6, K_c=5).hamiltonian, n=10)
    assert np.allclose(e1, e2, atol=1e-10)


@pytest.mark.slow
def test_composite_truncation_convergence():
    ps = make_2q()
    a = spectrum(composite_2q(ps, K_q=8, K_c=6).hamiltonian, n=12)
    b = spectrum(composite_2q(ps, K_q=12, K_c=9).hamiltonian, n=12)
    assert np.max(np.abs(a - b)) < 1e-5


def test_composite_3q_decoupled_limit():
    ps = ParameterSet(
        qubits=(Q_TBL,) * 3,
        couplers=(DTC_REF, DTC_REF),
        couplings=(CouplingParams(0.0), CouplingParams(0.0)),
    )
    system = composite_3q(ps, K_q=3, K_c=3, K_active=10, dtc_nmax=8)
    evals = spectrum(system.hamiltonian, n=8)
    e_q = spectrum(fluxonium_hamiltonian(Q_TBL), n=3)[:3]
    split = dtc_split_operators(DTC_REF, K=3, n_max=8)
    e_c12 = spectrum(split.hamiltonian(), n=4)
    e_active = system.aux["active_energies"]
    bare = sorted(
        float(a + b + c)
        for a in e_q for b in e_c12[:4] for c in e_active[:8]
    )
    assert np.allclose(evals, bare[:8], atol=1e-9)


def test_qubit_resonator_decoupled():
    r = ResonatorParams(omega_r=7.55, g_r=1e-12, Q=3000.0, fock_dim=4)
    system = qubit_resonator_hamiltonian(Q_TBL, r, K_q=4)
    evals = spectrum(system.hamiltonian, n=8)
    e_q = spectrum(fluxonium_hamiltonian(Q_TBL), n=4)[:4]
    bare = sorted(float(a + 7.55 * n) for a in e_q for n in range(4))
    assert np.allclose(evals, bare[:8], atol=1e-8)


def test_drive_operator_hermitian_and_gamma_zero():
    ps = make_2q(gamma=0.0)
    system = composite_2q(ps, K_q=4, K_c=3)
    n_eff = drive_operator(system, ps)
    assert np.allclose(n_eff, n_eff.conj().T)
    assert np.allclose(n_eff, system.operators["n_q1"])
    ps2 = make_2q(gamma=0.35)
    n_eff2 = drive_operator(composite_2q(ps2, K_q=4, K_c=3), ps2)
    assert not np.allclose(n_eff2, system.operators["n_q1"])


def test_parameter_set_chain_validation():
    with pytest.raises(CircuitError):
        ParameterSet(qubits=(Q_TBL, Q_TBL), couplers=(), couplings=())
