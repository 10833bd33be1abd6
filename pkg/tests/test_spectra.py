import math

import numpy as np
import pytest

from fdtc.circuits import (
    CouplingParams,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    composite_2q,
    dtc_ho_parameters,
)
from fdtc.config import load_config, packaged_config
from fdtc.spectra import (
    InfeasibleDesignError,
    SpectralError,
    diagonalize_labelled,
    dtc_mode_frequencies,
    effective_coupling,
    find_turnoff_flux,
    find_turnon_flux,
    fluxonium_transition,
    map_transition_table,
)

REF = load_config(packaged_config("reference.toml"))[0]


def test_labels_zero_coupling_unit_overlap():
    ps = ParameterSet(qubits=REF.qubits, couplers=REF.couplers,
                      couplings=(CouplingParams(0.0),))
    spec = diagonalize_labelled(composite_2q(ps, K_q=4, K_c=3))
    assert np.all(spec.overlaps > 0.999)
    assert spec.labels[0] == (0, 0, 0)


def test_labels_invariant_under_energy_offset():
    # asymmetric qubits lift the exact pair degeneracies whose 50/50 mixtures
    # make label assignment sensitive to floating-point noise
    q2 = FluxoniumParams(E_C=1.10, E_J=4.50, E_L=0.65)
    ps = ParameterSet(qubits=(REF.qubits[0], q2), couplers=REF.couplers,
                      couplings=(CouplingParams(0.3),))
    system = composite_2q(ps, K_q=4, K_c=3)
    spec1 = diagonalize_labelled(system)
    shifted = system.hamiltonian + 7.3 * np.eye(system.dimension)
    import dataclasses
    system2 = dataclasses.replace(system, hamiltonian=shifted)
    spec2 = diagonalize_labelled(system2)
    assert spec1.labels == spec2.labels
    assert np.allclose(spec1.energies, spec2.energies, atol=1e-9)


def test_hybridization_flags_at_turn_on():
    # resonant plasmon/coupler manifold must carry the hybridized flag; the
    # coupler-excitation state sits right at the 50% boundary
    spec = diagonalize_labelled(composite_2q(REF))
    assert spec.is_hybridized((2, 0, 1))
    assert spec.is_hybridized((1, 0, 2))
    assert spec.overlaps[spec.index_of((1, 1, 1))] < 0.55
    assert not spec.is_hybridized((0, 0, 0))
    assert not spec.is_hybridized((1, 0, 1))


def test_find_turnoff_reference_anchor():
    op = find_turnoff_flux(REF.couplers[0])
    assert op.omega_off == pytest.approx(5.790, abs=0.001)
    assert 0 < op.phi_off < math.pi
    assert op.mode_gap_at_off < 1e-3


def test_find_turnoff_continuity_under_shared_junction_perturbation():
    import dataclasses
    base = find_turnoff_flux(REF.couplers[0], n_max=8).phi_off
    pert = dataclasses.replace(REF.couplers[0], E_J12=REF.couplers[0].E_J12 * 1.05)
    moved = find_turnoff_flux(pert, n_max=8).phi_off
    assert 0 < abs(moved - base) < 0.1


def test_find_turnoff_small_shared_junction_near_half_pi():
    # J12 = 0 and a weak shared junction: degeneracy approaches pi/2, where
    # the effective inductive coupling changes sign
    p = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=12.0, E_J2=12.0, E_J12=0.4, J12=0.0)
    op = find_turnoff_flux(p, n_max=8)
    assert op.phi_off == pytest.approx(math.pi / 2, abs=0.05)


def test_find_turnon_reference():
    op = find_turnon_flux(REF)
    assert op.phi_on == pytest.approx(math.pi, abs=1e-3)
    f12 = fluxonium_transition(REF.qubits[0], 1, 2)
    assert op.omega_on == pytest.approx(f12, abs=1e-3)


def test_find_turnon_infeasible_when_plasmon_below_band():
    # lower the plasmon below the coupler's tunable-mode minimum
    q = FluxoniumParams(E_C=1.10, E_J=2.2, E_L=0.5)
    ps = ParameterSet(qubits=(q, q), couplers=REF.couplers,
                      couplings=REF.couplings)
    with pytest.raises(InfeasibleDesignError):
        find_turnon_flux(ps)


def test_turnon_crossing_symmetric_about_pi():
    # the tunable mode is even about pi, so a crossing below pi has a mirror
    coupler = REF.couplers[0]
    for dphi in (0.1, 0.3):
        lo_minus = dtc_mode_frequencies(coupler, math.pi - dphi, n_max=8)[0]
        lo_plus = dtc_mode_frequencies(coupler, math.pi + dphi, n_max=8)[0]
        assert lo_minus == pytest.approx(lo_plus, abs=1e-9)


def test_effective_coupling_zero_when_both_paths_vanish():
    p = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=11.3, E_J2=11.3, E_J12=1.3, J12=0.0,
                  phi_ext=math.pi / 2)
    ps = ParameterSet(qubits=REF.qubits, couplers=(p,), couplings=REF.couplings)
    assert effective_coupling(ps, levels=(1, 2)) == pytest.approx(0.0, abs=1e-15)


def test_effective_coupling_linear_in_inductive_path():
    # with g_cap = 0 the coupling is proportional to g_ind
    import dataclasses
    vals = []
    for ej12 in (0.4, 0.8):
        p = DtcParams(E_C1=0.3, E_C2=0.3, E_J1=14.0, E_J2=14.0, E_J12=ej12,
                      J12=0.0, phi_ext=2.6)
        ps = ParameterSet(qubits=REF.qubits, couplers=(p,), couplings=REF.couplings)
        g_ind = dtc_ho_parameters(p).g_ind
        vals.append(effective_coupling(ps, levels=(1, 2)) / g_ind)
    assert vals[0] == pytest.approx(vals[1], rel=0.15)


def test_effective_coupling_resonance_guard():
    with pytest.raises(SpectralError):
        effective_coupling(REF, levels=(1, 2), phi_c=math.pi)


def test_effective_coupling_against_exact_splitting():
    # dispersive point: coupler biased at its turn-off region, weak J
    ps = ParameterSet(
        qubits=REF.qubits,
        couplers=(REF.couplers[0].at_flux(1.69064),),
        couplings=(CouplingParams(0.2, 0.35),),
    )
    g_pred = abs(effective_coupling(ps, levels=(1, 2)))
    spec = diagonalize_labelled(composite_2q(ps, K_q=6, K_c=6))
    # the single-plasmon pair splits by 2 g_eff for identical qubits
    split = abs(spec.energy_of((1, 0, 2)) - spec.energy_of((2, 0, 1)))
    assert split / 2 == pytest.approx(g_pred, rel=0.10)


def test_map_transition_table_structure():
    table = map_transition_table(REF)
    assert len(table) == 8
    freqs = sorted(t.frequency for t in table)
    # all eight candidates cluster around the plasmon frequency
    assert 3.8 < freqs[0] and freqs[-1] < 4.6
    # internal consistency: frequencies reproduce labelled eigen-differences
    spec = diagonalize_labelled(composite_2q(REF))
    for t in table:
        assert t.frequency == pytest.approx(
            spec.transition(t.initial, t.final), abs=1e-12)


def test_map_splitting_consistency():
    # 2[(w_201 - w_101) - (w_200 - w_100)] ~ -(2 g_eff) for degenerate qubits,
    # and the two-plasmon pair splitting equals 2 g_eff, within 5%
    spec = diagonalize_labelled(composite_2q(REF))
    lhs = 2 * ((spec.energy_of((2, 0, 1)) - spec.energy_of((1, 0, 1)))
               - (spec.energy_of((2, 0, 0)) - spec.energy_of((1, 0, 0))))
    pair_split = spec.energy_of((1, 0, 2)) - spec.energy_of((2, 0, 1))
    assert abs(lhs) == pytest.approx(abs(pair_split), rel=0.05)


def test_operating_point_determinism():
    a = find_turnoff_flux(REF.couplers[0], n_max=8)
    b = find_turnoff_flux(REF.couplers[0], n_max=8)
    assert a.phi_off == b.phi_off and a.omega_off == b.omega_off
