"""Circuit Hamiltonians: fluxonium, double-transmon coupler, composites.

Builders return energies as E/h in GHz.  External fluxes are reduced phases
(phi_ext = 2*pi*Phi/Phi_0) in radians.

The coupler's external flux is distributed over its three junctions with the
irrotational weights (C1t, C2t, C12t), inversely proportional to the branch
capacitances and summing to one around the loop, oriented so the total loop
phase equals phi_ext.  This keeps every spectrum exactly 2*pi-periodic and
puts the flux sweet spot of the tunable mode at phi_ext = pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .operators import (
    CHARGE,
    HARMONIC,
    HilbertBasis,
    OperatorMatrix,
    charge_basis,
    charge_operator,
    charge_shift,
    cos_phase,
    destroy,
    embed,
    ho_basis,
    phase_operator,
    project_lowest,
)

DEFAULT_FLUXONIUM_DIM = 60
DEFAULT_DTC_NMAX = 12
DEFAULT_KQ = 8
DEFAULT_KC = 6


class CircuitError(ValueError):
    """Invalid circuit parameters or inconsistent composite layout."""


@dataclass(frozen=True)
class FluxoniumParams:
    """Single fluxonium: charging, Josephson and inductive energies (GHz)."""

    E_C: float
    E_J: float
    E_L: float
    phi_ext: float = math.pi

    def __post_init__(self):
        if min(self.E_C, self.E_J, self.E_L) <= 0:
            raise CircuitError("fluxonium energies must be positive")
        object.__setattr__(self, "phi_ext", float(self.phi_ext) % (2 * math.pi))

    def at_flux(self, phi_ext: float) -> "FluxoniumParams":
        return replace(self, phi_ext=phi_ext)

    @property
    def phi_zpf(self) -> float:
        return (2 * self.E_C / self.E_L) ** 0.25


@dataclass(frozen=True)
class DtcParams:
    """Double-transmon coupler: two transmons joined by a shared junction.

    ``J12`` is the capacitive n1*n2 coefficient in GHz.  ``flux_coeffs``
    optionally overrides the flux-distribution weights (C1t, C2t, C12t);
    by default they are derived from the charging energies and J12 via the
    capacitance network, and sum to one.
    """

    E_C1: float
    E_C2: float
    E_J1: float
    E_J2: float
    E_J12: float
    J12: float
    phi_ext: float = math.pi
    flux_coeffs: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        if min(self.E_C1, self.E_C2) <= 0 or min(self.E_J1, self.E_J2) <= 0:
            raise CircuitError("DTC charging and junction energies must be positive")
        if self.E_J12 < 0 or self.J12 < 0:
            raise CircuitError("E_J12 and J12 must be non-negative")
        if self.E_J12 > min(self.E_J1, self.E_J2):
            raise CircuitError("E_J12 must not exceed the individual junction energies")

    def at_flux(self, phi_ext: float) -> "DtcParams":
        return replace(self, phi_ext=phi_ext)

    def capacitance_ratios(self) -> tuple[float, float, float]:
        """Branch capacitances (C1, C2, C12) up to a common factor."""
        c1 = self.E_C2 - self.J12 / 8.0
        c2 = self.E_C1 - self.J12 / 8.0
        c12 = self.J12 / 8.0
        if c1 <= 0 or c2 <= 0:
            raise CircuitError("J12 too large for the given charging energies")
        return c1, c2, c12

    def flux_distribution(self) -> tuple[float, float, float]:
        """(C1t, C2t, C12t): inverse-capacitance loop weights, summing to 1."""
        if self.flux_coeffs is not None:
            return self.flux_coeffs
        c1, c2, c12 = self.capacitance_ratios()
        cc2 = c1 * c2 + c1 * c12 + c2 * c12
        return c2 * c12 / cc2, c1 * c12 / cc2, c1 * c2 / cc2

    def junction_arguments(self) -> tuple[float, float, float]:
        """Constant flux shifts in the three junction cosines.

        Junction 1: cos(phi1 + C1t*phi); junction 2: cos(phi2 - C2t*phi);
        shared junction: cos(phi2 - phi1 + C12t*phi).  The oriented loop sum
        of the shifts is phi_ext, as flux quantization requires.
        """
        c1t, c2t, c12t = self.flux_distribution()
        return c1t * self.phi_ext, -c2t * self.phi_ext, c12t * self.phi_ext

    def differential_mode_charging_energy(self) -> float:
        """e^2/(2*C_eff) for C_eff = (C1+C2)/2 + 2*C12, in GHz."""
        a, b = self.E_C1, self.E_C2
        j = self.J12
        return (a * b - j * j / 64.0) / ((a + b) / 2.0 + j / 8.0)


@dataclass(frozen=True)
class ResonatorParams:
    """Readout or reset resonator coupled to a fluxonium charge."""

    omega_r: float
    g_r: float
    Q: float
    alpha: float = 0.0
    fock_dim: int = 6

    def __post_init__(self):
        if min(self.omega_r, self.g_r, self.Q) <= 0:
            raise CircuitError("omega_r, g_r and Q must be positive")
        if self.fock_dim < 2:
            raise CircuitError("fock_dim must be >= 2")

    @property
    def kappa(self) -> float:
        """Photon decay rate omega_r/Q, in the same frequency units (GHz)."""
        return self.omega_r / self.Q


@dataclass(frozen=True)
class CouplingParams:
    """Fluxonium-DTC charge coupling and parasitic drive ratio."""

    J_qc: float
    gamma: float = 0.0

    def __post_init__(self):
        if self.J_qc < 0:
            raise CircuitError("J_qc must be non-negative")


@dataclass(frozen=True)
class ParameterSet:
    """Aggregate design vector for an N-qubit chain with N-1 couplers."""

    qubits: tuple[FluxoniumParams, ...]
    couplers: tuple[DtcParams, ...]
    couplings: tuple[CouplingParams, ...]
    readout: tuple[ResonatorParams, ...] = ()
    reset: tuple[ResonatorParams, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "couplers", tuple(self.couplers))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "readout", tuple(self.readout))
        object.__setattr__(self, "reset", tuple(self.reset))
        n = len(self.qubits)
        if n < 1:
            raise CircuitError("at least one qubit required")
        if len(self.couplers) != n - 1:
            raise CircuitError(f"{n} qubits require {n - 1} couplers, got {len(self.couplers)}")
        if len(self.couplings) != len(self.couplers):
            raise CircuitError("one CouplingParams entry required per coupler")


# ---------------------------------------------------------------------------
# fluxonium
# ---------------------------------------------------------------------------

def fluxonium_basis(p: FluxoniumParams, dim: int = DEFAULT_FLUXONIUM_DIM) -> HilbertBasis:
    """HO basis of the LC core (E_C, E_L)."""
    return ho_basis(dim, p.phi_zpf)


def fluxonium_hamiltonian(p: FluxoniumParams, dim: int = DEFAULT_FLUXONIUM_DIM) -> OperatorMatrix:
    """H = 4 E_C n^2 - E_J cos(phi) + E_L/2 (phi - phi_ext)^2 in the HO basis."""
    if dim < 20:
        raise CircuitError("fluxonium basis dimension below 20 is not convergent")
    basis = fluxonium_basis(p, dim)
    n = charge_operator(basis).values
    phi = phase_operator(basis).values
    cosp = cos_phase(basis).values
    shift = phi - p.phi_ext * np.eye(dim)
    H = 4 * p.E_C * (n @ n) - p.E_J * cosp + 0.5 * p.E_L * (shift @ shift)
    return OperatorMatrix(H, basis, units="GHz").require_hermitian()


def fluxonium_flux_derivative(p: FluxoniumParams, dim: int = DEFAULT_FLUXONIUM_DIM) -> OperatorMatrix:
    """dH/dPhi in GHz per flux quantum: -2*pi*E_L*(phi - phi_ext)."""
    basis = fluxonium_basis(p, dim)
    phi = phase_operator(basis).values
    values = -2 * math.pi * p.E_L * (phi - p.phi_ext * np.eye(dim))
    return OperatorMatrix(values, basis, units="GHz")


# ---------------------------------------------------------------------------
# double-transmon coupler, exact (product charge basis)
# ---------------------------------------------------------------------------

def dtc_basis(n_max: int = DEFAULT_DTC_NMAX) -> HilbertBasis:
    return charge_basis(n_max)


def _joint_basis(d: int) -> HilbertBasis:
    # product of two charge bases; dimension (2 n_max + 1)^2 is odd
    return HilbertBasis(CHARGE, d * d, (d - 1) // 2)


def dtc_hamiltonian(p: DtcParams, n_max: int = DEFAULT_DTC_NMAX) -> OperatorMatrix:
    """Two-transmon coupler Hamiltonian in the product charge basis."""
    basis = dtc_basis(n_max)
    d = basis.dimension
    nop = charge_operator(basis).values
    shift = charge_shift(basis)
    s1, s2, s12 = p.junction_arguments()
    n1 = np.kron(nop, np.eye(d))
    n2 = np.kron(np.eye(d), nop)
    e1 = np.kron(shift, np.eye(d))
    e2 = np.kron(np.eye(d), shift)
    H = 4 * p.E_C1 * n1 @ n1 + 4 * p.E_C2 * n2 @ n2 + p.J12 * n1 @ n2
    for E_J, e, s in ((p.E_J1, e1, s1), (p.E_J2, e2, s2), (p.E_J12, e2 @ e1.conj().T, s12)):
        t = np.exp(1j * s) * e
        H -= E_J / 2 * (t + t.conj().T)
    return OperatorMatrix(H, _joint_basis(d), units="GHz").require_hermitian()


def dtc_charge_operators(n_max: int = DEFAULT_DTC_NMAX) -> tuple[np.ndarray, np.ndarray]:
    """n1 and n2 of the two coupler transmons in the product charge basis."""
    basis = dtc_basis(n_max)
    nop = charge_operator(basis).values
    d = basis.dimension
    return np.kron(nop, np.eye(d)), np.kron(np.eye(d), nop)


def dtc_flux_derivative(p: DtcParams, n_max: int = DEFAULT_DTC_NMAX) -> OperatorMatrix:
    """dH/dPhi in GHz per flux quantum for the coupler loop.

    Differentiating the junction terms of ``dtc_hamiltonian`` with respect
    to Phi = phi_ext/(2*pi) weights each sin term by its flux coefficient.
    """
    basis = dtc_basis(n_max)
    d = basis.dimension
    shift = charge_shift(basis)
    c1t, c2t, c12t = p.flux_distribution()
    s1, s2, s12 = p.junction_arguments()
    e1 = np.kron(shift, np.eye(d))
    e2 = np.kron(np.eye(d), shift)

    def sin_term(e, s):
        t = np.exp(1j * s) * e
        return (t - t.conj().T) / 2j

    dH = (p.E_J1 * c1t * sin_term(e1, s1)
          - p.E_J2 * c2t * sin_term(e2, s2)
          + p.E_J12 * c12t * sin_term(e2 @ e1.conj().T, s12))
    return OperatorMatrix(2 * math.pi * dH, _joint_basis(d), units="GHz")


def dtc_sin_phase_difference(p: DtcParams, n_max: int = DEFAULT_DTC_NMAX) -> np.ndarray:
    """sin(phi1 - phi2) in the product charge basis.

    Half of it approximates the differential-mode phase (phi1 - phi2)/2 for
    low-lying transmon states; used for the differential-mode dielectric
    loss estimate where the compact basis has no phase operator.
    """
    basis = dtc_basis(n_max)
    d = basis.dimension
    shift = charge_shift(basis)
    t = np.kron(shift, np.eye(d)) @ np.kron(np.eye(d), shift).conj().T
    return np.asarray((t - t.conj().T) / 2j)


# ---------------------------------------------------------------------------
# per-mode split of the coupler (needed where its normal modes degenerate)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DtcSplitOperators:
    """Coupler as two tensor slots, each projected onto its own eigenbasis.

    ``energies`` are the local single-mode spectra, ``n`` the projected
    charge operators, and ``coupling_terms`` a list of (coef, op_a, op_b)
    bilinears joining the two slots.  The joint-projection representation
    is ill-conditioned at the turn-off flux where the normal modes are
    degenerate; this one stays well defined there.
    """

    energies: tuple[np.ndarray, np.ndarray]
    n: tuple[np.ndarray, np.ndarray]
    coupling_terms: tuple[tuple[complex, np.ndarray, np.ndarray], ...]

    @property
    def K(self) -> int:
        return self.energies[0].shape[0]

    def hamiltonian(self) -> np.ndarray:
        K = self.K
        I = np.eye(K)
        H = np.kron(np.diag(self.energies[0]), I).astype(complex)
        H += np.kron(I, np.diag(self.energies[1]))
        for coef, op_a, op_b in self.coupling_terms:
            H += coef * np.kron(op_a, op_b)
        return H


def dtc_split_operators(p: DtcParams, K: int = 4, n_max: int = 8) -> DtcSplitOperators:
    """Project each coupler transmon separately, keeping K levels per mode."""
    basis = dtc_basis(n_max)
    nop = charge_operator(basis).values
    shift = charge_shift(basis)
    s1, s2, s12 = p.junction_arguments()
    projected = []
    for (E_C, E_J, s) in ((p.E_C1, p.E_J1, s1), (p.E_C2, p.E_J2, s2)):
        t = np.exp(1j * s) * shift
        H = 4 * E_C * nop @ nop - E_J / 2 * (t + t.conj().T)
        evals, (n_p, s_p) = project_lowest(H, K, [nop, shift])
        projected.append((evals - evals[0], n_p, s_p))
    (e1, n1, sh1), (e2, n2, sh2) = projected
    phase = np.exp(1j * s12)
    terms = (
        (-p.E_J12 / 2 * phase, sh1.conj().T, sh2),
        (-p.E_J12 / 2 * np.conj(phase), sh1, sh2.conj().T),
        (complex(p.J12), n1, n2),
    )
    return DtcSplitOperators(energies=(e1, e2), n=(n1, n2), coupling_terms=terms)


# ---------------------------------------------------------------------------
# coupler in the two-mode harmonic-oscillator approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DtcHoParameters:
    """Derived two-mode model quantities at a given coupler flux."""

    mode_freqs: tuple[float, float]
    phi_zpf: tuple[float, float]
    n_zpf: tuple[float, float]
    EJ12_eff: float
    EJm_eff: tuple[float, float]
    g_ind: float
    g_cap: float
    nu4: tuple[float, float]


def dtc_ho_parameters(p: DtcParams) -> DtcHoParameters:
    """Flux-dependent effective junction energies, mode frequencies and the
    inductive/capacitive inter-mode couplings of the two-mode model."""
    phi = p.phi_ext
    EJ12_eff = p.E_J12 * math.cos(phi)
    EJm_eff = []
    for EJ in (p.E_J1, p.E_J2):
        arg = EJ * EJ - p.E_J12 ** 2 * math.sin(phi) ** 2
        if arg <= 0:
            raise CircuitError(
                "invalid flux/parameter combination: effective junction energy "
                "is imaginary (E_J12 sin(phi) exceeds E_J)"
            )
        EJm_eff.append(math.sqrt(arg))
    freqs, phiz, nz = [], [], []
    for E_C, EJp in ((p.E_C1, EJm_eff[0]), (p.E_C2, EJm_eff[1])):
        stiff = EJp + EJ12_eff
        if stiff <= 0:
            raise CircuitError("two-mode model invalid: non-positive effective stiffness")
        f = math.sqrt(8 * E_C * stiff)
        freqs.append(f)
        phiz.append(math.sqrt(f / stiff / 2.0))
        nz.append(math.sqrt(f / (8 * E_C) / 2.0))
    g_ind = EJ12_eff * phiz[0] * phiz[1]
    g_cap = p.J12 * nz[0] * nz[1]
    return DtcHoParameters(
        mode_freqs=(freqs[0], freqs[1]),
        phi_zpf=(phiz[0], phiz[1]),
        n_zpf=(nz[0], nz[1]),
        EJ12_eff=EJ12_eff,
        EJm_eff=(EJm_eff[0], EJm_eff[1]),
        g_ind=g_ind,
        g_cap=g_cap,
        nu4=(p.E_C1 / 12.0, p.E_C2 / 12.0),
    )


def _ho_mode_local(f: float, nu: float, dim: int) -> np.ndarray:
    a = destroy(dim)
    x = a + a.T
    return f * (a.T @ a) - nu * (x @ x @ x @ x)


def dtc_ho_hamiltonian(p: DtcParams, dim: int = 8) -> OperatorMatrix:
    """Two-mode oscillator approximation of the coupler.

    Valid for small E_J12/E_Jm.  Each mode keeps its quartic
    self-nonlinearity; the modes couple through the inductive (phase-phase,
    coefficient -EJ12_eff * phi_zpf1 * phi_zpf2) and capacitive
    (charge-charge, J12 n1 n2) bilinears.
    """
    par = dtc_ho_parameters(p)
    a = destroy(dim)
    x = a + a.T
    pq = a - a.T
    H = np.zeros((dim * dim, dim * dim), dtype=complex)
    for m in range(2):
        H += embed(_ho_mode_local(par.mode_freqs[m], par.nu4[m], dim), m, (dim, dim))
    # phi = phi_zpf (a + a_dag): the shared-junction quadratic gives
    # -EJ12_eff phi1 phi2; J12 n1 n2 = -g_cap (a-a_dag)(a-a_dag).
    H -= par.g_ind * np.kron(x, x)
    H -= par.g_cap * np.kron(pq, pq)
    basis = HilbertBasis(HARMONIC, dim * dim, par.phi_zpf[0])
    return OperatorMatrix(H, basis, units="GHz").require_hermitian()


def dtc_ho_mode_operators(p: DtcParams, dim: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Charge operators of the two oscillator modes (product space)."""
    par = dtc_ho_parameters(p)
    a = destroy(dim)
    n_local = [1j * nz * (a.T - a) for nz in par.n_zpf]
    return embed(n_local[0], 0, (dim, dim)), embed(n_local[1], 1, (dim, dim))


def dtc_ho_split_operators(p: DtcParams, K: int = 4, dim: int = 10) -> DtcSplitOperators:
    """Per-mode projection of the two-mode oscillator model.

    With J12 = 0 at the flux where EJ12_eff vanishes both coupling terms
    are zero and the two slots decouple exactly.
    """
    par = dtc_ho_parameters(p)
    a = destroy(dim)
    x = a + a.T
    projected = []
    for m in range(2):
        local = _ho_mode_local(par.mode_freqs[m], par.nu4[m], dim)
        n_local = 1j * par.n_zpf[m] * (a.T - a)
        pq_local = a - a.T
        evals, (x_p, n_p, pq_p) = project_lowest(local, K, [x, n_local, pq_local])
        projected.append((evals - evals[0], x_p, n_p, pq_p))
    (e1, x1, n1, pq1), (e2, x2, n2, pq2) = projected
    terms = (
        (complex(-par.g_ind), x1, x2),
        (complex(-par.g_cap), pq1, pq2),
    )
    return DtcSplitOperators(energies=(e1, e2), n=(n1, n2), coupling_terms=terms)


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositeSystem:
    """A tensor-product system of projected bare subsystems.

    ``dims`` lists the kept levels per slot; ``hamiltonian`` is the dense
    composite matrix in the bare-product basis; ``operators`` maps names
    (e.g. "n_q1", "n_c1") to embedded operators in the same basis; ``aux``
    carries builder-specific extras.
    """

    hamiltonian: np.ndarray
    dims: tuple[int, ...]
    operators: dict
    slots: tuple[str, ...]
    aux: dict = None

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))


def _projected_fluxonium(p: FluxoniumParams, K: int, dim: int):
    H = fluxonium_hamiltonian(p, dim)
    basis = H.basis
    n = charge_operator(basis).values
    phi = phase_operator(basis).values
    dH = fluxonium_flux_derivative(p, dim).values
    evals, (n_p, phi_p, dH_p) = project_lowest(H.values, K, [n, phi, dH])
    return evals - evals[0], n_p, phi_p, dH_p


def _projected_dtc(p: DtcParams, K: int, n_max: int):
    H = dtc_hamiltonian(p, n_max)
    n1, n2 = dtc_charge_operators(n_max)
    dH = dtc_flux_derivative(p, n_max).values
    sphi = dtc_sin_phase_difference(p, n_max)
    evals, (n1_p, n2_p, dH_p, sphi_p) = project_lowest(H.values, K, [n1, n2, dH, sphi])
    return evals - evals[0], n1_p, n2_p, dH_p, sphi_p


def composite_2q(
    ps: ParameterSet,
    K_q: int = DEFAULT_KQ,
    K_c: int = DEFAULT_KC,
    fluxonium_dim: int = DEFAULT_FLUXONIUM_DIM,
    dtc_nmax: int = DEFAULT_DTC_NMAX,
) -> CompositeSystem:
    """Fluxonium-DTC-fluxonium composite with charge-charge couplings.

    Each bare subsystem is truncated to its lowest K levels; the coupling
    charge operators are expressed in those eigenbases before the tensor
    assembly.
    """
    if len(ps.qubits) != 2 or len(ps.couplers) != 1:
        raise CircuitError("composite_2q requires exactly 2 qubits and 1 coupler")
    e_q1, n_q1, phi_q1, dH_q1 = _projected_fluxonium(ps.qubits[0], K_q, fluxonium_dim)
    e_q2, n_q2, phi_q2, dH_q2 = _projected_fluxonium(ps.qubits[1], K_q, fluxonium_dim)
    e_c, n_c1, n_c2, dH_c, sphi_c = _projected_dtc(ps.couplers[0], K_c, dtc_nmax)
    J = ps.couplings[0].J_qc
    dims = (K_q, K_c, K_q)
    H = (embed(np.diag(e_q1), 0, dims)
         + embed(np.diag(e_c), 1, dims)
         + embed(np.diag(e_q2), 2, dims)
         + J * np.kron(np.kron(n_q1, n_c1), np.eye(K_q))
         + J * np.kron(np.kron(np.eye(K_q), n_c2), n_q2))
    ops = {
        "n_q1": embed(n_q1, 0, dims),
        "n_q2": embed(n_q2, 2, dims),
        "n_c1": embed(n_c1, 1, dims),
        "n_c2": embed(n_c2, 1, dims),
        "phi_q1": embed(phi_q1, 0, dims),
        "phi_q2": embed(phi_q2, 2, dims),
        "dH_q1": embed(dH_q1, 0, dims),
        "dH_q2": embed(dH_q2, 2, dims),
        "dH_c": embed(dH_c, 1, dims),
        "sin_phi_d_c": embed(sphi_c, 1, dims),
    }
    return CompositeSystem(H, dims, ops, ("q1", "c", "q2"), aux={})


def composite_3q(
    ps: ParameterSet,
    K_q: int = 4,
    K_c: int = 4,
    K_active: int = 18,
    fluxonium_dim: int = DEFAULT_FLUXONIUM_DIM,
    dtc_nmax: int = 8,
    coupler_model: str = "charge",
    sparse: bool = False,
    _active_cache: Optional[dict] = None,
) -> CompositeSystem:
    """Chain q1-c12-q2-c23-q3 with nearest-neighbour charge couplings.

    The active pair (q2, c23, q3) is diagonalized first and truncated to
    its ``K_active`` lowest eigenstates, then coupled to the spectator
    branch q1-c12.  The spectator coupler c12 occupies two per-mode tensor
    slots so the chain stays well conditioned at its turn-off flux, where
    the joint normal modes are degenerate.  ``coupler_model`` selects exact
    charge-basis transmons ("charge") or the two-mode oscillator model
    ("ho") for c12.
    """
    if len(ps.qubits) != 3 or len(ps.couplers) != 2:
        raise CircuitError("composite_3q requires exactly 3 qubits and 2 couplers")
    if coupler_model not in ("charge", "ho"):
        raise CircuitError(f"unknown coupler model {coupler_model!r}")

    # active trio in its own eigenbasis (cacheable across spectator-flux scans)
    if _active_cache is not None and "e_active" in _active_cache:
        e_active = _active_cache["e_active"]
        n_q2_active = _active_cache["n_q2_active"]
        overlaps = _active_cache["overlaps"]
        trio_dims = _active_cache["trio_dims"]
        e_q1 = _active_cache["e_q1"]
        n_q1 = _active_cache["n_q1"]
    else:
        trio_ps = ParameterSet(
            qubits=ps.qubits[1:3],
            couplers=(ps.couplers[1],),
            couplings=(ps.couplings[1],),
        )
        trio = composite_2q(trio_ps, K_q=K_q + 1, K_c=DEFAULT_KC,
                            fluxonium_dim=fluxonium_dim, dtc_nmax=dtc_nmax)
        evals, vecs = np.linalg.eigh(trio.hamiltonian)
        evals = evals - evals[0]
        keep = vecs[:, :K_active]
        e_active = evals[:K_active]
        n_q2_active = keep.conj().T @ trio.operators["n_q1"] @ keep
        overlaps = np.abs(vecs) ** 2
        trio_dims = trio.dims
        e_q1, n_q1, _, _ = _projected_fluxonium(ps.qubits[0], K_q, fluxonium_dim)
        if _active_cache is not None:
            _active_cache.update(
                e_active=e_active, n_q2_active=n_q2_active, overlaps=overlaps,
                trio_dims=trio_dims, e_q1=e_q1, n_q1=n_q1,
            )

    if coupler_model == "charge":
        c12 = dtc_split_operators(ps.couplers[0], K_c, dtc_nmax)
    else:
        c12 = dtc_ho_split_operators(ps.couplers[0], K_c)
    J = ps.couplings[0].J_qc

    dims = (K_q, K_c, K_c, K_active)
    if sparse:
        import scipy.sparse as sp

        def kron4(a, b, c, d):
            return sp.kron(sp.kron(sp.kron(a, b, "csr"), c, "csr"), d, "csr")

        I_q, I_m, I_a = sp.identity(K_q), sp.identity(K_c), sp.identity(K_active)
        H = kron4(sp.diags(e_q1), I_m, I_m, I_a).astype(complex)
        H = H + kron4(I_q, sp.diags(c12.energies[0]), I_m, I_a)
        H = H + kron4(I_q, I_m, sp.diags(c12.energies[1]), I_a)
        H = H + kron4(I_q, I_m, I_m, sp.diags(e_active))
        for coef, op_a, op_b in c12.coupling_terms:
            H = H + coef * kron4(I_q, sp.csr_matrix(op_a), sp.csr_matrix(op_b), I_a)
        H = H + J * kron4(sp.csr_matrix(n_q1), sp.csr_matrix(c12.n[0]), I_m, I_a)
        H = H + J * kron4(I_q, I_m, sp.csr_matrix(c12.n[1]), sp.csr_matrix(n_q2_active))
        H = H.tocsr()
        ops = {}
    else:
        I_q, I_m, I_a = np.eye(K_q), np.eye(K_c), np.eye(K_active)
        H = (embed(np.diag(e_q1), 0, dims)
             + embed(np.diag(c12.energies[0]), 1, dims)
             + embed(np.diag(c12.energies[1]), 2, dims)
             + embed(np.diag(e_active), 3, dims)).astype(complex)
        for coef, op_a, op_b in c12.coupling_terms:
            H += coef * np.kron(np.kron(np.kron(I_q, op_a), op_b), I_a)
        H += J * np.kron(np.kron(np.kron(n_q1, c12.n[0]), I_m), I_a)
        H += J * np.kron(np.kron(np.kron(I_q, I_m), c12.n[1]), n_q2_active)
        ops = {"n_q1": embed(n_q1, 0, dims)}
    aux = {
        "active_energies": e_active,
        "active_overlaps": overlaps,
        "active_dims": trio_dims,
        "K_active": K_active,
    }
    return CompositeSystem(H, dims, ops, ("q1", "c12a", "c12b", "active"), aux=aux)


def qubit_resonator_hamiltonian(
    q: FluxoniumParams,
    r: ResonatorParams,
    include_dtc: Optional[DtcParams] = None,
    K_q: int = 6,
    K_c: int = 3,
    coupling: Optional[CouplingParams] = None,
    fluxonium_dim: int = DEFAULT_FLUXONIUM_DIM,
    dtc_nmax: int = DEFAULT_DTC_NMAX,
) -> CompositeSystem:
    """Fluxonium (optionally with DTC) coupled to a resonator mode.

    H/h = H_q + omega_r a_dag a + g_r (n_q + alpha n_c)(a + a_dag), with the
    qubit (and coupler) projected onto their lowest levels.
    """
    e_q, n_q, phi_q, dH_q = _projected_fluxonium(q, K_q, fluxonium_dim)
    a = destroy(r.fock_dim)
    x = a + a.T
    nph = a.T @ a
    if include_dtc is None:
        dims = (K_q, r.fock_dim)
        H = (embed(np.diag(e_q), 0, dims)
             + r.omega_r * embed(nph, 1, dims)
             + r.g_r * np.kron(n_q, x))
        ops = {
            "n_q": embed(n_q, 0, dims),
            "phi_q": embed(phi_q, 0, dims),
            "a": np.kron(np.eye(K_q), a),
            "n_phot": embed(nph, 1, dims),
        }
        return CompositeSystem(H, dims, ops, ("q", "r"), aux={})
    e_c, n_c1, n_c2, dH_c, sphi_c = _projected_dtc(include_dtc, K_c, dtc_nmax)
    J = coupling.J_qc if coupling is not None else 0.0
    dims = (K_q, K_c, r.fock_dim)
    H = (embed(np.diag(e_q), 0, dims)
         + embed(np.diag(e_c), 1, dims)
         + r.omega_r * embed(nph, 2, dims)
         + J * np.kron(np.kron(n_q, n_c1), np.eye(r.fock_dim)))
    drive = np.kron(np.kron(n_q, np.eye(K_c)), x)
    drive = drive + r.alpha * np.kron(np.kron(np.eye(K_q), n_c1), x)
    H = H + r.g_r * drive
    ops = {
        "n_q": embed(n_q, 0, dims),
        "a": np.kron(np.eye(K_q * K_c), a),
        "n_phot": embed(nph, 2, dims),
    }
    return CompositeSystem(H, dims, ops, ("q", "c", "r"), aux={})


def drive_operator(system: CompositeSystem, ps: ParameterSet, qubit_index: int = 0) -> np.ndarray:
    """Effective charge drive n_eff = n_qj + gamma * n_c on the composite.

    The parasitic term acts on the coupler transmon adjacent to the driven
    qubit.
    """
    if qubit_index not in (0, 1):
        raise CircuitError("drive_operator supports the two qubits of a 2q composite")
    gamma = ps.couplings[0].gamma
    if qubit_index == 0:
        return system.operators["n_q1"] + gamma * system.operators["n_c1"]
    return system.operators["n_q2"] + gamma * system.operators["n_c2"]
