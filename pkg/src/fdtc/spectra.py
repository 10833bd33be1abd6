"""Diagonalization with bare-product labels, operating-flux location, and
effective-coupling / transition-table analysis of the coupled system."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .circuits import (
    CompositeSystem,
    CircuitError,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    composite_2q,
    dtc_hamiltonian,
    dtc_ho_parameters,
    drive_operator,
    fluxonium_hamiltonian,
)
from .operators import canonical_eigh

HYBRIDIZED_THRESHOLD = 0.5
FLUX_TOL = 1e-6


class SpectralError(RuntimeError):
    """Eigen-solver or root-finding failure."""


class InfeasibleDesignError(RuntimeError):
    """A required operating point does not exist for these parameters."""


@dataclass(frozen=True)
class SpectrumResult:
    """Labelled spectrum of a composite system.

    ``energies`` ascend with the ground state at zero.  ``labels[k]`` is the
    bare-product index tuple assigned to eigenstate k by maximum squared
    overlap (injective assignment); ``overlaps[k]`` the squared overlap of
    that assignment; assignments below 0.5 are flagged hybridized.
    ``matrix_elements`` caches requested operators in the eigenbasis.
    """

    energies: np.ndarray
    labels: tuple
    overlaps: np.ndarray
    dims: tuple[int, ...]
    matrix_elements: dict = field(default_factory=dict)

    def index_of(self, label: Sequence[int]) -> int:
        label = tuple(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpectralError(f"no eigenstate labelled {label}") from None

    def energy_of(self, label: Sequence[int]) -> float:
        return float(self.energies[self.index_of(label)])

    def is_hybridized(self, label: Sequence[int]) -> bool:
        return bool(self.overlaps[self.index_of(label)] < HYBRIDIZED_THRESHOLD)

    def transition(self, lo: Sequence[int], hi: Sequence[int]) -> float:
        return self.energy_of(hi) - self.energy_of(lo)


@dataclass(frozen=True)
class OperatingPoint:
    """Coupler turn-on / turn-off fluxes and mode frequencies (GHz, rad)."""

    phi_on: Optional[float] = None
    omega_on: Optional[float] = None
    phi_off: Optional[float] = None
    omega_off: Optional[float] = None
    mode_gap_at_off: Optional[float] = None


def _greedy_assignment(overlap_sq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Injective eigenstate <-> basis-state matching, largest overlaps first.

    Ties are broken deterministically by (eigenstate, basis) index order.
    """
    N = overlap_sq.shape[0]
    flat = np.argsort(-overlap_sq, axis=None, kind="stable")
    eig_of_basis = np.full(N, -1, dtype=int)
    basis_of_eig = np.full(N, -1, dtype=int)
    assigned = 0
    for idx in flat:
        b, k = np.unravel_index(idx, overlap_sq.shape)
        if eig_of_basis[b] >= 0 or basis_of_eig[k] >= 0:
            continue
        eig_of_basis[b] = k
        basis_of_eig[k] = b
        assigned += 1
        if assigned == N:
            break
    return basis_of_eig, eig_of_basis


def diagonalize_labelled(
    system: CompositeSystem,
    operators: Optional[dict] = None,
) -> SpectrumResult:
    """Diagonalize a composite and label eigenstates by bare products.

    Assignment is greedy in descending squared overlap with injectivity
    enforced; any assignment with overlap below 0.5 is reported as
    hybridized rather than guessed further.
    """
    evals, vecs = canonical_eigh(system.hamiltonian)
    evals = evals - evals[0]
    overlap_sq = np.abs(vecs) ** 2  # rows: basis, cols: eigenstates
    basis_of_eig, _ = _greedy_assignment(overlap_sq)
    labels = tuple(np.unravel_index(b, system.dims) for b in basis_of_eig)
    overlaps = overlap_sq[basis_of_eig, np.arange(len(evals))]
    mels = {}
    ops = operators or {}
    for name, op in ops.items():
        mels[name] = vecs.conj().T @ np.asarray(op) @ vecs
    return SpectrumResult(
        energies=evals,
        labels=labels,
        overlaps=overlaps,
        dims=system.dims,
        matrix_elements=mels,
    )


# ---------------------------------------------------------------------------
# coupler operating fluxes
# ---------------------------------------------------------------------------

def dtc_mode_frequencies(p: DtcParams, phi: float, n_max: int = 12) -> tuple[float, float]:
    """Lowest two coupler excitation energies at flux ``phi``."""
    H = dtc_hamiltonian(p.at_flux(phi), n_max)
    evals = np.linalg.eigvalsh(H.values)
    return float(evals[1] - evals[0]), float(evals[2] - evals[0])


def _golden_min(f: Callable[[float], float], a: float, b: float, xtol: float) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def find_turnoff_flux(
    p: DtcParams,
    window: tuple[float, float] = (0.15, math.pi - 0.15),
    n_max: int = 12,
    flux_tol: float = FLUX_TOL,
    gap_tol: float = 1e-3,
) -> OperatingPoint:
    """Locate the flux in (0, pi) where the two coupler modes degenerate.

    Returns the flux minimizing the mode gap; the gap must fall below
    ``gap_tol`` (GHz) times max(1, J12-induced avoided crossing scale), or
    the search reports no degeneracy.
    """
    def gap(phi, nm):
        lo, hi = dtc_mode_frequencies(p, phi, nm)
        return hi - lo

    # coarse pass at a reduced charge cutoff (mode gaps converge ~1e-8 by
    # n_max = 8), then refine at the requested cutoff
    coarse = min(n_max, 8)
    phi_c, _ = _golden_min(lambda x: gap(x, coarse), window[0], window[1], 1e-3)
    lo_w = max(window[0], phi_c - 5e-3)
    hi_w = min(window[1], phi_c + 5e-3)
    phi_off, g = _golden_min(lambda x: gap(x, n_max), lo_w, hi_w, flux_tol)
    if g > gap_tol:
        raise InfeasibleDesignError(
            f"no coupler mode degeneracy in ({window[0]:.3f}, {window[1]:.3f}): "
            f"minimum gap {g:.4f} GHz at phi={phi_off:.4f}"
        )
    lo, hi = dtc_mode_frequencies(p, phi_off, n_max)
    return OperatingPoint(
        phi_off=phi_off, omega_off=0.5 * (lo + hi), mode_gap_at_off=hi - lo
    )


def fluxonium_transition(p: FluxoniumParams, lo: int, hi: int, dim: int = 60) -> float:
    evals = np.linalg.eigvalsh(fluxonium_hamiltonian(p, dim).values)
    return float(evals[hi] - evals[lo])


def find_turnon_flux(
    ps: ParameterSet,
    window_halfwidth: float = 1.2,
    n_max: int = 12,
    flux_tol: float = FLUX_TOL,
    resonance_tol: float = 5e-4,
) -> OperatingPoint:
    """Locate the coupler flux near pi where its tunable mode crosses the
    fluxonium plasmon frequency omega_{1,2}.

    The tunable (lower) mode has its sweet-spot minimum at pi; if the mode
    never reaches the plasmon frequency inside the window the design is
    infeasible.  Crossings are refined by bisection to ``flux_tol`` rad.
    """
    f12 = fluxonium_transition(ps.qubits[0], 1, 2)
    coupler = ps.couplers[0]

    def detuning(phi):
        return dtc_mode_frequencies(coupler, phi, n_max)[0] - f12

    d_pi = detuning(math.pi)
    if abs(d_pi) <= resonance_tol:
        return OperatingPoint(phi_on=math.pi, omega_on=f12 + d_pi)
    if d_pi > 0:
        # mode minimum (at pi) sits above the plasmon: no crossing anywhere
        raise InfeasibleDesignError(
            f"coupler tunable mode never reaches the plasmon: minimum detuning "
            f"{d_pi * 1e3:.1f} MHz at phi=pi"
        )
    lo, hi = math.pi - window_halfwidth, math.pi
    if detuning(lo) < 0:
        raise InfeasibleDesignError(
            "coupler tunable mode stays below the plasmon across the window"
        )
    while hi - lo > flux_tol:
        mid = 0.5 * (lo + hi)
        if detuning(mid) > 0:
            lo = mid
        else:
            hi = mid
    phi_on = 0.5 * (lo + hi)
    return OperatingPoint(phi_on=phi_on, omega_on=dtc_mode_frequencies(coupler, phi_on, n_max)[0])


# ---------------------------------------------------------------------------
# effective coupling and the transition manifold
# ---------------------------------------------------------------------------

def effective_coupling(
    ps: ParameterSet,
    levels: tuple[int, int] = (1, 2),
    phi_c: Optional[float] = None,
    fluxonium_dim: int = 60,
) -> float:
    """Dispersive fluxonium-fluxonium coupling mediated by the two coupler
    modes (GHz).

    Uses the two-mode coupler model: with qubit-mode couplings g_m,n the
    second-order exchange is
    g_eff = (g_{j,1} g_{k,2} / 2) * sum_m [ (g_cap - g_ind)/Delta_m^2
            - (g_cap + g_ind)/(omega_c Delta_m) ].
    Raises when a qubit transition is closer than three couplings to the
    coupler modes, where the dispersive form is invalid.
    """
    a, b = levels
    coupler = ps.couplers[0] if phi_c is None else ps.couplers[0].at_flux(phi_c)
    par = dtc_ho_parameters(coupler)
    omega_c = 0.5 * (par.mode_freqs[0] + par.mode_freqs[1])
    g_qc = []
    deltas = []
    for i, q in enumerate(ps.qubits[:2]):
        evals, vecs = canonical_eigh(fluxonium_hamiltonian(q, fluxonium_dim).values)
        from .operators import charge_operator
        from .circuits import fluxonium_basis
        n_op = charge_operator(fluxonium_basis(q, fluxonium_dim)).values
        mel = abs((vecs[:, a].conj() @ n_op @ vecs[:, b]))
        J = ps.couplings[min(i, len(ps.couplings) - 1)].J_qc
        g_qc.append(J * mel * par.n_zpf[i % 2])
        deltas.append(float(evals[b] - evals[a]) - omega_c)
    g_max = max(abs(par.g_ind), abs(par.g_cap), *[abs(g) for g in g_qc])
    for d in deltas:
        if abs(d) < 3 * g_max:
            raise SpectralError(
                f"dispersive formula invalid: |Delta|={abs(d):.4f} GHz < 3*g={3 * g_max:.4f} GHz"
            )
    bracket = sum(
        (par.g_cap - par.g_ind) / d ** 2 - (par.g_cap + par.g_ind) / (omega_c * d)
        for d in deltas
    )
    return float(g_qc[0] * g_qc[1] / 2.0 * bracket)


MAP_CANDIDATES: tuple[tuple[tuple[int, int, int], tuple[int, int, int]], ...] = (
    ((1, 0, 1), (2, 0, 1)),
    ((1, 0, 1), (1, 0, 2)),
    ((1, 0, 1), (1, 1, 1)),
    ((1, 0, 0), (2, 0, 0)),
    ((1, 0, 0), (1, 1, 0)),
    ((0, 0, 1), (0, 0, 2)),
    ((0, 0, 1), (0, 1, 1)),
    ((0, 0, 0), (0, 1, 0)),
)


@dataclass(frozen=True)
class MapTransition:
    initial: tuple[int, int, int]
    final: tuple[int, int, int]
    frequency: float
    drive_element: float
    hybridized: bool


def map_transition_table(
    ps: ParameterSet,
    phi_c: Optional[float] = None,
    K_q: int = 8,
    K_c: int = 6,
    qubit_index: int = 0,
    spectrum: Optional[SpectrumResult] = None,
) -> list[MapTransition]:
    """The eight candidate controlled-phase transitions near the plasmon.

    Each entry carries the dressed transition frequency and the magnitude
    of the effective charge drive element <initial|n_eff|final>.  Label
    ambiguity near strong hybridization is propagated via the flag.
    """
    if phi_c is not None:
        ps = ParameterSet(
            qubits=ps.qubits,
            couplers=(ps.couplers[0].at_flux(phi_c),) + ps.couplers[1:],
            couplings=ps.couplings,
            readout=ps.readout,
            reset=ps.reset,
        )
    system = composite_2q(ps, K_q=K_q, K_c=K_c)
    n_eff = drive_operator(system, ps, qubit_index=qubit_index)
    spec = spectrum or diagonalize_labelled(system, operators={"n_eff": n_eff})
    mel = spec.matrix_elements["n_eff"]
    table = []
    for lo, hi in MAP_CANDIDATES:
        k, l = spec.index_of(lo), spec.index_of(hi)
        table.append(
            MapTransition(
                initial=lo,
                final=hi,
                frequency=float(spec.energies[l] - spec.energies[k]),
                drive_element=float(abs(mel[k, l])),
                hybridized=spec.is_hybridized(lo) or spec.is_hybridized(hi),
            )
        )
    return table
