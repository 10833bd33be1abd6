"""Basis construction and operator algebra shared by all circuit builders.

All energies are stored as E/h in GHz; fluxes are reduced phases in radians.
Sign convention for the harmonic-oscillator basis, fixed once here so matrix
elements are reproducible::

    phi = phi_zpf * (a + a_dag)
    n   = 1j * n_zpf * (a_dag - a),   n_zpf = 1 / (2 * phi_zpf)

which gives [phi, n] = i.  In the charge basis e^{+i phi} shifts the charge
down by one Cooper pair, so ``cos_phase``/``sin_phase`` are built from shift
matrices and the phase operator itself is undefined.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import eigh

HERMITICITY_TOL = 1e-12

HARMONIC = "harmonic-oscillator"
CHARGE = "charge"
FOCK = "fock"
_KINDS = (HARMONIC, CHARGE, FOCK)


class BasisError(ValueError):
    """Raised for unsupported basis kinds or inconsistent dimensions."""


@dataclass(frozen=True)
class HilbertBasis:
    """A single-mode computational basis.

    Parameters
    ----------
    kind : str
        One of ``"harmonic-oscillator"``, ``"charge"``, ``"fock"``.
    dimension : int
        Hilbert-space dimension (>= 2).  For the charge basis this must be
        odd, spanning integer charges -n_max..+n_max.
    scale : float
        Basis-specific scale: the oscillator zero-point phase spread
        phi_zpf for the HO basis, the charge cutoff n_max for the charge
        basis, unused (0) for a Fock/resonator basis.
    """

    kind: str
    dimension: int
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise BasisError(f"unsupported basis kind: {self.kind!r}")
        if self.dimension < 2:
            raise BasisError(f"basis dimension must be >= 2, got {self.dimension}")
        if self.kind == CHARGE and self.dimension % 2 == 0:
            raise BasisError("charge basis spans -n_max..+n_max, dimension must be odd")

    @property
    def n_max(self) -> int:
        if self.kind != CHARGE:
            raise BasisError("n_max only defined for the charge basis")
        return (self.dimension - 1) // 2


def ho_basis(dimension: int, phi_zpf: float) -> HilbertBasis:
    return HilbertBasis(HARMONIC, dimension, phi_zpf)


def charge_basis(n_max: int) -> HilbertBasis:
    return HilbertBasis(CHARGE, 2 * n_max + 1, float(n_max))


def fock_basis(dimension: int) -> HilbertBasis:
    return HilbertBasis(FOCK, dimension)


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense operator with its basis and unit tag ("GHz" or "dimensionless")."""

    values: np.ndarray
    basis: HilbertBasis
    units: str = "dimensionless"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise BasisError(f"operator must be square, got shape {v.shape}")
        if v.shape[0] != self.basis.dimension:
            raise BasisError(
                f"operator dimension {v.shape[0]} does not match basis "
                f"dimension {self.basis.dimension}"
            )
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def hermiticity_defect(self) -> float:
        """Relative norm of the anti-Hermitian part."""
        v = self.values
        scale = np.linalg.norm(v)
        if scale == 0.0:
            return 0.0
        return np.linalg.norm(v - v.conj().T) / scale

    def require_hermitian(self, tol: float = HERMITICITY_TOL) -> "OperatorMatrix":
        defect = self.hermiticity_defect()
        if defect > tol:
            raise BasisError(f"operator is not Hermitian (defect {defect:.2e} > {tol:.0e})")
        return self


def destroy(dimension: int) -> np.ndarray:
    """Bosonic annihilation operator."""
    return np.diag(np.sqrt(np.arange(1.0, dimension)), 1)


def charge_shift(basis: HilbertBasis) -> np.ndarray:
    """e^{+i phi} in the charge basis: lowers the charge index by one."""
    if basis.kind != CHARGE:
        raise BasisError("charge_shift requires the charge basis")
    return np.diag(np.ones(basis.dimension - 1), 1).astype(complex)


def charge_operator(basis: HilbertBasis) -> OperatorMatrix:
    """Charge (Cooper-pair number) operator n.

    Diagonal with integer entries in the charge basis; i*n_zpf*(a_dag - a)
    in the harmonic-oscillator basis.
    """
    if basis.kind == CHARGE:
        n_max = basis.n_max
        values = np.diag(np.arange(-n_max, n_max + 1.0)).astype(complex)
    elif basis.kind == HARMONIC:
        a = destroy(basis.dimension)
        n_zpf = 0.5 / basis.scale
        values = 1j * n_zpf * (a.T - a)
    else:
        raise BasisError(f"charge operator undefined for basis kind {basis.kind!r}")
    return OperatorMatrix(values, basis)


def phase_operator(basis: HilbertBasis) -> OperatorMatrix:
    """Phase operator phi = phi_zpf (a + a_dag); only in the HO basis.

    The phase of a compact (charge-basis) degree of freedom is not an
    operator; use ``cos_phase``/``sin_phase`` instead.
    """
    if basis.kind != HARMONIC:
        raise BasisError(
            "phase operator is only defined in the harmonic-oscillator basis; "
            "use cos_phase/sin_phase for the charge basis"
        )
    a = destroy(basis.dimension)
    return OperatorMatrix(basis.scale * (a + a.T).astype(complex), basis)


def _ho_phase_function(basis: HilbertBasis, fn, shift: float) -> np.ndarray:
    # Matrix function of the (real symmetric) truncated phase operator.
    phi = basis.scale * (destroy(basis.dimension) + destroy(basis.dimension).T)
    lam, vecs = eigh(phi)
    return (vecs * fn(lam + shift)) @ vecs.T


def cos_phase(basis: HilbertBasis, shift: float = 0.0) -> OperatorMatrix:
    """cos(phi + shift) in either basis."""
    if basis.kind == HARMONIC:
        values = _ho_phase_function(basis, np.cos, shift).astype(complex)
    elif basis.kind == CHARGE:
        s = np.exp(1j * shift) * charge_shift(basis)
        values = 0.5 * (s + s.conj().T)
    else:
        raise BasisError(f"cos_phase undefined for basis kind {basis.kind!r}")
    return OperatorMatrix(values, basis)


def sin_phase(basis: HilbertBasis, shift: float = 0.0) -> OperatorMatrix:
    """sin(phi + shift) in either basis."""
    if basis.kind == HARMONIC:
        values = _ho_phase_function(basis, np.sin, shift).astype(complex)
    elif basis.kind == CHARGE:
        s = np.exp(1j * shift) * charge_shift(basis)
        values = (s - s.conj().T) / 2j
    else:
        raise BasisError(f"sin_phase undefined for basis kind {basis.kind!r}")
    return OperatorMatrix(values, basis)


def number_operator(basis: HilbertBasis) -> OperatorMatrix:
    """Photon number a_dag a for a Fock (resonator) basis."""
    if basis.kind != FOCK:
        raise BasisError("number_operator requires a Fock basis")
    a = destroy(basis.dimension)
    return OperatorMatrix((a.T @ a).astype(complex), basis)


def _as_array(op) -> np.ndarray:
    return op.values if isinstance(op, OperatorMatrix) else np.asarray(op)


def tensor(factors: Sequence) -> np.ndarray:
    """Kronecker product of a list of factors.

    Each factor is an operator (``OperatorMatrix`` or ndarray) or an int,
    the latter standing for an identity of that dimension.
    """
    if not factors:
        raise BasisError("tensor requires at least one factor")
    mats = [np.eye(f) if isinstance(f, (int, np.integer)) else _as_array(f) for f in factors]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def embed(op, slot: int, dims: Sequence[int]) -> np.ndarray:
    """Embed a local operator at ``slot`` of a multi-factor space.

    ``dims`` lists every factor dimension; the operator must match
    ``dims[slot]``.
    """
    a = _as_array(op)
    if not 0 <= slot < len(dims):
        raise BasisError(f"slot {slot} out of range for {len(dims)} factors")
    if a.shape[0] != dims[slot]:
        raise BasisError(
            f"operator dimension {a.shape[0]} does not match slot dimension {dims[slot]}"
        )
    factors: list = [int(d) for d in dims]
    factors[slot] = a
    return tensor(factors)


def canonical_eigh(H) -> tuple[np.ndarray, np.ndarray]:
    """Dense Hermitian eigensolve with a deterministic eigenvector gauge.

    Eigenvalues ascend; each eigenvector is rotated so its largest-magnitude
    component is real and positive, which fixes signs (and phases) even for
    near-degenerate pairs.
    """
    a = _as_array(H)
    evals, vecs = eigh(a)
    idx = np.argmax(np.abs(vecs), axis=0)
    anchors = vecs[idx, np.arange(vecs.shape[1])]
    phases = anchors / np.abs(anchors)
    vecs = vecs / phases[np.newaxis, :]
    return evals, vecs


def project_lowest(H, K: int, others: Iterable = ()) -> tuple[np.ndarray, list[np.ndarray]]:
    """Project onto the K lowest eigenstates of a Hermitian operator.

    Returns the K lowest eigenvalues (ascending, ground state subtracted is
    left to the caller) and each operator in ``others`` expressed in that
    eigenbasis as a K x K matrix.
    """
    a = _as_array(H)
    if K > a.shape[0]:
        raise BasisError(f"cannot keep K={K} levels of a dimension-{a.shape[0]} space")
    defect = np.linalg.norm(a - a.conj().T) / max(np.linalg.norm(a), 1e-300)
    if defect > 1e-10:
        raise BasisError(f"project_lowest requires a Hermitian matrix (defect {defect:.2e})")
    evals, vecs = canonical_eigh(a)
    keep = vecs[:, :K]
    projected = [keep.conj().T @ _as_array(o) @ keep for o in others]
    return evals[:K], projected
