import numpy as np
import pytest

from fdtc.operators import (
    BasisError,
    HilbertBasis,
    OperatorMatrix,
    canonical_eigh,
    charge_basis,
    charge_operator,
    cos_phase,
    destroy,
    embed,
    fock_basis,
    ho_basis,
    phase_operator,
    project_lowest,
    sin_phase,
    tensor,
)


def test_charge_basis_diagonal():
    n = charge_operator(charge_basis(1))
    assert np.allclose(n.values, np.diag([-1.0, 0.0, 1.0]))


def test_charge_basis_dimension_must_be_odd():
    with pytest.raises(BasisError):
        HilbertBasis("charge", 4)


def test_ho_charge_operator_two_level():
    basis = ho_basis(2, phi_zpf=0.8)
    n = charge_operator(basis).values
    n_zpf = 0.5 / 0.8
    expected = np.array([[0, -1j * n_zpf], [1j * n_zpf, 0]])
    assert np.allclose(n, expected)


def test_ho_phase_operator_two_level():
    basis = ho_basis(2, phi_zpf=0.8)
    phi = phase_operator(basis).values
    assert np.allclose(phi, [[0, 0.8], [0.8, 0]])


def test_phase_operator_rejects_charge_basis():
    with pytest.raises(BasisError):
        phase_operator(charge_basis(3))
    # cos/sin are provided as shift combinations instead
    c = cos_phase(charge_basis(3)).values
    s = sin_phase(charge_basis(3)).values
    assert np.allclose(c, c.conj().T)
    assert np.allclose(s, s.conj().T)


def test_charge_shift_convention():
    # e^{i phi} lowers the charge index: <n-1| e^{i phi} |n> = 1
    basis = charge_basis(2)
    c = cos_phase(basis).values
    s = sin_phase(basis).values
    e_ip = c + 1j * s
    assert e_ip[0, 1] == pytest.approx(1.0)
    assert e_ip[1, 0] == pytest.approx(0.0)


def test_commutator_identity_ho():
    basis = ho_basis(40, phi_zpf=1.3)
    phi = phase_operator(basis).values
    n = charge_operator(basis).values
    comm = phi @ n - n @ phi
    block = comm[:30, :30] - 1j * np.eye(30)
    assert np.linalg.norm(block) < 1e-8


def test_lc_spectrum_analytic():
    # 4 E_C n^2 + (E_L/2) phi^2 must give the harmonic ladder sqrt(8 E_C E_L)
    E_C, E_L = 1.1, 0.65
    basis = ho_basis(40, (2 * E_C / E_L) ** 0.25)
    n = charge_operator(basis).values
    phi = phase_operator(basis).values
    H = 4 * E_C * n @ n + 0.5 * E_L * phi @ phi
    evals = np.linalg.eigvalsh(H)
    f = np.sqrt(8 * E_C * E_L)
    ladder = f * (np.arange(10) + 0.5)
    assert np.allclose(evals[:10], ladder, atol=1e-9)


def test_tensor_embedding():
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(embed(X, 0, (2, 2)), np.kron(X, np.eye(2)))
    assert np.allclose(tensor([2, 3]), np.eye(6))


def test_kron_identity_product():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((4, 4))
    lhs = embed(A, 0, (3, 4)) @ embed(B, 1, (3, 4))
    assert np.allclose(lhs, np.kron(A, B), atol=1e-12)


def test_embed_dimension_mismatch():
    with pytest.raises(BasisError):
        embed(np.eye(3), 0, (2, 2))


def test_project_lowest_full_rank_preserves_spectrum():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((12, 12))
    H = A + A.T
    evals, _ = project_lowest(H, 12)
    assert np.allclose(evals, np.linalg.eigvalsh(H), atol=1e-10)


def test_project_lowest_diagonal_selects_smallest():
    H = np.diag([4.0, -1.0, 2.0, 0.5])
    evals, _ = project_lowest(H, 2)
    assert np.allclose(evals, [-1.0, 0.5])


def test_project_lowest_requires_hermitian():
    with pytest.raises(BasisError):
        project_lowest(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)


def test_canonical_eigh_deterministic_gauge():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((8, 8))
    H = A + A.T
    _, v1 = canonical_eigh(H)
    _, v2 = canonical_eigh(H.copy())
    assert np.array_equal(v1, v2)
    # largest-magnitude component of each vector is real positive
    idx = np.argmax(np.abs(v1), axis=0)
    anchors = v1[idx, np.arange(8)]
    assert np.all(anchors.real > 0)
    assert np.allclose(anchors.imag, 0)


def test_operator_matrix_validation():
    basis = fock_basis(3)
    with pytest.raises(BasisError):
        OperatorMatrix(np.eye(4), basis)
    good = OperatorMatrix(np.eye(3), basis)
    assert good.hermiticity_defect() == 0.0
    bad = OperatorMatrix(np.triu(np.ones((3, 3))), basis)
    with pytest.raises(BasisError):
        bad.require_hermitian()


def test_destroy_ladder():
    a = destroy(4)
    num = a.T @ a
    assert np.allclose(np.diag(num), [0, 1, 2, 3])
