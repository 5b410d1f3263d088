"""Tests for the Pauli-basis state and transfer-matrix layer."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikegates.qubit import (
    GATE_NAMES,
    BlochState,
    TransferMatrix,
    UnitarySpec,
    ValidationError,
    apply_transfer,
    builtin_gate,
    builtin_unitary,
    cnot_unitary,
    evolve_ket,
    ket_to_bloch,
    pauli_basis,
    phase_unitary,
    qubit_count,
    random_ket,
    random_unitary,
    unitary_to_transfer,
)

SQ2 = np.sqrt(2.0)


def direct_coeffs(psi):
    """Independent oracle: explicit Kronecker products and traces."""
    psi = np.asarray(psi, dtype=complex)
    n = int(np.log2(psi.size))
    rho = np.outer(psi, psi.conj())
    s = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    out = []
    for idx in np.ndindex(*(4,) * n):
        P = np.array([[1.0]])
        for i in idx:
            P = np.kron(P, s[i])
        out.append(np.trace(P @ rho).real / 2**n)
    return np.array(out)


def direct_transfer(U):
    """Independent oracle for the transfer matrix, forward evolution U rho U^dagger."""
    d = U.shape[0]
    n = int(np.log2(d))
    P = pauli_basis(n)
    return np.array([[np.trace(P[m] @ U @ P[v] @ U.conj().T).real / 2**n for v in range(4**n)] for m in range(4**n)])


class TestKetToBloch:
    def test_zero(self):
        np.testing.assert_allclose(ket_to_bloch([1, 0]).coeffs, [0.5, 0, 0, 0.5], atol=1e-15)

    def test_plus(self):
        np.testing.assert_allclose(ket_to_bloch([1 / SQ2, 1 / SQ2]).coeffs, [0.5, 0.5, 0, 0], atol=1e-15)

    def test_zero_zero(self):
        c = ket_to_bloch([1, 0, 0, 0]).coeffs
        expected = np.zeros(16)
        expected[[0, 3, 12, 15]] = 0.25
        np.testing.assert_allclose(c, expected, atol=1e-15)
        np.testing.assert_allclose(c, direct_coeffs([1, 0, 0, 0]), atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2])
    def test_random_against_oracle(self, n):
        rng = np.random.default_rng(3)
        for _ in range(10):
            psi = random_ket(n, rng)
            np.testing.assert_allclose(ket_to_bloch(psi).coeffs, direct_coeffs(psi), atol=1e-14)

    def test_not_normalized(self):
        with pytest.raises(ValidationError):
            ket_to_bloch([1, 1])

    def test_bad_length(self):
        with pytest.raises(ValidationError):
            ket_to_bloch([1, 0, 0])

    def test_density_round_trip(self):
        s = ket_to_bloch(np.array([1, 1j]) / SQ2)
        rho = s.density_matrix()
        np.testing.assert_allclose(rho, np.array([[1, -1j], [1j, 1]]) / 2, atol=1e-15)


class TestTypes:
    def test_bloch_requires_identity_coefficient(self):
        with pytest.raises(ValidationError):
            BlochState(1, np.array([0.4, 0, 0, 0]))

    def test_unitary_check(self):
        with pytest.raises(ValidationError):
            UnitarySpec.from_matrix(np.array([[1, 1], [0, 1]]))

    def test_qubit_count(self):
        assert qubit_count(16, 4) == 2
        with pytest.raises(ValidationError):
            qubit_count(8, 4)

    def test_transfer_composition_operator(self):
        a = builtin_gate("rot_theta", 0.3)
        b = builtin_gate("phase_phi", 1.1)
        assert isinstance(a @ b, TransferMatrix)


class TestUnitaryToTransfer:
    def test_identity(self):
        np.testing.assert_allclose(unitary_to_transfer(UnitarySpec.from_matrix(np.eye(2))).entries, np.eye(4), atol=1e-15)

    def test_not(self):
        np.testing.assert_allclose(builtin_gate("not").entries, np.diag([1, 1, -1, -1]), atol=1e-15)

    def test_phase_pi(self):
        np.testing.assert_allclose(builtin_gate("phase_phi", np.pi).entries, np.diag([1, -1, -1, 1]), atol=1e-15)

    @pytest.mark.parametrize("name", ["identity", "not", "hadamard", "cnot"])
    def test_against_oracle(self, name):
        U = builtin_unitary(name)
        np.testing.assert_allclose(unitary_to_transfer(U).entries, direct_transfer(U.matrix), atol=1e-14)

    def test_phase_is_z_rotation(self):
        # forward evolution with exp(i phi sigma_3 / 2) turns Bloch vectors by -phi about z
        phi = 0.4
        L = builtin_gate("phase_phi", phi).entries
        c, s = np.cos(phi), np.sin(phi)
        np.testing.assert_allclose(L[1:3, 1:3], [[c, s], [-s, c]], atol=1e-15)
        np.testing.assert_allclose(L[[0, 3]][:, [0, 3]], np.eye(2), atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2])
    def test_composition(self, n):
        rng = np.random.default_rng(5)
        U, V = random_unitary(n, rng), random_unitary(n, rng)
        UV = UnitarySpec.from_matrix(U.matrix @ V.matrix)
        lhs = unitary_to_transfer(UV).entries
        rhs = (unitary_to_transfer(U) @ unitary_to_transfer(V)).entries
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestBuiltinGate:
    def test_names(self):
        assert set(GATE_NAMES) == {"identity", "not", "hadamard", "rot_theta", "phase_phi", "antipode", "cnot"}

    def test_phase_zero_is_identity(self):
        np.testing.assert_allclose(builtin_gate("phase_phi", 0.0).entries, np.eye(4), atol=1e-15)

    def test_antipode(self):
        np.testing.assert_allclose(builtin_gate("antipode").entries, np.diag([1, -1, -1, -1]))

    def test_cnot_shape(self):
        assert builtin_gate("cnot").entries.shape == (16, 16)

    def test_unknown(self):
        with pytest.raises(ValidationError):
            builtin_gate("toffoli")

    @pytest.mark.parametrize("name", ["rot_theta", "phase_phi"])
    def test_missing_angle(self, name):
        with pytest.raises(ValidationError):
            builtin_gate(name)


class TestApplyTransfer:
    def test_identity(self):
        s = ket_to_bloch(np.array([0.6, 0.8j]))
        np.testing.assert_allclose(apply_transfer(builtin_gate("identity"), s).coeffs, s.coeffs, atol=1e-15)

    def test_not_on_zero(self):
        out = apply_transfer(builtin_gate("not"), ket_to_bloch([1, 0]))
        np.testing.assert_allclose(out.coeffs, [0.5, 0, 0, -0.5], atol=1e-15)

    def test_cnot_on_10(self):
        out = apply_transfer(builtin_gate("cnot"), ket_to_bloch([0, 0, 1, 0]))
        np.testing.assert_allclose(out.coeffs, ket_to_bloch([0, 0, 0, 1]).coeffs, atol=1e-15)

    def test_cnot_unitary_control_first(self):
        np.testing.assert_allclose(cnot_unitary().matrix @ [0, 0, 1, 0], [0, 0, 0, 1])

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            apply_transfer(builtin_gate("cnot"), ket_to_bloch([1, 0]))


@st.composite
def unitary_and_ket(draw):
    n = draw(st.sampled_from([1, 2]))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_unitary(n, rng), random_ket(n, rng)


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(unitary_and_ket())
    def test_evolution_commutes(self, pair):
        U, psi = pair
        lhs = apply_transfer(unitary_to_transfer(U), ket_to_bloch(psi)).coeffs
        rhs = ket_to_bloch(evolve_ket(U, psi)).coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(unitary_and_ket())
    def test_rotation_preserves_norm(self, pair):
        U, psi = pair
        L = unitary_to_transfer(U).entries
        v = ket_to_bloch(psi).coeffs
        assert abs(np.linalg.norm((L @ v)[1:]) - np.linalg.norm(v[1:])) < 1e-10
        np.testing.assert_allclose(L[0], np.eye(len(v))[0], atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_phase_angles_add(self, a, b):
        L = (builtin_gate("phase_phi", a) @ builtin_gate("phase_phi", b)).entries
        np.testing.assert_allclose(L, builtin_gate("phase_phi", a + b).entries, atol=1e-10)

    def test_phase_unitary_matches_exponential(self):
        phi = 0.9
        np.testing.assert_allclose(phase_unitary(phi).matrix, np.diag([np.exp(0.5j * phi), np.exp(-0.5j * phi)]), atol=1e-15)
