"""Quantum-side linear algebra in the tensor Pauli coefficient representation.

A density matrix of ``n`` qubits is written as

    rho = sum_mu  rho^mu  (sigma_mu1 x ... x sigma_mun),

with real coefficients ``rho^mu = 2**-n tr[sigma_mu rho]``. The identity
coefficient is therefore always ``2**-n`` (one half per qubit). Multi-indices
are flattened in Kronecker order, so for two qubits ``mu = 4*mu1 + mu2``.

Gates act on coefficient vectors through a real transfer matrix

    L[mu, nu] = 2**-n tr[sigma_mu U sigma_nu U^dagger],

which is the coefficient form of forward evolution ``rho -> U rho U^dagger``.
With this convention ``L(U V) = L(U) @ L(V)`` and the phase gate
``exp(i phi sigma_3 / 2)`` maps onto the closed-form event operator exposed by
:func:`spikegates.povm.phase_gate_closed`.

This is the only module that uses complex arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

SIGMA = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

UNITARY_TOL = 1e-12
NORM_TOL = 1e-10

GATE_NAMES = ("identity", "not", "hadamard", "rot_theta", "phase_phi", "antipode", "cnot")
_ANGLE_GATES = ("rot_theta", "phase_phi")


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def qubit_count(dim: int, base: int) -> int:
    """Return ``n`` such that ``base**n == dim``, or raise."""
    n = 0
    d = dim
    while d > 1 and d % base == 0:
        d //= base
        n += 1
    if d != 1 or n == 0:
        raise ValidationError(f"dimension {dim} is not a positive power of {base}")
    return n


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> np.ndarray:
    """Stack of all ``4**n`` Pauli strings, shape ``(4**n, 2**n, 2**n)``.

    Entry ``k`` corresponds to the multi-index whose base-4 digits (most
    significant first) are the single-qubit Pauli labels.
    """
    mats = []
    for mu in itertools.product(range(4), repeat=n):
        m = np.eye(1, dtype=complex)
        for k in mu:
            m = np.kron(m, SIGMA[k])
        mats.append(m)
    out = np.array(mats)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BlochState:
    """Real Pauli coefficients of an ``n``-qubit density matrix."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (4**self.n,):
            raise ValidationError(f"expected {4**self.n} coefficients, got shape {c.shape}")
        if abs(c[0] - 2.0**-self.n) > 1e-12:
            raise ValidationError(f"identity coefficient must be 2**-n, got {c[0]}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def bloch_vector(self) -> np.ndarray:
        """Coefficients without the identity entry."""
        return self.coeffs[1:]

    def density_matrix(self) -> np.ndarray:
        """Reassemble the ``2**n x 2**n`` density matrix."""
        return np.einsum("k,kij->ij", self.coeffs, pauli_basis(self.n))


@dataclass(frozen=True)
class UnitarySpec:
    """A ``2**n x 2**n`` unitary matrix."""

    n: int
    matrix: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        d = 2**self.n
        if u.shape != (d, d):
            raise ValidationError(f"expected a {d}x{d} matrix, got shape {u.shape}")
        if np.abs(u.conj().T @ u - np.eye(d)).max() > UNITARY_TOL:
            raise ValidationError("matrix is not unitary")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)

    @classmethod
    def from_matrix(cls, matrix) -> "UnitarySpec":
        m = np.asarray(matrix, dtype=complex)
        return cls(qubit_count(m.shape[0], 2), m)


@dataclass(frozen=True)
class TransferMatrix:
    """Real ``4**n x 4**n`` action of a gate on Pauli coefficients."""

    n: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        d = 4**self.n
        if e.shape != (d, d):
            raise ValidationError(f"expected a {d}x{d} matrix, got shape {e.shape}")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        if self.n != other.n:
            raise ValidationError("qubit counts differ")
        return TransferMatrix(self.n, self.entries @ other.entries)


def _as_ket(amplitudes) -> tuple[int, np.ndarray]:
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    n = qubit_count(psi.size, 2)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"ket is not normalized (norm {norm!r})")
    return n, psi


def ket_to_bloch(amplitudes) -> BlochState:
    """Pauli coefficients of the pure state ``|psi><psi|``.

    Args:
        amplitudes: complex vector of length ``2**n`` with unit norm.

    Returns:
        The :class:`BlochState` with ``coeffs[mu] = 2**-n <psi|sigma_mu|psi>``.
    """
    n, psi = _as_ket(amplitudes)
    vals = np.einsum("i,kij,j->k", psi.conj(), pauli_basis(n), psi)
    coeffs = np.real(vals) / 2**n
    coeffs[0] = 2.0**-n
    return BlochState(n, coeffs)


def density_to_bloch(rho) -> BlochState:
    """Pauli coefficients of a Hermitian unit-trace matrix."""
    rho = np.asarray(rho, dtype=complex)
    n = qubit_count(rho.shape[0], 2)
    coeffs = np.real(np.einsum("kij,ji->k", pauli_basis(n), rho)) / 2**n
    coeffs[0] = 2.0**-n
    return BlochState(n, coeffs)


def unitary_to_transfer(U: UnitarySpec) -> TransferMatrix:
    """Transfer matrix ``L[mu, nu] = 2**-n tr[sigma_mu U sigma_nu U^dagger]``."""
    if not isinstance(U, UnitarySpec):
        U = UnitarySpec.from_matrix(U)
    n = U.n
    P = pauli_basis(n)
    u = U.matrix
    conj = u[None] @ P @ u.conj().T[None]
    L = np.real(np.einsum("aij,bji->ab", P, conj)) / 2**n
    return TransferMatrix(n, L)


def evolve_ket(U: UnitarySpec, amplitudes) -> np.ndarray:
    """Apply ``U`` to a ket; the state-side partner of :func:`unitary_to_transfer`."""
    if not isinstance(U, UnitarySpec):
        U = UnitarySpec.from_matrix(U)
    return U.matrix @ np.asarray(amplitudes, dtype=complex)


def rotation_unitary(theta: float) -> UnitarySpec:
    """``exp(i theta sigma_2 / 2)``."""
    return UnitarySpec(1, expm(0.5j * theta * SIGMA[2]))


def phase_unitary(phi: float) -> UnitarySpec:
    """``exp(i phi sigma_3 / 2)``."""
    return UnitarySpec(1, expm(0.5j * phi * SIGMA[3]))


def cnot_unitary() -> UnitarySpec:
    """CNOT with qubit 1 as control and qubit 2 as target."""
    m = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    return UnitarySpec(2, m)


def builtin_unitary(name: str, angle: float | None = None) -> UnitarySpec:
    """Unitary of a named gate (all builtins except ``antipode``)."""
    if name not in GATE_NAMES:
        raise ValidationError(f"unknown gate {name!r}; choose from {', '.join(GATE_NAMES)}")
    if name in _ANGLE_GATES and angle is None:
        raise ValidationError(f"gate {name!r} requires an angle")
    if name == "identity":
        return UnitarySpec(1, np.eye(2))
    if name == "not":
        return UnitarySpec(1, SIGMA[1])
    if name == "hadamard":
        return UnitarySpec(1, (SIGMA[1] + SIGMA[3]) / np.sqrt(2))
    if name == "rot_theta":
        return rotation_unitary(angle)
    if name == "phase_phi":
        return phase_unitary(angle)
    if name == "cnot":
        return cnot_unitary()
    raise ValidationError("the antipode has no unitary representation")


def builtin_gate(name: str, angle: float | None = None) -> TransferMatrix:
    """Transfer matrix of a named gate.

    Args:
        name: one of ``identity``, ``not``, ``hadamard``, ``rot_theta``,
            ``phase_phi``, ``antipode``, ``cnot``.
        angle: rotation angle in radians for ``rot_theta`` and ``phase_phi``.

    The antipode (Bloch-vector negation) is not unitary and is returned
    directly as ``diag(1, -1, -1, -1)``.
    """
    if name == "antipode":
        return TransferMatrix(1, np.diag([1.0, -1.0, -1.0, -1.0]))
    return unitary_to_transfer(builtin_unitary(name, angle))


def apply_transfer(L: TransferMatrix, s: BlochState) -> BlochState:
    """Return the coefficients ``L @ s.coeffs``."""
    if L.n != s.n:
        raise ValidationError(f"transfer matrix acts on {L.n} qubits, state has {s.n}")
    out = L.entries @ s.coeffs
    out[0] = 2.0**-s.n
    return BlochState(s.n, out)


def random_ket(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random normalized ket of ``n`` qubits."""
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def random_unitary(n: int, rng: np.random.Generator) -> UnitarySpec:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    d = 2**n
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return UnitarySpec(n, q)
