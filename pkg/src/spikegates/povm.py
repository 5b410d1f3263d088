"""Probabilistic representation of qubits through a four-outcome POVM.

Each qubit is encoded by a pair of binary variables (pbits). The joint event
``z = 2*a + b`` of the pair ``(a, b)`` has probability

    p^z = sum_mu A[z, mu] rho^mu,

where ``rho^mu`` are the Pauli coefficients of :mod:`spikegates.qubit` and
``A`` is the regular-tetrahedron POVM returned by :func:`default_povm`.
Several qubits use the Kronecker power of ``A``, so the event index of a
2-qubit distribution over pbits ``A, B, C, D`` is ``8a + 4b + 2c + d``
(the first pbit is the most significant bit).

The module also provides the metric ``g`` induced on distribution space and
the derived figures of merit: coherence ``R``, fidelity ``F`` and the unitary
error angle ``alpha``.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .qubit import BlochState, TransferMatrix, ValidationError, qubit_count

ALGEBRA_TOL = 1e-12
PROB_TOL = 1e-9
DEFAULT_REGION_TOL = 0.05

_H = 1.0 / np.sqrt(3.0)


class ConsistencyError(ArithmeticError):
    """Raised when a computed quantity leaves its mathematically allowed range."""


@dataclass(frozen=True)
class Povm:
    """Single-qubit POVM matrix ``A[z, mu]`` and its cached inverse."""

    matrix: np.ndarray
    inverse: np.ndarray
    _powers: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        inv = np.array(self.inverse, dtype=float)
        if m.shape != (4, 4) or inv.shape != (4, 4):
            raise ValidationError("POVM matrix and inverse must be 4x4")
        if np.abs(m @ inv - np.eye(4)).max() > ALGEBRA_TOL:
            raise ValidationError("inverse does not invert the POVM matrix")
        m.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "inverse", inv)

    @classmethod
    def from_matrix(cls, matrix) -> "Povm":
        """Build from a user-supplied matrix; the inverse is computed numerically."""
        m = np.asarray(matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError("POVM matrix must be 4x4")
        try:
            inv = np.linalg.inv(m)
        except np.linalg.LinAlgError:
            raise ValidationError("POVM matrix is singular") from None
        return cls(m, inv)

    def tensor(self, n: int) -> np.ndarray:
        """``A x ... x A`` (``n`` factors)."""
        return self._power("matrix", n)

    def tensor_inverse(self, n: int) -> np.ndarray:
        """``A^-1 x ... x A^-1`` (``n`` factors)."""
        return self._power("inverse", n)

    def _power(self, which: str, n: int) -> np.ndarray:
        key = (which, n)
        if key not in self._powers:
            out = _kron_power(getattr(self, which), n)
            out.setflags(write=False)
            self._powers[key] = out
        return self._powers[key]


def _kron_power(m: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(1)
    for _ in range(n):
        out = np.kron(out, m)
    return out


@lru_cache(maxsize=1)
def default_povm() -> Povm:
    """The tetrahedral POVM.

    Rows are outcomes ``z = 00, 01, 10, 11`` and columns the Pauli labels.
    Its columns are orthogonal, which gives the closed-form inverse
    ``A^-1 = diag(1, 3, 3, 3) A^T``.
    """
    a = 0.5 * np.array(
        [
            [1.0, -_H, -_H, -_H],
            [1.0, _H, _H, -_H],
            [1.0, -_H, _H, _H],
            [1.0, _H, -_H, _H],
        ]
    )
    return Povm(a, np.diag([1.0, 3.0, 3.0, 3.0]) @ a.T)


@dataclass(frozen=True)
class Distribution:
    """Joint probabilities over the ``4**n`` pbit events."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (4**self.n,):
            raise ValidationError(f"expected {4**self.n} probabilities, got shape {p.shape}")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
        if p.min() < -PROB_TOL:
            raise ValidationError(f"negative probability {p.min()!r}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_vector(cls, probs) -> "Distribution":
        p = np.asarray(probs, dtype=float)
        return cls(qubit_count(p.size, 4), p)

    @classmethod
    def point_mass(cls, n: int, event: int) -> "Distribution":
        p = np.zeros(4**n)
        p[event] = 1.0
        return cls(n, p)

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(n, np.full(4**n, 4.0**-n))

    def marginal(self, bits: tuple[int, ...]) -> np.ndarray:
        """Joint probabilities of the selected pbits (0 = most significant).

        The result is indexed with the first selected pbit as most
        significant bit.
        """
        nb = 2 * self.n
        out = np.zeros(2 ** len(bits))
        for z, pz in enumerate(self.probs):
            code = 0
            for b in bits:
                code = 2 * code + ((z >> (nb - 1 - b)) & 1)
            out[code] += pz
        return out


@dataclass(frozen=True)
class GateOperator:
    """Real ``4**n x 4**n`` operator acting on distributions."""

    n: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        d = 4**self.n
        if e.shape != (d, d):
            raise ValidationError(f"expected a {d}x{d} matrix, got shape {e.shape}")
        if np.abs(e.sum(axis=0) - 1.0).max() > 1e-10:
            raise ValidationError("gate operator columns must sum to 1")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def apply(self, d: "Distribution | np.ndarray") -> np.ndarray:
        """Image of a distribution; returned as a raw vector because it may be negative."""
        return self.entries @ _vec(d)


class Region(enum.Enum):
    """Location of a distribution relative to the image of the quantum states."""

    PURE = "pure"
    MIXED = "mixed"
    OVERCOHERED = "overcohered"


def _vec(x) -> np.ndarray:
    if isinstance(x, Distribution):
        return x.probs
    if isinstance(x, BlochState):
        return x.coeffs
    return np.asarray(x, dtype=float)


def _n_of(v: np.ndarray) -> int:
    return qubit_count(v.size, 4)


def embed(s: BlochState, povm: Povm | None = None) -> Distribution:
    """Distribution ``(A x ... x A) rho`` of a state."""
    povm = povm or default_povm()
    p = povm.tensor(s.n) @ s.coeffs
    return Distribution(s.n, p)


def invert_vector(p, povm: Povm | None = None) -> np.ndarray:
    """Pauli coefficients ``(A^-1 x ... x A^-1) p`` of any real vector."""
    povm = povm or default_povm()
    v = _vec(p)
    return povm.tensor_inverse(_n_of(v)) @ v


def invert(d: Distribution, povm: Povm | None = None) -> BlochState:
    """Pauli coefficients of a distribution.

    Defined on every distribution, including those outside the quantum
    image (their Bloch vectors leave the unit ball).
    """
    c = invert_vector(d, povm)
    c[0] = 2.0 ** -d.n
    return BlochState(d.n, c)


def gate_operator(L: TransferMatrix, povm: Povm | None = None) -> GateOperator:
    """Event-space form ``(A x..x A) L (A^-1 x..x A^-1)`` of a transfer matrix."""
    povm = povm or default_povm()
    n = L.n
    return GateOperator(n, povm.tensor(n) @ L.entries @ povm.tensor_inverse(n))


def phase_gate_closed(phi: float) -> GateOperator:
    """Closed form of the 1-qubit phase gate on event space."""
    c, s = np.cos(phi), np.sin(phi)
    m = 0.5 * np.array(
        [
            [1 + c, 1 - c, -s, s],
            [1 - c, 1 + c, s, -s],
            [s, -s, 1 + c, 1 - c],
            [-s, s, 1 - c, 1 + c],
        ]
    )
    return GateOperator(1, m)


def cnot_blocks() -> dict[str, np.ndarray]:
    """The four 4x4 building blocks of the event-space CNOT operator."""
    h = _H
    H1 = 0.25 * np.array([[1, h, 1, h], [-h, 1, -h, 1], [1, h, 1, h], [-h, 1, -h, 1]])
    H2 = 0.25 * np.array([[h, -1, -h, 1], [1, h, -1, -h], [-h, 1, h, -1], [-1, -h, 1, h]])
    J1 = h * np.array([[1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0], [0, -1, 0, 0]])
    J2 = h * np.array([[0, 0, 1, 0], [0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1]])
    return {"H1": H1, "H2": H2, "J1": J1, "J2": J2}


def cnot_closed() -> GateOperator:
    """Event-space CNOT assembled from its 4x4 blocks (control = qubit 1)."""
    b = cnot_blocks()
    H1, H2, J1, J2 = b["H1"], b["H2"], b["J1"], b["J2"]
    m = np.block(
        [
            [H1 - J1, H1.T + J2, H2, H2.T],
            [H1.T + J2, H1 - J1, H2.T, H2],
            [-H2, -H2.T, H1 - J2, H1.T + J1],
            [-H2.T, -H2, H1.T + J1, H1 - J2],
        ]
    )
    return GateOperator(2, m)


def metric_g(p, q, povm: Povm | None = None) -> float:
    """Scalar product induced on distribution space.

    Equals ``tr[rho_p rho_q]`` whenever both arguments are images of quantum
    states and extends bilinearly to arbitrary real vectors.
    """
    a = invert_vector(p, povm)
    b = invert_vector(q, povm)
    if a.shape != b.shape:
        raise ValidationError("arguments have different lengths")
    return float(2 ** _n_of(a) * np.dot(a, b))


def bloch_radius(p, povm: Povm | None = None) -> float:
    """Bloch radius ``r`` with ``r**2 = 2**-n g(p, p) - 2**-2n``."""
    v = _vec(p)
    n = _n_of(v)
    r2 = 2.0**-n * metric_g(v, v, povm) - 4.0**-n
    if r2 < -1e-9:
        raise ConsistencyError(f"negative squared radius {r2!r}")
    return float(np.sqrt(max(r2, 0.0)))


def pure_radius(n: int) -> float:
    """Bloch radius of every pure ``n``-qubit state."""
    return float(np.sqrt(2.0**-n * (1.0 - 2.0**-n)))


def coherence(p, povm: Povm | None = None) -> float:
    """Coherence ``R = r / r_pure``: 1 for pure states, below 1 for mixed ones."""
    v = _vec(p)
    return bloch_radius(v, povm) / pure_radius(_n_of(v))


def fidelity(p, q, povm: Povm | None = None) -> float:
    """Normalized overlap ``g(p, q) / sqrt(g(p, p) g(q, q))``."""
    gpp = metric_g(p, p, povm)
    gqq = metric_g(q, q, povm)
    if gpp <= 0 or gqq <= 0:
        raise ValidationError("fidelity is undefined for a zero-norm argument")
    return metric_g(p, q, povm) / np.sqrt(gpp * gqq)


def unitary_error(p, q, povm: Povm | None = None) -> float:
    """Angle (radians) between the Bloch vectors of a pure target ``p`` and ``q``.

    Computed as ``arccos[(g(p, q) - 2**-n) / (r(q) sqrt(2**n - 1))]`` with the
    argument clamped to ``[-1, 1]``.
    """
    v = _vec(q)
    n = _n_of(v)
    rq = bloch_radius(v, povm)
    if rq == 0.0:
        raise ValidationError("unitary error is undefined for a zero Bloch vector")
    c = (metric_g(p, v, povm) - 2.0**-n) / (rq * np.sqrt(2.0**n - 1.0))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def classify_region(p, tol: float = DEFAULT_REGION_TOL, povm: Povm | None = None) -> Region:
    """Pure, mixed or overcohered according to ``R`` within ``tol``."""
    if tol <= 0:
        raise ValidationError("tolerance must be positive")
    R = coherence(p, povm)
    if abs(R - 1.0) <= tol:
        return Region.PURE
    return Region.MIXED if R < 1.0 else Region.OVERCOHERED


def format_matrix(m, comments: tuple[str, ...] = ()) -> str:
    """Plain-text matrix: ``#`` comment lines, then one row per line."""
    a = np.atleast_2d(np.asarray(m, dtype=float))
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    for row in a:
        buf.write(" ".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def parse_matrix(text: str) -> np.ndarray:
    """Inverse of :func:`format_matrix`."""
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(x) for x in line.split()])
        except ValueError:
            raise ValidationError(f"not a number in line {line!r}") from None
    if len({len(r) for r in rows}) > 1:
        raise ValidationError("rows have different lengths")
    return np.array(rows)
