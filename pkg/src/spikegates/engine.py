"""Discrete-time stochastic integrate-and-fire networks on delayed multigraphs.

Every step ``t`` each integrating vertex ``i`` accumulates

    u_i* = u_i + sum_{edges e -> i} w_e X_src(e)(t - delay_e),

fires with probability ``P(u_i*)`` and keeps the saturated residual
``u_i = S(u_i* - X_i)``. ``P`` is the erf-smoothed step around the fixed
threshold 1/2 and ``S(u) = gamma tanh(u / gamma)`` bounds the memory of the
residual potential (``gamma = 0`` resets it every step).

Input vertices replay externally supplied spikes and unit vertices fire every
step; neither integrates. Spike history before ``t = 0`` is all zeros.

The single-network API (:func:`step`, :func:`run`) and the batched kernel
(:class:`BatchRunner`) share one update routine, so both produce the same
raster for the same stream of uniform random numbers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .qubit import ValidationError

U_THRESHOLD = 0.5

ROLE_INPUT = "input"
ROLE_UNIT = "unit"
ROLE_OUTPUT = "output"
ROLE_HIDDEN = "hidden"
_ROLES = (ROLE_INPUT, ROLE_UNIT, ROLE_OUTPUT, ROLE_HIDDEN)


@dataclass(frozen=True)
class NeuronParams:
    """Noise level ``sigma`` and saturation ``gamma`` shared by all neurons."""

    sigma: float = 0.0
    gamma: float = 1.0
    u_thr: float = U_THRESHOLD

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        if self.gamma < 0:
            raise ValidationError("gamma must be nonnegative")
        if self.u_thr != U_THRESHOLD:
            raise ValidationError("the firing threshold is fixed at 1/2")


@dataclass(frozen=True)
class Edge:
    """Synapse delivering the spike of ``src`` emitted ``delay`` steps earlier."""

    src: int
    dst: int
    delay: int
    weight: float

    def __post_init__(self):
        if int(self.delay) != self.delay or self.delay < 1:
            raise ValidationError(f"edge delay must be an integer >= 1, got {self.delay!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Vertices, roles and weighted delayed edges of a network."""

    vertex_count: int
    edges: tuple[Edge, ...]
    unit_vertices: frozenset[int] = frozenset()
    input_vertices: tuple[int, ...] = ()
    output_vertices: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()
    _dense: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "unit_vertices", frozenset(self.unit_vertices))
        object.__setattr__(self, "input_vertices", tuple(self.input_vertices))
        object.__setattr__(self, "output_vertices", tuple(self.output_vertices))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"v{i}" for i in range(self.vertex_count)))
        object.__setattr__(self, "labels", tuple(self.labels))
        n = self.vertex_count
        if len(self.labels) != n or len(set(self.labels)) != n:
            raise ValidationError("labels must be unique, one per vertex")
        for group in (self.unit_vertices, self.input_vertices, self.output_vertices):
            if any(not 0 <= v < n for v in group):
                raise ValidationError("role vertex out of range")
        if set(self.unit_vertices) & set(self.input_vertices):
            raise ValidationError("a vertex cannot be both unit and input")
        sources = set(self.unit_vertices) | set(self.input_vertices)
        for e in self.edges:
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ValidationError(f"edge endpoint out of range: {e}")
            if e.dst in sources:
                raise ValidationError(f"source vertex {self.labels[e.dst]} cannot receive edges")

    @property
    def max_delay(self) -> int:
        return max((e.delay for e in self.edges), default=1)

    @property
    def integrating(self) -> np.ndarray:
        """Boolean mask of vertices that integrate (neither input nor unit)."""
        mask = np.ones(self.vertex_count, dtype=bool)
        mask[list(self.unit_vertices | set(self.input_vertices))] = False
        return mask

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def dense_weights(self, depth: int | None = None) -> np.ndarray:
        """Weights as an array ``W[delay - 1, dst, src]`` (multi-edges summed)."""
        depth = depth or self.max_delay
        if depth < self.max_delay:
            raise ValidationError("depth smaller than the longest delay")
        if depth not in self._dense:
            W = np.zeros((depth, self.vertex_count, self.vertex_count))
            for e in self.edges:
                W[e.delay - 1, e.dst, e.src] += e.weight
            W.setflags(write=False)
            self._dense[depth] = W
        return self._dense[depth]

    def role(self, v: int) -> str:
        if v in self.input_vertices:
            return ROLE_INPUT
        if v in self.unit_vertices:
            return ROLE_UNIT
        if v in self.output_vertices:
            return ROLE_OUTPUT
        return ROLE_HIDDEN

    def to_text(self, header: dict | None = None) -> str:
        """Edge-list dump: ``#`` header, ``vertex id role label`` lines, ``src dst delay weight`` lines."""
        buf = io.StringIO()
        buf.write(f"# vertices={self.vertex_count} edges={len(self.edges)}\n")
        for k, v in (header or {}).items():
            buf.write(f"# {k}={v}\n")
        for v in range(self.vertex_count):
            buf.write(f"vertex {v} {self.role(v)} {self.labels[v]}\n")
        for e in self.edges:
            buf.write(f"{e.src} {e.dst} {e.delay} {e.weight:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "NetworkSpec":
        """Parse the format written by :meth:`to_text`. Inputs and outputs keep file order."""
        roles: dict[int, tuple[str, str]] = {}
        edges = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "vertex":
                    if len(parts) != 4 or parts[2] not in _ROLES:
                        raise ValueError("expected 'vertex <id> <role> <label>'")
                    roles[int(parts[1])] = (parts[2], parts[3])
                else:
                    if len(parts) != 4:
                        raise ValueError("expected 'src dst delay weight'")
                    edges.append(Edge(int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
        n = len(roles)
        if sorted(roles) != list(range(n)):
            raise ValidationError("vertex ids must be 0..N-1")
        return cls(
            vertex_count=n,
            edges=tuple(edges),
            unit_vertices=frozenset(v for v, (r, _) in roles.items() if r == ROLE_UNIT),
            input_vertices=tuple(v for v in range(n) if roles[v][0] == ROLE_INPUT),
            output_vertices=tuple(v for v in range(n) if roles[v][0] == ROLE_OUTPUT),
            labels=tuple(roles[v][1] for v in range(n)),
        )


@dataclass
class NetworkState:
    """Residual potentials and spike history of one network.

    ``history[s - 1]`` holds the spike vector emitted ``s`` steps ago.
    """

    u: np.ndarray
    history: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, spec: NetworkSpec) -> "NetworkState":
        return cls(np.zeros(spec.vertex_count), np.zeros((spec.max_delay, spec.vertex_count)), 0)

    def reset(self) -> None:
        self.u[:] = 0.0
        self.history[:] = 0.0
        self.t = 0


def activation(u, sigma: float):
    """Firing probability ``(1 + erf((u - 1/2) / sigma)) / 2``.

    For ``sigma = 0`` this is the step function with value 1/2 exactly at
    the threshold.
    """
    u = np.asarray(u, dtype=float)
    if sigma > 0:
        # a tiny sigma overflows the argument to +-inf, where erf is exactly +-1
        with np.errstate(over="ignore"):
            return 0.5 * (1.0 + erf((u - U_THRESHOLD) / sigma))
    return np.where(u > U_THRESHOLD, 1.0, np.where(u < U_THRESHOLD, 0.0, 0.5))


def saturate(u, gamma: float):
    """``S(u) = gamma tanh(u / gamma)``, identically zero for ``gamma = 0``."""
    u = np.asarray(u, dtype=float)
    if gamma == 0:
        return np.zeros_like(u)
    return gamma * np.tanh(u / gamma)


def iterate_saturation(u0: float, gamma: float, t: int) -> float:
    """``t``-fold composition of :func:`saturate` starting from ``u0``."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    u = float(u0)
    for _ in range(t):
        u = float(saturate(u, gamma))
    return u


def saturation_decay_law(u0: float, gamma: float, t: int) -> float:
    """Asymptotic envelope ``gamma u0 / sqrt(gamma**2 + 2 t u0**2 / 3)`` of iterated saturation."""
    return gamma * u0 / np.sqrt(gamma**2 + (2.0 / 3.0) * t * u0**2)


def _update(Wf, u, H, uniforms, integ, src_idx, src_vals, params: NeuronParams):
    """One synchronous update for a batch of independent networks.

    Args:
        Wf: weights flattened by :func:`_flatten_weights`, either ``(D*N, N)``
            shared by the batch or ``(B, D*N, N)``, one set per batch index.
        u: residual potentials ``(B, G, N)``; ``G`` networks share weights ``W[b]``.
        H: spike history ``(B, G, D, N)`` with ``H[..., s - 1, :]`` emitted ``s`` steps ago.
        uniforms: ``(B, G, N)`` uniform draws deciding the spikes.
        integ: ``(N,)`` mask of integrating vertices.
        src_idx: indices of source vertices (inputs then units).
        src_vals: ``(B, G, len(src_idx))`` values emitted by the sources.

    Returns:
        ``(X, u_new, H_new)``.
    """
    B, G, D, N = H.shape
    flat = H.reshape(B, G, D * N)
    drive = np.matmul(flat, Wf)
    us = u + drive
    X = (uniforms < activation(us, params.sigma)).astype(float)
    X[..., src_idx] = src_vals
    u_new = np.where(integ, saturate(us - X, params.gamma), 0.0)
    H_new = np.empty_like(H)
    H_new[..., 1:, :] = H[..., :-1, :]
    H_new[..., 0, :] = X
    return X, u_new, H_new


def _flatten_weights(W: np.ndarray) -> np.ndarray:
    """Reshape ``[..., d, i, j]`` weights to ``[..., (d, j), i]`` for a matrix product with the history."""
    if W.ndim == 3:
        D, N, _ = W.shape
        return W.transpose(0, 2, 1).reshape(D * N, N)
    B, D, N, _ = W.shape
    return W.transpose(0, 1, 3, 2).reshape(B, D * N, N)


def _source_layout(spec: NetworkSpec):
    units = sorted(spec.unit_vertices)
    idx = np.array(list(spec.input_vertices) + units, dtype=int)
    return idx, len(units)


def step(spec: NetworkSpec, state: NetworkState, ext, rng: np.random.Generator, params: NeuronParams) -> np.ndarray:
    """Advance ``state`` by one step and return the emitted spike vector.

    ``ext`` lists the spikes of the input vertices in ``spec.input_vertices``
    order. One uniform number is drawn per vertex.
    """
    ext = np.asarray(ext, dtype=float).ravel()
    if ext.size != len(spec.input_vertices):
        raise ValidationError(f"expected {len(spec.input_vertices)} input values, got {ext.size}")
    uniforms = rng.random(spec.vertex_count)
    return _step_with(spec, state, ext, uniforms, params)


def _step_with(spec, state, ext, uniforms, params):
    idx, n_units = _source_layout(spec)
    vals = np.concatenate([ext, np.ones(n_units)])[None]
    X, u, H = _update(
        _flatten_weights(spec.dense_weights(state.history.shape[0])),
        state.u[None, None],
        state.history[None, None],
        uniforms[None, None],
        spec.integrating,
        idx,
        vals[None],
        params,
    )
    state.u = u[0, 0]
    state.history = H[0, 0]
    state.t += 1
    return X[0, 0]


def run(
    spec: NetworkSpec,
    inputs,
    T: int,
    rng: np.random.Generator,
    params: NeuronParams,
    initial_state: NetworkState | None = None,
) -> np.ndarray:
    """Run ``T`` steps and return the raster ``(T, vertex_count)`` of 0/1 spikes.

    ``inputs`` is a ``(T, len(input_vertices))`` binary matrix. The initial
    state is copied, never mutated. Deterministic for a given generator state.
    """
    if T < 1:
        raise ValidationError("T must be at least 1")
    inputs = np.asarray(inputs, dtype=float).reshape(T, len(spec.input_vertices))
    state = initial_state or NetworkState.fresh(spec)
    state = NetworkState(state.u.copy(), state.history.copy(), state.t)
    uniforms = rng.random((T, spec.vertex_count))
    raster = np.zeros((T, spec.vertex_count), dtype=np.int8)
    for t in range(T):
        raster[t] = _step_with(spec, state, inputs[t], uniforms[t], params)
    return raster


def rate_response(
    total_weight: float,
    nu_in: float,
    gamma: float,
    sigma: float,
    T: int,
    rng: np.random.Generator,
) -> float:
    """Empirical firing rate of one neuron driven by Bernoulli(``nu_in``) spikes."""
    if T < 1000:
        raise ValidationError("T must be at least 1000")
    spec = NetworkSpec(2, (Edge(0, 1, 1, total_weight),), input_vertices=(0,), output_vertices=(1,))
    inputs = (rng.random((T, 1)) < nu_in).astype(float)
    raster = run(spec, inputs, T, rng, NeuronParams(sigma=sigma, gamma=gamma))
    return float(raster[1:, 1].mean())


class BatchRunner:
    """Runs a batch of independent networks of identical size in lockstep.

    Each batch member has its own weights (or one shared set), its own
    input stream and its own uniform draws, so results do not depend on how
    trials are grouped into batches.
    """

    def __init__(self, weights: np.ndarray, spec: NetworkSpec, params: NeuronParams):
        W = np.asarray(weights, dtype=float)
        self.spec = spec
        self.params = params
        self.depth = W.shape[-3]
        self.shared = W.ndim == 3
        self.Wf = np.ascontiguousarray(_flatten_weights(W))
        self.integ = spec.integrating
        self.src_idx, self.n_units = _source_layout(spec)

    def segment(self, inputs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Run segments that all start from the reset state.

        Args:
            inputs: ``(B, G, T, n_inputs)`` input spikes; ``G`` independent
                segments per batch member.
            uniforms: ``(B, G, T, N)`` uniform draws.

        Returns:
            Raster ``(B, G, T, N)`` as int8.
        """
        B, G, T, _ = inputs.shape
        N = self.spec.vertex_count
        u = np.zeros((B, G, N))
        H = np.zeros((B, G, self.depth, N))
        ones = np.ones((B, G, self.n_units))
        out = np.zeros((B, G, T, N), dtype=np.int8)
        for t in range(T):
            vals = np.concatenate([inputs[:, :, t], ones], axis=2)
            X, u, H = _update(self.Wf, u, H, uniforms[:, :, t], self.integ, self.src_idx, vals, self.params)
            out[:, :, t] = X
        return out
