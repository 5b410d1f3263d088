"""Spiking circuits that execute gates on pbit-encoded qubits.

Both circuits follow the same pattern:

1. *Embedding*: the dense code (two pbits per qubit) is converted into a
   sparse one-hot code over events by threshold logic with a constant drive
   from a unit vertex. A rectifying self-feedback cancels the residual
   potentials left on the losing event nodes and an additive normalization
   feedback penalizes steps with zero or several winners.
2. *Projection*: event spikes are fed through the gate operator, replicated
   over ``tau_avr`` delays with divided weights (synaptic averaging), and
   read out again as dense pbits.
3. *Gating*: an inhibition-then-excitation pair of edges (an eta-double)
   suppresses projection nodes that are inconsistent with the current event.

Conventions for delays: an edge of delay ``s`` delivers the spike emitted ``s``
steps earlier. Edges from the unit vertex into a layer carry the pipeline
depth of that layer, so that start-up steps (before the first event reaches
the layer) are corrected exactly as steady-state steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .engine import Edge, NetworkSpec, NeuronParams, saturate
from .povm import GateOperator, cnot_closed
from .qubit import ValidationError

EVENTS = ("00", "01", "10", "11")

#: Dense-to-sparse embedding: rows are event nodes 00..11, columns the first
#: pbit, the second pbit and the unit vertex.
EMBED_WEIGHTS = np.array(
    [
        [-1.0, -1.0, 1.0],
        [-1.0, 1.0, 0.0],
        [1.0, -1.0, 0.0],
        [1.0, 1.0, -1.0],
    ]
)

#: Sparse-to-dense projection: row 0 reads the first pbit, row 1 the second.
DENSE_PROJECTION = np.array([[0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0]])

NORM_FORMS = ("balanced", "printed")
LAYOUTS = ("sparse", "direct")


@dataclass(frozen=True)
class CircuitParams:
    """Construction parameters of a gate circuit.

    Attributes:
        tau_avr: synaptic averaging length (number of replicated delays).
        eta: inhibition level of the eta-doubles.
        gamma: saturation parameter of all neurons.
        sigma: noise level of all neurons.
        gate: event-space gate operator (the CNOT builder defaults to CNOT).
        layout: ``"sparse"`` projects onto four sparse projection nodes that
            are relayed to the outputs; ``"direct"`` wires event nodes straight
            to the outputs with the composite dense weights (1-qubit only).
        norm_form: ``"balanced"`` makes the normalization vanish when exactly
            one event fires; ``"printed"`` uses an unnormalized unit weight
            and is kept only for comparison runs.
        gate_delay: delay of the inhibitory leg of the gating eta-doubles;
            ``None`` selects the default of each builder.
    """

    tau_avr: int = 2
    eta: float = 0.0
    gamma: float = 1.0
    sigma: float = 0.0
    gate: GateOperator | None = None
    layout: str = "sparse"
    norm_form: str = "balanced"
    gate_delay: int | None = None

    def __post_init__(self):
        if int(self.tau_avr) != self.tau_avr or self.tau_avr < 1:
            raise ValidationError("tau_avr must be an integer >= 1")
        if self.eta < 0:
            raise ValidationError("eta must be nonnegative")
        if self.layout not in LAYOUTS:
            raise ValidationError(f"layout must be one of {LAYOUTS}")
        if self.norm_form not in NORM_FORMS:
            raise ValidationError(f"norm_form must be one of {NORM_FORMS}")
        if self.gate_delay is not None and self.gate_delay < 1:
            raise ValidationError("gate_delay must be >= 1")
        NeuronParams(sigma=self.sigma, gamma=self.gamma)

    @property
    def neuron(self) -> NeuronParams:
        return NeuronParams(sigma=self.sigma, gamma=self.gamma)

    @property
    def eta_excitation(self) -> float:
        """Excitatory leg ``-S(-eta)`` that follows the inhibition."""
        return float(-saturate(-self.eta, self.gamma))


@dataclass(frozen=True)
class WiredCircuit:
    """A network together with its pbit interface.

    Attributes:
        spec: the network.
        input_map: pbit label to input vertex.
        output_map: pbit label to output vertex (physical outputs only).
        output_order: all output pbit labels, most significant first.
        passthrough: output label to ``(input label, shift)`` for outputs that
            are logical copies of an input delayed by ``shift`` steps.
        tau_gate: transient steps discarded after each reset.
        gate: the event-space operator the circuit implements.
    """

    spec: NetworkSpec
    input_map: dict
    output_map: dict
    output_order: tuple
    tau_gate: int
    gate: GateOperator
    passthrough: dict = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return len(self.input_map) // 2

    def counts(self) -> tuple[int, int]:
        """Number of vertices and edges."""
        return self.spec.vertex_count, len(self.spec.edges)

    def header(self) -> dict:
        nodes, edges = self.counts()
        return {"nodes": nodes, "edges": edges, "tau_gate": self.tau_gate}


class _Wiring:
    """Incremental builder for a labeled network."""

    def __init__(self):
        self.labels: list[str] = []
        self.edges: list[Edge] = []
        self.inputs: list[int] = []
        self.units: list[int] = []
        self.outputs: list[int] = []

    def vertex(self, label: str, role: str = "hidden") -> str:
        self.labels.append(label)
        v = len(self.labels) - 1
        {"input": self.inputs, "unit": self.units, "output": self.outputs}.get(role, []).append(v)
        return label

    def edge(self, src: str, dst: str, delay: int, weight: float) -> None:
        self.edges.append(Edge(self.labels.index(src), self.labels.index(dst), int(delay), float(weight)))

    def spec(self) -> NetworkSpec:
        return NetworkSpec(
            vertex_count=len(self.labels),
            edges=tuple(self.edges),
            unit_vertices=frozenset(self.units),
            input_vertices=tuple(self.inputs),
            output_vertices=tuple(self.outputs),
            labels=tuple(self.labels),
        )


def rectification_weights(W_embed, W_proj, gamma: float) -> np.ndarray:
    """Rectifying feedback that cancels the residuals of losing event nodes.

    Args:
        W_embed: ``(K, P + 1)`` embedding weights; the last column is the unit vertex.
        W_proj: ``(P, K)`` dense code of every event.
        gamma: saturation parameter.

    Returns:
        ``(K, K)`` matrix whose entry ``[i, j]`` is the weight from event node
        ``j`` to event node ``i``: ``-S(M[i, j] - delta_ij)`` where ``M[:, j]``
        are the embedding potentials produced by event ``j``.
    """
    M = embedding_potentials(W_embed, W_proj)
    D = M - np.eye(M.shape[0])
    if not np.all(np.isin(D, (0.0, -1.0))):
        raise ValidationError("embedding potentials of one-hot events must lie in {0, -1} off the winner")
    return -saturate(D, gamma) + 0.0


def embedding_potentials(W_embed, W_proj) -> np.ndarray:
    """``M[i, j]``: potential of event node ``i`` when the dense code of event ``j`` is presented."""
    W_embed = np.asarray(W_embed, dtype=float)
    W_proj = np.asarray(W_proj, dtype=float)
    return W_embed @ np.vstack([W_proj, np.ones((1, W_proj.shape[1]))])


def _add_rectification(w: "_Wiring", nodes, W_embed, W_proj, gamma: float) -> None:
    rec = rectification_weights(W_embed, W_proj, gamma)
    M = embedding_potentials(W_embed, W_proj)
    for j, src in enumerate(nodes):
        for i, dst in enumerate(nodes):
            if M[i, j] < 0:
                w.edge(src, dst, 1, rec[i, j])


def normalization_correction(spikes, strength: float) -> float:
    """Potential change ``strength * (1 - sum(spikes))`` sent to every event node."""
    return float(strength * (1.0 - np.sum(spikes)))


def normalization_strength(gamma: float, n_events: int) -> float:
    """Strength ``-c S(-1)`` with ``c = 1/4`` for 4 events and ``9/16`` for 16 events."""
    c = {4: 0.25, 16: 9.0 / 16.0}[n_events]
    return float(-c * saturate(-1.0, gamma))


def _event_bits(z: int, width: int) -> tuple[int, ...]:
    return tuple((z >> (width - 1 - k)) & 1 for k in range(width))


def _add_normalization(w: _Wiring, nodes, unit: str, gamma: float, form: str, unit_delay: int) -> None:
    strength = normalization_strength(gamma, len(nodes))
    unit_weight = strength if form == "balanced" else strength * len(nodes)
    for src in nodes:
        for dst in nodes:
            w.edge(src, dst, 1, -strength)
    for dst in nodes:
        w.edge(unit, dst, unit_delay, unit_weight)


def _embedding_block(w: _Wiring, first: str, second: str, unit: str, prefix: str, params: CircuitParams) -> list[str]:
    """Dense-to-sparse embedding of one pbit pair with rectification and normalization."""
    nodes = [w.vertex(f"{prefix}_{e}") for e in EVENTS]
    for i, node in enumerate(nodes):
        for src, weight in zip((first, second, unit), EMBED_WEIGHTS[i]):
            w.edge(src, node, 1, weight)
    _add_rectification(w, nodes, EMBED_WEIGHTS, DENSE_PROJECTION, params.gamma)
    _add_normalization(w, nodes, unit, params.gamma, params.norm_form, unit_delay=2)
    return nodes


def _eta_double(w: _Wiring, src: str, dst: str, delay: int, params: CircuitParams) -> None:
    w.edge(src, dst, delay, -params.eta)
    w.edge(src, dst, delay + 1, params.eta_excitation)


def _check_gate(G: GateOperator, n: int) -> GateOperator:
    if not isinstance(G, GateOperator):
        G = GateOperator(n, np.asarray(G, dtype=float))
    if G.n != n:
        raise ValidationError(f"expected a {4**n}x{4**n} gate operator")
    return G


def is_deterministic(G: GateOperator, tol: float = 1e-9) -> bool:
    """True if every entry of ``G`` is within ``tol`` of 0 or 1."""
    e = np.asarray(G.entries)
    return bool(np.all(np.minimum(np.abs(e), np.abs(e - 1)) <= tol))


def build_one_qubit_circuit(G: GateOperator, params: CircuitParams) -> WiredCircuit:
    """Circuit executing a 1-qubit event-space gate ``G``.

    Vertices: inputs ``A``, ``B``; unit ``1``; event nodes ``ev_00..ev_11``;
    in the sparse layout projection nodes ``pr_00..pr_11``; outputs ``A'``, ``B'``.

    Sparse layout: event node ``j`` drives projection node ``k`` with weight
    ``G[k, j] / tau_avr`` at delays ``1..tau_avr``; the winning event node
    inhibits every other projection node with an eta-double (default delay
    ``tau_avr``); ``A'`` and ``B'`` are OR relays of the projection nodes whose
    event has that pbit set. Summed over delays and relays, the composite
    weight from the event layer to the outputs is ``DENSE_PROJECTION @ G``.
    A deterministic gate (every entry 0 or 1, e.g. the phase gate at 0 or pi)
    needs no averaging: each event node drives its image with weight 1 at
    delay ``tau_avr`` only and the eta-doubles carry zero weight, so the
    circuit is an exact delay line at zero noise.

    Direct layout: event nodes drive ``A'`` and ``B'`` with
    ``(DENSE_PROJECTION @ G) / tau_avr`` at delays ``1..tau_avr`` and
    eta-doubles act laterally between event nodes at delays 1 and 2.
    """
    G = _check_gate(G, 1)
    w = _Wiring()
    a = w.vertex("A", "input")
    b = w.vertex("B", "input")
    unit = w.vertex("1", "unit")
    ev = _embedding_block(w, a, b, unit, "ev", params)
    tau = params.tau_avr
    if params.layout == "sparse":
        pr = [w.vertex(f"pr_{e}") for e in EVENTS]
        outs = [w.vertex("A'", "output"), w.vertex("B'", "output")]
        det = is_deterministic(G)
        for j, src in enumerate(ev):
            for k, dst in enumerate(pr):
                for d in range(1, tau + 1):
                    if det:
                        weight = float(G.entries[k, j] > 0.5 and d == tau)
                    else:
                        weight = G.entries[k, j] / tau
                    w.edge(src, dst, d, weight)
        gd = params.gate_delay or tau
        gating = replace(params, eta=0.0) if det else params
        for j, src in enumerate(ev):
            for k, dst in enumerate(pr):
                if k != j:
                    _eta_double(w, src, dst, gd, gating)
        for k, src in enumerate(pr):
            for o, dst in enumerate(outs):
                if DENSE_PROJECTION[o, k]:
                    w.edge(src, dst, 1, 1.0)
    else:
        outs = [w.vertex("A'", "output"), w.vertex("B'", "output")]
        WG = DENSE_PROJECTION @ G.entries
        for j, src in enumerate(ev):
            for o, dst in enumerate(outs):
                for d in range(1, tau + 1):
                    w.edge(src, dst, d, WG[o, j] / tau)
        gd = params.gate_delay or 1
        for j, src in enumerate(ev):
            for k, dst in enumerate(ev):
                if k != j:
                    _eta_double(w, src, dst, gd, params)
    return WiredCircuit(
        spec=w.spec(),
        input_map={"A": w.labels.index(a), "B": w.labels.index(b)},
        output_map={"A'": w.labels.index("A'"), "B'": w.labels.index("B'")},
        output_order=("A'", "B'"),
        tau_gate=4 + tau,
        gate=G,
    )


def partial_projection_weights(G: GateOperator) -> np.ndarray:
    """Weights of the CNOT partial projections.

    Returns:
        Array ``P[o, m, j]`` for output pbit ``o`` (0 = B, 1 = C), context
        ``m`` (the value ``2a + d`` of pbits A and D) and joint event ``j``:
        ``P[o, m, j] = sum of G[k, j]`` over events ``k`` with context ``m``
        and pbit ``o`` set. Summing over ``m`` gives row ``o`` of the dense
        projection of ``G`` onto pbits B and C.
    """
    G = _check_gate(G, 2)
    P = np.zeros((2, 4, 16))
    for k in range(16):
        a, b, c, d = _event_bits(k, 4)
        m = 2 * a + d
        if b:
            P[0, m] += G.entries[k]
        if c:
            P[1, m] += G.entries[k]
    return P


def default_cnot_gate_delay(tau_avr: int) -> int:
    """Gating delay that centers the context on the averaging window."""
    return tau_avr // 2 + 1


def build_cnot_circuit(params: CircuitParams) -> WiredCircuit:
    """Two-stage CNOT circuit.

    Stage I embeds the pairs ``(A, D)`` and ``(B, C)`` into marginal event
    nodes ``ad_xx`` and ``bc_xx``. Stage II forms 16 joint event nodes
    ``j_abcd`` by AND logic with its own rectification and normalization.
    Eight partial projection nodes ``pp_B_m`` and ``pp_C_m`` (``m`` is the
    A,D context) receive the partial projections of the gate; every marginal
    node ``ad_m`` gates the partial nodes of the other contexts through
    eta-doubles. ``B'`` and ``C'`` are OR relays of their partial nodes, and
    ``A'``, ``D'`` are logical copies of ``A`` and ``D`` delayed by the latency
    of the relays, since the gate leaves those pbits invariant.
    """
    G = _check_gate(params.gate if params.gate is not None else cnot_closed(), 2)
    P = partial_projection_weights(G)
    context = np.zeros((4, 16))
    for j in range(16):
        a, _, _, d = _event_bits(j, 4)
        context[2 * a + d, j] = 1.0
    if np.abs(context - _context_mass(G)).max() > 1e-10:
        raise ValidationError("gate must leave the marginal of pbits A and D invariant")

    w = _Wiring()
    ins = {x: w.vertex(x, "input") for x in "ABCD"}
    unit = w.vertex("1", "unit")
    ad = _embedding_block(w, ins["A"], ins["D"], unit, "ad", params)
    bc = _embedding_block(w, ins["B"], ins["C"], unit, "bc", params)

    joint = []
    W_embed = np.zeros((16, 9))
    W_proj = np.zeros((8, 16))
    for z in range(16):
        a, b, c, d = _event_bits(z, 4)
        joint.append(w.vertex(f"j_{a}{b}{c}{d}"))
        W_embed[z, [2 * a + d, 4 + 2 * b + c, 8]] = (1.0, 1.0, -1.0)
        W_proj[[2 * a + d, 4 + 2 * b + c], z] = 1.0
    stage1 = ad + bc
    for z, node in enumerate(joint):
        for col in range(8):
            if W_embed[z, col]:
                w.edge(stage1[col], node, 1, W_embed[z, col])
        w.edge(unit, node, 2, W_embed[z, 8])
    _add_rectification(w, joint, W_embed, W_proj, params.gamma)
    _add_normalization(w, joint, unit, params.gamma, params.norm_form, unit_delay=3)

    tau = params.tau_avr
    gd = params.gate_delay or default_cnot_gate_delay(tau)
    outs = {}
    for o, name in enumerate("BC"):
        partial = [w.vertex(f"pp_{name}_{e}") for e in EVENTS]
        outs[name] = w.vertex(f"{name}'", "output")
        for m, dst in enumerate(partial):
            for j, src in enumerate(joint):
                for d in range(1, tau + 1):
                    w.edge(src, dst, d, P[o, m, j] / tau)
            for m2, src in enumerate(ad):
                if m2 != m:
                    _eta_double(w, src, dst, gd, params)
            w.edge(dst, outs[name], 1, 1.0)
    latency = gd + 2
    return WiredCircuit(
        spec=w.spec(),
        input_map={x: w.labels.index(x) for x in "ABCD"},
        output_map={"B'": w.labels.index("B'"), "C'": w.labels.index("C'")},
        output_order=("A'", "B'", "C'", "D'"),
        tau_gate=5 + tau,
        gate=G,
        passthrough={"A'": ("A", latency), "D'": ("D", latency)},
    )


def _context_mass(G: GateOperator) -> np.ndarray:
    """``[m, j]``: total weight that column ``j`` of ``G`` puts on A,D context ``m``."""
    out = np.zeros((4, 16))
    for k in range(16):
        a, _, _, d = _event_bits(k, 4)
        out[2 * a + d] += G.entries[k]
    return out
