"""Test states, trial protocol, eta optimization and parameter sweeps.

A *trial* feeds a gate circuit with pbit spikes sampled i.i.d. from the
embedded input state and estimates the output distribution from the spikes
of the output pbits. The network is reset every ``tau_gate + tau_sig``
steps; the first ``tau_gate`` steps of each segment are discarded. Segments
are repeated until at least ``steps_budget`` post-transient steps have been
collected.

Randomness: every trial owns a :class:`numpy.random.SeedSequence` built from
the master seed and a key that identifies the trial (stage, grid point,
angle index, state index). It spawns one stream for the input samples and
one for the neuron draws, so results do not depend on batching or on the
number of worker processes. The key does not include ``eta``, which makes the
eta search compare circuits on common random numbers.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .circuits import CircuitParams, WiredCircuit, build_cnot_circuit, build_one_qubit_circuit
from .engine import BatchRunner, NeuronParams
from .povm import (
    Distribution,
    GateOperator,
    cnot_closed,
    coherence,
    embed,
    fidelity,
    gate_operator,
    phase_gate_closed,
    unitary_error,
)
from .qubit import BlochState, ValidationError, builtin_gate, ket_to_bloch

DEFAULT_SEED = 20240917
_GROUP_DOUBLES = 2_000_000
N_BLOCKS = 10
FAMILIES = ("phase", "cnot")
TARGETS = ("fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c")
CSV_FIELDS = (
    "sweep",
    "gamma",
    "sigma",
    "tau_sig",
    "tau_avr",
    "eta",
    "angle",
    "state_label",
    "F_mean",
    "F_sd",
    "R_mean",
    "R_sd",
    "alpha_deg",
    "segments",
    "seed",
)


# ----------------------------------------------------------------------------
# Test states


@dataclass(frozen=True)
class TestStateSet:
    """Labeled pure test states of ``n`` qubits."""

    __test__ = False  # not a pytest class

    n: int
    labels: tuple[str, ...]
    kets: tuple[np.ndarray, ...]
    states: tuple[BlochState, ...]
    entangled: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.states)

    def distributions(self) -> list[Distribution]:
        return [embed(s) for s in self.states]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown state {label!r}; choose from {', '.join(self.labels)}") from None


def _one_qubit_kets():
    out = [("ket0", np.array([1, 0], dtype=complex)), ("ket1", np.array([0, 1], dtype=complex))]
    for k in range(4):
        out.append((f"eq_k{k}", np.array([1, np.exp(1j * k * np.pi / 2)]) / np.sqrt(2)))
    r3 = np.sqrt(3.0)
    for sign, tag in ((1, "p"), (-1, "m")):
        for k in range(4):
            phase = np.exp(1j * (2 * k + 1) * np.pi / 4)
            ket = np.array([np.sqrt(r3 + sign), phase * np.sqrt(r3 - sign)]) / np.sqrt(2 * r3)
            out.append((f"tet{tag}_k{k}", ket))
    return out


def _two_qubit_kets():
    basis = ("00", "01", "10", "11")
    e = np.eye(4, dtype=complex)
    out = [(f"ket{b}", e[i], False) for i, b in enumerate(basis)]
    for a in range(4):
        for b in range(a + 1, 4):
            entangled = (basis[a], basis[b]) in (("00", "11"), ("01", "10"))
            for k in range(4):
                ket = (e[a] + np.exp(1j * k * np.pi / 2) * e[b]) / np.sqrt(2)
                out.append((f"sup_{basis[a]}_{basis[b]}_k{k}", ket, entangled))
    return out


def test_states(n: int) -> TestStateSet:
    """The 14 one-qubit or 28 two-qubit pure test states.

    One qubit: ``|0>``, ``|1>``, the four equatorial states
    ``(|0> + i^k |1>)/sqrt(2)`` and eight states
    ``(sqrt(sqrt3 +- 1)|0> + e^{i(2k+1)pi/4} sqrt(sqrt3 -+ 1)|1>)/sqrt(2 sqrt3)``.

    Two qubits: the four basis states and ``(|a> + i^k |b>)/sqrt(2)`` for the
    six pairs ``a < b``; pairs ``(00, 11)`` and ``(01, 10)`` are entangled.
    """
    if n == 1:
        items = [(label, ket, False) for label, ket in _one_qubit_kets()]
    elif n == 2:
        items = _two_qubit_kets()
    else:
        raise ValidationError("test states exist for n = 1 and n = 2 only")
    labels, kets, ent = zip(*items)
    return TestStateSet(n, tuple(labels), tuple(kets), tuple(ket_to_bloch(k) for k in kets), tuple(ent))


# ----------------------------------------------------------------------------
# Sampling and estimation


def sample_events(d: Distribution | np.ndarray, T: int, rng: np.random.Generator) -> np.ndarray:
    """``T`` i.i.d. event indices drawn from ``d`` (one uniform draw per step)."""
    p = d.probs if isinstance(d, Distribution) else np.asarray(d, dtype=float)
    cum = np.cumsum(p)
    cum[-1] = 1.0
    return np.minimum(np.searchsorted(cum, rng.random(T), side="right"), p.size - 1)


def events_to_bits(z: np.ndarray, width: int) -> np.ndarray:
    """Binary expansion (most significant first) of event indices, shape ``(..., width)``."""
    z = np.asarray(z)
    shifts = np.arange(width - 1, -1, -1)
    return ((z[..., None] >> shifts) & 1).astype(np.int8)


def bits_to_events(bits: np.ndarray) -> np.ndarray:
    """Inverse of :func:`events_to_bits`."""
    bits = np.asarray(bits, dtype=np.int64)
    width = bits.shape[-1]
    return bits @ (1 << np.arange(width - 1, -1, -1))


def sample_input(d: Distribution, T: int, rng: np.random.Generator) -> np.ndarray:
    """Binary pbit trains ``(T, 2n)``: one event drawn per step, emitted as its bits."""
    return events_to_bits(sample_events(d, T, rng), 2 * d.n)


def estimate_distribution(raster: np.ndarray, output_vertices, window: range | slice) -> Distribution:
    """Joint frequencies of the output pbits over a window of steps.

    Args:
        raster: ``(T, vertex_count)`` spike raster.
        output_vertices: the ``2n`` vertex ids, most significant pbit first.
        window: steps to count.
    """
    raster = np.asarray(raster)
    if isinstance(window, range):
        window = slice(window.start, window.stop, window.step)
    sel = raster[window][:, list(output_vertices)]
    if sel.shape[0] == 0:
        raise ValidationError("estimation window is empty")
    codes = bits_to_events(sel)
    counts = np.bincount(codes, minlength=2 ** sel.shape[1])
    return Distribution.from_vector(counts / counts.sum())


# ----------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SweepConfig:
    """Everything needed to reproduce a sweep.

    Attributes:
        target: sweep name (``fig2a``..``fig3c``); ``fig2*`` use the phase gate,
            ``fig3*`` the CNOT gate.
        gamma_list, sigma_list, tau_sig_list: grid axes (Cartesian product).
        tau_avr: synaptic averaging length.
        steps_budget: post-transient steps per trial.
        angles: phase-gate angles in radians (ignored for CNOT).
        eta_grid: candidate inhibition levels.
        eta_budget: steps per trial during the eta search.
        master_seed: root of all random streams.
        states: labels of the test states to use (empty means all).
        layout: 1-qubit circuit layout.
    """

    target: str = "fig2a"
    gamma_list: tuple[float, ...] = (1.0,)
    sigma_list: tuple[float, ...] = (0.0,)
    tau_sig_list: tuple[int, ...] = (30,)
    tau_avr: int = 2
    steps_budget: int = 10_000
    angles: tuple[float, ...] = tuple(2 * np.pi * k / 36 for k in range(36))
    eta_grid: tuple[float, ...] = tuple(round(0.05 * k, 10) for k in range(41))
    eta_budget: int | None = None
    master_seed: int = DEFAULT_SEED
    states: tuple[str, ...] = ()
    layout: str = "sparse"

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValidationError(f"unknown sweep target {self.target!r}")
        for name in ("gamma_list", "sigma_list", "tau_sig_list", "angles", "eta_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValidationError(f"{name} must not be empty")
        object.__setattr__(self, "states", tuple(self.states))
        if min(self.tau_sig_list) < 1:
            raise ValidationError("tau_sig must be >= 1")
        if self.steps_budget < max(self.tau_sig_list):
            raise ValidationError("steps_budget must be at least tau_sig")
        if self.tau_avr < 1:
            raise ValidationError("tau_avr must be >= 1")
        if min(self.gamma_list) < 0 or min(self.sigma_list) < 0 or min(self.eta_grid) < 0:
            raise ValidationError("gamma, sigma and eta must be nonnegative")

    @property
    def family(self) -> str:
        return "phase" if self.target.startswith("fig2") else "cnot"

    @property
    def n_qubits(self) -> int:
        return 1 if self.family == "phase" else 2

    @property
    def search_budget(self) -> int:
        return self.eta_budget or self.steps_budget

    def to_text(self) -> str:
        """Serialize in the key-value format read by :func:`parse_config`."""
        lines = [
            f"target = {self.target}",
            f"gamma = {_join(self.gamma_list)}",
            f"sigma = {_join(self.sigma_list)}",
            f"tau_sig = {_join(self.tau_sig_list)}",
            f"tau_avr = {self.tau_avr}",
            f"steps_budget = {self.steps_budget}",
            f"angles = {_join(self.angles)}",
            "angle_unit = rad",
            f"eta_grid = {_join(self.eta_grid)}",
            f"seed = {self.master_seed}",
            f"layout = {self.layout}",
        ]
        if self.eta_budget is not None:
            lines.append(f"eta_budget = {self.eta_budget}")
        if self.states:
            lines.append(f"states = {', '.join(self.states)}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        """One-line description used in output headers."""
        return self.to_text().strip().replace("\n", "; ")


def _join(values) -> str:
    return ", ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


def preset(target: str, **overrides) -> SweepConfig:
    """Default grid of each named sweep."""
    grids = {
        "fig2a": dict(gamma_list=(0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0)),
        "fig2b": dict(sigma_list=(0.0, 0.1, 0.2, 0.3)),
        "fig2c": dict(tau_sig_list=(1, 2, 5, 10, 20, 30, 50)),
        "fig3a": dict(gamma_list=(0.0, 0.25, 0.5, 1.0, 1.5, 2.0), tau_avr=4, angles=(0.0,)),
        "fig3b": dict(sigma_list=(0.0, 0.1, 0.2, 0.3), tau_avr=4, angles=(0.0,)),
        "fig3c": dict(tau_sig_list=(1, 2, 5, 10, 20, 30, 50), tau_avr=4, angles=(0.0,)),
    }
    if target not in grids:
        raise ValidationError(f"unknown sweep target {target!r}")
    kw = dict(target=target)
    kw.update(grids[target])
    kw.update(overrides)
    return SweepConfig(**kw)


class ConfigError(ValidationError):
    """Malformed configuration file; the message names the offending line."""


_KEYS = {
    "target",
    "gamma",
    "sigma",
    "tau_sig",
    "tau_avr",
    "steps_budget",
    "angles",
    "angle_count",
    "angle_unit",
    "eta_grid",
    "eta_budget",
    "seed",
    "states",
    "layout",
}


def _parse_floats(text: str) -> list[float]:
    """Comma-separated numbers, or an inclusive range ``start:stop:step``."""
    text = text.strip()
    if ":" in text and "," not in text:
        start, stop, stepv = (float(x) for x in text.split(":"))
        if stepv <= 0:
            raise ValueError("range step must be positive")
        count = int(math.floor((stop - start) / stepv + 1e-9)) + 1
        return [round(start + k * stepv, 12) for k in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def parse_config(text: str) -> SweepConfig:
    """Read a sweep configuration from ``key = value`` lines.

    ``#`` starts a comment. Unset keys fall back to the preset of ``target``.
    List values are comma separated; ``gamma``, ``sigma`` and ``eta_grid``
    also accept ``start:stop:step``. Angles are given either explicitly
    (``angles`` with ``angle_unit = deg`` or ``rad``) or as ``angle_count``
    evenly spaced values over a full turn.
    """
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        raw[key] = (lineno, value)

    def get(key, conv):
        lineno, value = raw[key]
        try:
            return conv(value)
        except (ValueError, ValidationError) as exc:
            raise ConfigError(f"line {lineno}: invalid value for {key!r}: {exc}") from None

    target = get("target", str) if "target" in raw else "fig2a"
    if target not in TARGETS:
        raise ConfigError(f"line {raw['target'][0]}: unknown target {target!r}")
    kw: dict = {}
    if "gamma" in raw:
        kw["gamma_list"] = tuple(get("gamma", _parse_floats))
    if "sigma" in raw:
        kw["sigma_list"] = tuple(get("sigma", _parse_floats))
    if "tau_sig" in raw:
        kw["tau_sig_list"] = tuple(get("tau_sig", lambda v: [int(x) for x in v.split(",")]))
    if "tau_avr" in raw:
        kw["tau_avr"] = get("tau_avr", int)
    if "steps_budget" in raw:
        kw["steps_budget"] = get("steps_budget", int)
    if "eta_budget" in raw:
        kw["eta_budget"] = get("eta_budget", int)
    if "eta_grid" in raw:
        kw["eta_grid"] = tuple(get("eta_grid", _parse_floats))
    if "seed" in raw:
        kw["master_seed"] = get("seed", int)
    if "layout" in raw:
        kw["layout"] = get("layout", str)
    if "states" in raw:
        kw["states"] = tuple(get("states", lambda v: [s.strip() for s in v.split(",") if s.strip()]))
    unit = get("angle_unit", str) if "angle_unit" in raw else "rad"
    if unit not in ("deg", "rad"):
        raise ConfigError(f"line {raw['angle_unit'][0]}: angle_unit must be 'deg' or 'rad'")
    if "angles" in raw and "angle_count" in raw:
        raise ConfigError(f"line {raw['angle_count'][0]}: give either 'angles' or 'angle_count'")
    if "angles" in raw:
        vals = get("angles", _parse_floats)
        kw["angles"] = tuple(np.radians(vals)) if unit == "deg" else tuple(vals)
    if "angle_count" in raw:
        count = get("angle_count", int)
        kw["angles"] = tuple(2 * np.pi * k / count for k in range(count))
    try:
        cfg = preset(target, **kw)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if cfg.states:
        known = test_states(cfg.n_qubits).labels
        for s in cfg.states:
            if s not in known:
                raise ConfigError(f"line {raw['states'][0]}: unknown state {s!r}")
    return cfg


# ----------------------------------------------------------------------------
# Trials


@dataclass(frozen=True)
class TrialResult:
    """Statistics of one trial.

    ``F_mean``, ``R_mean`` and ``alpha_mean`` (degrees) are computed from the
    distribution pooled over all segments; the standard deviations are taken
    over ten equal blocks of consecutive segments. ``alpha_mean`` is NaN when
    the target is not a pure state.
    """

    F_mean: float
    F_sd: float
    R_mean: float
    R_sd: float
    alpha_mean: float
    eta_used: float
    p_out: Distribution
    segments: int


def segment_count(budget: int, tau_sig: int) -> int:
    """Number of segments so that ``segments * tau_sig >= budget``."""
    return -(-budget // tau_sig)


def _streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    if isinstance(seed, np.random.Generator):
        a, b = seed.spawn(2)
        return a, b
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    # children derived from the spawn key, so reusing a seed object gives the same streams
    a, b = (
        np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (i,), pool_size=seed.pool_size)
        for i in range(2)
    )
    return np.random.default_rng(a), np.random.default_rng(b)


def trial_seed(master_seed: int, key: tuple[int, ...]) -> np.random.SeedSequence:
    """Seed sequence of the trial identified by ``key``."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))


def simulate_counts(
    circuits: list[WiredCircuit],
    p_ins,
    tau_sig: int,
    budget: int,
    neuron: NeuronParams,
    seeds,
) -> np.ndarray:
    """Run a batch of trials and return per-segment output counts.

    All circuits must share one topology (same vertex labels and roles);
    their weights may differ.

    Returns:
        Integer array ``(B, segments, 4**n)``.
    """
    B = len(circuits)
    c0 = circuits[0]
    for c in circuits[1:]:
        if c.spec.labels != c0.spec.labels:
            raise ValidationError("batched circuits must share one topology")
    depth = max(c.spec.max_delay for c in circuits)
    if all(c.spec is c0.spec for c in circuits):
        W = c0.spec.dense_weights(depth)
    else:
        W = np.stack([c.spec.dense_weights(depth) for c in circuits])
    runner = BatchRunner(W, c0.spec, neuron)
    streams = [_streams(s) for s in seeds]
    p_ins = [p.probs if isinstance(p, Distribution) else np.asarray(p) for p in p_ins]
    n_in = len(c0.spec.input_vertices)
    N = c0.spec.vertex_count
    L = c0.tau_gate + tau_sig
    nseg = segment_count(budget, tau_sig)
    width = len(c0.output_order)
    input_pos = {label: k for k, label in enumerate(c0.input_map)}
    in_order = [c0.spec.labels[v] for v in c0.spec.input_vertices]
    if list(c0.input_map) != in_order:
        raise ValidationError("input map must follow the input vertex order")
    for src, shift in c0.passthrough.values():
        if not 0 <= shift <= c0.tau_gate:
            raise ValidationError("pass-through shift must lie within the transient")
    counts = np.zeros((B, nseg, 4**c0.n_qubits), dtype=np.int64)
    group = max(1, min(nseg, _GROUP_DOUBLES // (B * L * N)))
    for first in range(0, nseg, group):
        G = min(group, nseg - first)
        inputs = np.empty((B, G, L, n_in), dtype=np.int8)
        uniforms = np.empty((B, G, L, N))
        for b, (rin, rnn) in enumerate(streams):
            events = sample_events(p_ins[b], G * L, rin)
            inputs[b] = events_to_bits(events, n_in).reshape(G, L, n_in)
            uniforms[b] = rnn.random((G * L, N)).reshape(G, L, N)
        raster = runner.segment(inputs.astype(float), uniforms)
        bits = np.empty((B, G, tau_sig, width), dtype=np.int64)
        for k, label in enumerate(c0.output_order):
            if label in c0.output_map:
                bits[..., k] = raster[:, :, c0.tau_gate :, c0.output_map[label]]
            else:
                src, shift = c0.passthrough[label]
                bits[..., k] = inputs[:, :, c0.tau_gate - shift : L - shift, input_pos[src]]
        codes = bits_to_events(bits)
        size = counts.shape[2]
        flat = codes + size * np.arange(B * G).reshape(B, G, 1)
        counts[:, first : first + G] = np.bincount(flat.ravel(), minlength=B * G * size).reshape(B, G, size)
    return counts


def summarize(counts: np.ndarray, target: np.ndarray, eta: float) -> TrialResult:
    """Figures of merit of one trial from its per-segment counts."""
    n = int(round(math.log(counts.shape[1], 4)))
    total = counts.sum(axis=0)
    p_out = total / total.sum()
    F, R, alpha = _merits(target, p_out)
    blocks = [b.sum(axis=0) for b in np.array_split(counts, min(N_BLOCKS, counts.shape[0]))]
    Fb, Rb = [], []
    for b in blocks:
        q = b / b.sum()
        f, r, _ = _merits(target, q)
        Fb.append(f)
        Rb.append(r)
    return TrialResult(
        F_mean=F,
        F_sd=float(np.std(Fb)),
        R_mean=R,
        R_sd=float(np.std(Rb)),
        alpha_mean=alpha,
        eta_used=eta,
        p_out=Distribution(n, p_out),
        segments=counts.shape[0],
    )


def _merits(target: np.ndarray, q: np.ndarray) -> tuple[float, float, float]:
    F = fidelity(target, q)
    R = coherence(q)
    alpha = float("nan")
    if abs(coherence(target) - 1.0) < 1e-6:
        try:
            alpha = float(np.degrees(unitary_error(target, q)))
        except ValidationError:
            pass
    return float(F), float(R), alpha


def run_trial(circuit: WiredCircuit, p_in: Distribution, cfg: SweepConfig, rng, tau_sig: int | None = None, eta: float = float("nan"), neuron: NeuronParams | None = None) -> TrialResult:
    """Run one trial of ``circuit`` on input ``p_in``.

    Args:
        circuit: the wired gate.
        p_in: input distribution (must match the circuit's qubit count).
        cfg: supplies ``steps_budget`` and, unless ``tau_sig`` is given, the
            first entry of ``tau_sig_list``.
        rng: a :class:`numpy.random.Generator`, a seed sequence or an integer.
        neuron: noise and saturation; defaults to the first grid values of ``cfg``.
    """
    if p_in.n != circuit.n_qubits:
        raise ValidationError("input distribution does not match the circuit")
    tau_sig = tau_sig or cfg.tau_sig_list[0]
    if cfg.steps_budget < tau_sig:
        raise ValidationError("budget is smaller than one segment")
    neuron = neuron or NeuronParams(sigma=cfg.sigma_list[0], gamma=cfg.gamma_list[0])
    counts = simulate_counts([circuit], [p_in], tau_sig, cfg.steps_budget, neuron, [rng])[0]
    return summarize(counts, circuit.gate.apply(p_in), eta)


# ----------------------------------------------------------------------------
# Batched trial families


@dataclass(frozen=True)
class Setting:
    """One grid point of a sweep."""

    family: str
    gamma: float
    sigma: float
    tau_sig: int
    tau_avr: int
    layout: str = "sparse"


@dataclass(frozen=True)
class TrialRecord:
    """A finished trial with its identification."""

    angle: float
    state_label: str
    entangled: bool
    result: TrialResult


def family_gate(family: str, angle: float) -> GateOperator:
    """Event-space operator of a gate family member."""
    if family == "phase":
        return phase_gate_closed(angle)
    if family == "cnot":
        return cnot_closed()
    raise ValidationError(f"unknown gate family {family!r}")


def build_circuit(family: str, angle: float, params: CircuitParams) -> WiredCircuit:
    if family == "phase":
        return build_one_qubit_circuit(family_gate(family, angle), params)
    return build_cnot_circuit(params)


def _run_chunk(args) -> list[TrialResult]:
    setting, eta, budget, master_seed, jobs = args
    params = CircuitParams(
        tau_avr=setting.tau_avr,
        eta=eta,
        gamma=setting.gamma,
        sigma=setting.sigma,
        layout=setting.layout,
    )
    states = test_states(1 if setting.family == "phase" else 2)
    dists = states.distributions()
    circuits, p_ins, seeds, targets = [], [], [], []
    cache: dict = {}
    for angle, si, key in jobs:
        if angle not in cache:
            cache[angle] = build_circuit(setting.family, angle, params)
        c = cache[angle]
        circuits.append(c)
        p_ins.append(dists[si])
        seeds.append(trial_seed(master_seed, key))
        targets.append(c.gate.apply(dists[si]))
    counts = simulate_counts(circuits, p_ins, setting.tau_sig, budget, params.neuron, seeds)
    return [summarize(counts[b], targets[b], eta) for b in range(len(jobs))]


def run_family(
    setting: Setting,
    eta: float,
    angles,
    state_indices,
    budget: int,
    master_seed: int,
    key_prefix: tuple[int, ...],
    workers: int = 1,
) -> list[TrialRecord]:
    """Run every (angle, state) combination of a setting at one eta.

    The trial key is ``key_prefix + (angle index, state index)``, so the
    outcome is independent of ``workers``.
    """
    states = test_states(1 if setting.family == "phase" else 2)
    jobs = [
        (float(a), si, tuple(key_prefix) + (ai, si))
        for ai, a in enumerate(angles)
        for si in state_indices
    ]
    workers = max(1, min(workers, len(jobs)))
    chunks = [jobs[k::workers] for k in range(workers)]
    args = [(setting, eta, budget, master_seed, ch) for ch in chunks]
    if workers == 1:
        outs = [_run_chunk(args[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_chunk, args))
    results: dict = {}
    for ch, out in zip(chunks, outs):
        for job, res in zip(ch, out):
            results[job[2]] = (job, res)
    records = []
    for job in jobs:
        (angle, si, _), res = results[job[2]]
        records.append(TrialRecord(angle, states.labels[si], states.entangled[si], res))
    return records


def optimize_eta(setting: Setting, cfg: SweepConfig, point_index: int = 0, workers: int = 1) -> tuple[float, dict]:
    """Grid value of eta that minimizes the variance of F over states and angles.

    Ties go to the smaller eta. Returns ``(eta_star, {eta: variance})``.
    """
    angles = cfg.angles if setting.family == "phase" else (0.0,)
    idx = _state_indices(cfg, setting.family)
    variances = {}
    for eta in cfg.eta_grid:
        recs = run_family(setting, eta, angles, idx, cfg.search_budget, cfg.master_seed, (1, point_index), workers)
        variances[eta] = float(np.var([r.result.F_mean for r in recs]))
    best = min(cfg.eta_grid, key=lambda e: (variances[e], e))
    return best, variances


def _state_indices(cfg: SweepConfig, family: str) -> list[int]:
    states = test_states(1 if family == "phase" else 2)
    if not cfg.states:
        return list(range(len(states)))
    return [states.index(s) for s in cfg.states]


@dataclass
class SweepPoint:
    """Aggregated result of one grid point."""

    setting: Setting
    eta: float
    records: list = field(default_factory=list)
    eta_variances: dict = field(default_factory=dict)

    def stat(self, name: str) -> tuple[float, float]:
        vals = np.array([getattr(r.result, name) for r in self.records], dtype=float)
        return float(np.nanmean(vals)), float(np.nanstd(vals))

    @property
    def F(self) -> tuple[float, float]:
        return self.stat("F_mean")

    @property
    def R(self) -> tuple[float, float]:
        return self.stat("R_mean")

    @property
    def alpha(self) -> float:
        return self.stat("alpha_mean")[0]


def grid_settings(cfg: SweepConfig) -> list[Setting]:
    return [
        Setting(cfg.family, float(g), float(s), int(t), cfg.tau_avr, cfg.layout)
        for g in cfg.gamma_list
        for s in cfg.sigma_list
        for t in cfg.tau_sig_list
    ]


def sweep(cfg: SweepConfig, workers: int = 1, eta: float | None = None) -> list[SweepPoint]:
    """Run every grid point: optimize eta (unless fixed), then run all trials."""
    points = []
    for pi, setting in enumerate(grid_settings(cfg)):
        if eta is None:
            best, variances = optimize_eta(setting, cfg, pi, workers)
        else:
            best, variances = eta, {}
        angles = cfg.angles if setting.family == "phase" else (0.0,)
        recs = run_family(
            setting, best, angles, _state_indices(cfg, setting.family), cfg.steps_budget, cfg.master_seed, (0, pi), workers
        )
        points.append(SweepPoint(setting, best, recs, variances))
    return points


def sweep_rows(cfg: SweepConfig, points: list[SweepPoint], detail: bool = False) -> list[dict]:
    """CSV rows: one aggregate row per grid point, optionally followed by per-trial rows."""
    rows = []
    for pt in points:
        s = pt.setting
        base = dict(sweep=cfg.target, gamma=s.gamma, sigma=s.sigma, tau_sig=s.tau_sig, tau_avr=s.tau_avr, eta=pt.eta)
        F, Fsd = pt.F
        R, Rsd = pt.R
        segs = pt.records[0].result.segments
        rows.append(
            dict(base, angle="all", state_label="all", F_mean=F, F_sd=Fsd, R_mean=R, R_sd=Rsd,
                 alpha_deg=pt.alpha, segments=segs, seed=cfg.master_seed)
        )
        if detail:
            for r in pt.records:
                res = r.result
                rows.append(
                    dict(base, angle=r.angle if s.family == "phase" else "", state_label=r.state_label,
                         F_mean=res.F_mean, F_sd=res.F_sd, R_mean=res.R_mean, R_sd=res.R_sd,
                         alpha_deg=res.alpha_mean, segments=res.segments, seed=cfg.master_seed)
                )
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_csv(cfg: SweepConfig, rows: list[dict]) -> str:
    """CSV text with a ``# seed=... config=...`` header line."""
    buf = io.StringIO()
    buf.write(f"# seed={cfg.master_seed} config={cfg.summary()}\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in CSV_FIELDS})
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Rows of a CSV written by :func:`format_csv` (header comment skipped)."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def with_overrides(cfg: SweepConfig, **kw) -> SweepConfig:
    return replace(cfg, **kw)


def gate_for(name: str, angle: float | None) -> GateOperator:
    """Event-space operator of a named builtin gate."""
    return gate_operator(builtin_gate(name, angle))
