"""Acceptance suite: thirteen criteria in three tiers.

Tier 1 checks the algebra, Tier 2 the deterministic circuit logic at zero
noise and Tier 3 the seeded statistical sweeps. Each criterion is evaluated
once by a cached ``check_N`` function returning ``(passed, detail)``; the
outcomes are printed in the "ACCEPTANCE RESULTS" section of the pytest
summary.
"""

import functools
import math

import numpy as np
import pytest

from spikegates.circuits import (
    DENSE_PROJECTION,
    EMBED_WEIGHTS,
    EVENTS,
    CircuitParams,
    build_cnot_circuit,
    build_one_qubit_circuit,
    embedding_potentials,
)
from spikegates.engine import NetworkState, NeuronParams, iterate_saturation, run, saturate, step
from spikegates.experiments import default_workers, preset, sweep
from spikegates.experiments import test_states as state_set
from spikegates.povm import Distribution, GateOperator, coherence, embed, fidelity, gate_operator, invert
from spikegates.qubit import builtin_gate, ket_to_bloch, random_ket

H = 1 / math.sqrt(3)
GAMMAS = (0.0, 0.5, 1.0, 2.0)
TIER_1_2 = (1, 2, 3, 4, 5, 6, 7, 8)
REFERENCE_F_DETERMINISTIC = 0.97
REFERENCE_F_NOISY = 0.77


def bits_of(z, width):
    return [(z >> (width - 1 - k)) & 1 for k in range(width)]


# ----------------------------------------------------------------------------
# Independent transcriptions of the published closed forms


def printed_phase_gate(phi):
    c, s = math.cos(phi), math.sin(phi)
    return 0.5 * np.array(
        [
            [1 + c, 1 - c, -s, s],
            [1 - c, 1 + c, s, -s],
            [s, -s, 1 + c, 1 - c],
            [-s, s, 1 - c, 1 + c],
        ]
    )


def printed_cnot():
    H1 = 0.25 * np.array([[1, H, 1, H], [-H, 1, -H, 1], [1, H, 1, H], [-H, 1, -H, 1]])
    H2 = 0.25 * np.array([[H, -1, -H, 1], [1, H, -1, -H], [-H, 1, H, -1], [-1, -H, 1, H]])
    J1 = H * np.array([[1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0], [0, -1, 0, 0]])
    J2 = H * np.array([[0, 0, 1, 0], [0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1]])
    return np.block(
        [
            [H1 - J1, H1.T + J2, H2, H2.T],
            [H1.T + J2, H1 - J1, H2.T, H2],
            [-H2, -H2.T, H1 - J2, H1.T + J1],
            [-H2.T, -H2, H1.T + J1, H1 - J2],
        ]
    )


def raw_marginal(v, bits, width=4):
    out = np.zeros(2 ** len(bits))
    for z, pz in enumerate(v):
        code = 0
        for b in bits:
            code = 2 * code + ((z >> (width - 1 - b)) & 1)
        out[code] += pz
    return out


# ----------------------------------------------------------------------------
# Tier 1


@functools.cache
def check_1():
    dev = max(
        np.abs(gate_operator(builtin_gate("phase_phi", phi)).entries - printed_phase_gate(phi)).max()
        for phi in 2 * np.pi * np.arange(36) / 36
    )
    return dev <= 1e-12, f"max entry deviation {dev:.2e} over 36 angles (tol 1e-12)"


@functools.cache
def check_2():
    dev = np.abs(gate_operator(builtin_gate("cnot")).entries - printed_cnot()).max()
    return dev <= 1e-12, f"max entry deviation {dev:.2e} (tol 1e-12)"


@functools.cache
def check_3():
    rng = np.random.default_rng(3)
    round_trip = max(
        np.abs(invert(embed(s)).coeffs - s.coeffs).max()
        for n in (1, 2)
        for s in (ket_to_bloch(random_ket(n, rng)) for _ in range(100))
    )
    purity, excess, worst = 0.0, {1: -np.inf, 2: -np.inf}, {}
    for n in (1, 2):
        for label, p in zip(state_set(n).labels, state_set(n).distributions()):
            purity = max(purity, abs(coherence(p) - 1))
            e = p.probs.max() - 2.0 ** (1 - 2 * n)
            if e > excess[n]:
                excess[n], worst[n] = e, (label, p.probs.max())
    ok_bound = all(excess[n] <= 1e-9 for n in (1, 2))
    passed = round_trip <= 1e-12 and purity <= 1e-9 and ok_bound
    detail = (
        f"round trip {round_trip:.1e}, |R-1| {purity:.1e}, "
        f"max p - 2^(1-2n): n=1 {excess[1]:+.3f}, n=2 {excess[2]:+.4f} ({worst[2][0]} has p={worst[2][1]:.4f} > 1/8)"
    )
    return passed, detail


@functools.cache
def check_4():
    rng = np.random.default_rng(4)
    G = gate_operator(builtin_gate("cnot"))
    dev = 0.0
    for _ in range(50):
        p = Distribution.from_vector(rng.dirichlet(np.ones(16)))
        dev = max(dev, np.abs(p.marginal((0, 3)) - raw_marginal(G.apply(p), (0, 3))).max())
    return dev <= 1e-10, f"max marginal change of pbits A, D {dev:.2e} (tol 1e-10)"


@functools.cache
def check_5():
    value = iterate_saturation(1.0, 1.0, 100) * math.sqrt(1 + 2 / 3 * 100)
    return abs(value - 1) <= 0.05, f"S^100(1) sqrt(1 + 200/3) = {value:.4f} (tol 0.05)"


# ----------------------------------------------------------------------------
# Tier 2


def circuit_outputs(c, inputs, raster):
    """Output pbits in ``output_order``, resolving pass-through copies."""
    labels = list(c.input_map)
    T = len(inputs)
    cols = []
    for name in c.output_order:
        if name in c.passthrough:
            src, shift = c.passthrough[name]
            col = np.zeros(T, dtype=int)
            col[shift:] = inputs[: T - shift, labels.index(src)]
        else:
            col = raster[:, c.output_map[name]]
        cols.append(col)
    return np.array(cols).T


@functools.cache
def check_6():
    failures = []
    for gamma in GAMMAS:
        neuron = NeuronParams(0.0, gamma)
        c = build_one_qubit_circuit(gate_operator(builtin_gate("phase_phi", 0.4)), CircuitParams(gamma=gamma, eta=0.5))
        ev = [c.spec.index(f"ev_{e}") for e in EVENTS]
        for z in range(4):
            raster = run(c.spec, np.tile(bits_of(z, 2), (40, 1)), 40, np.random.default_rng(0), neuron)
            if not np.array_equal(raster[c.tau_gate :, ev], np.tile(np.eye(4)[z], (40 - c.tau_gate, 1))):
                failures.append(("1q", gamma, z))
        c = build_cnot_circuit(CircuitParams(tau_avr=4, gamma=gamma, eta=0.5))
        ad = [c.spec.index(f"ad_{e}") for e in EVENTS]
        bc = [c.spec.index(f"bc_{e}") for e in EVENTS]
        joint = [c.spec.index("j_" + "".join(map(str, bits_of(z, 4)))) for z in range(16)]
        for z in range(16):
            a, b, cc, d = bits_of(z, 4)
            raster = run(c.spec, np.tile([a, b, cc, d], (40, 1)), 40, np.random.default_rng(0), neuron)
            post = raster[c.tau_gate :]
            want = [(ad, np.eye(4)[2 * a + d]), (bc, np.eye(4)[2 * b + cc]), (joint, np.eye(16)[z])]
            if not all(np.array_equal(post[:, nodes], np.tile(w, (len(post), 1))) for nodes, w in want):
                failures.append(("cnot", gamma, z))
    checked = len(GAMMAS) * (4 + 16)
    return not failures, f"{checked - len(failures)}/{checked} patterns select their event node, gamma in {GAMMAS}"


def _one_qubit_rectification(gamma, rng):
    c = build_one_qubit_circuit(gate_operator(builtin_gate("phase_phi", 0.9)), CircuitParams(gamma=gamma, eta=0.5))
    ev = [c.spec.index(f"ev_{e}") for e in EVENTS]
    M = embedding_potentials(EMBED_WEIGHTS, DENSE_PROJECTION)
    z = rng.integers(0, 4, 300)
    state = NetworkState.fresh(c.spec)
    dev = 0.0
    for t in range(300):
        step(c.spec, state, bits_of(z[t], 2), rng, NeuronParams(0.0, gamma))
        if t >= 3:
            # the residual depends on the latest event only: the previous one left no trace
            j = z[t - 1]
            dev = max(dev, np.abs(state.u[ev] - saturate(M[:, j] - np.eye(4)[j], gamma)).max())
    return dev


def _cnot_rectification(gamma, rng):
    c = build_cnot_circuit(CircuitParams(tau_avr=4, gamma=gamma, eta=0.5))
    spec = c.spec
    ad = [spec.index(f"ad_{e}") for e in EVENTS]
    bc = [spec.index(f"bc_{e}") for e in EVENTS]
    joint = [spec.index("j_" + "".join(map(str, bits_of(z, 4)))) for z in range(16)]
    M = embedding_potentials(EMBED_WEIGHTS, DENSE_PROJECTION)
    z = rng.integers(0, 16, 200)
    state = NetworkState.fresh(spec)
    dev, prev = 0.0, None
    for t in range(200):
        X = step(spec, state, bits_of(z[t], 4), rng, NeuronParams(0.0, gamma))
        if t >= 4:
            a, b, cc, d = bits_of(z[t - 1], 4)
            for nodes, m in ((ad, 2 * a + d), (bc, 2 * b + cc)):
                dev = max(dev, np.abs(state.u[nodes] - saturate(M[:, m] - np.eye(4)[m], gamma)).max())
            m_ad, m_bc = int(np.argmax(prev[ad])), int(np.argmax(prev[bc]))
            pot = np.array(
                [(2 * p + s == m_ad) + (2 * q + r == m_bc) - 1.0 for p, q, r, s in (bits_of(k, 4) for k in range(16))]
            )
            win = np.eye(16)[int(np.argmax(pot))]
            dev = max(dev, np.abs(state.u[joint] - saturate(pot - win, gamma)).max())
            if not np.array_equal(X[joint], win):
                dev = math.inf
        prev = X
    return dev


@functools.cache
def check_7():
    rng = np.random.default_rng(7)
    devs = {g: max(_one_qubit_rectification(g, rng), _cnot_rectification(g, rng)) for g in (0.5, 1.0, 2.0)}
    worst = max(devs.values())
    return worst <= 1e-12, (
        f"largest trace of the previous event in any embedding residual {worst:.1e} "
        "for gamma in (0.5, 1, 2), 1-qubit and both CNOT stages"
    )


def _identity_end_to_end(c, n, neuron, T=60):
    """Worst fidelity and the latest settling step over all point-mass inputs."""
    width = 2 * n
    worst_F, latest = 1.0, 0
    for z in range(4**n):
        inputs = np.tile(bits_of(z, width), (T, 1))
        raster = run(c.spec, inputs, T, np.random.default_rng(z), neuron)
        out = circuit_outputs(c, inputs, raster)
        settled = [t for t in range(T) if np.array_equal(out[t:], inputs[t:])]
        latest = max(latest, settled[0] if settled else T)
        codes = out[c.tau_gate :] @ (1 << np.arange(width - 1, -1, -1))
        q = Distribution.from_vector(np.bincount(codes, minlength=4**n) / len(codes))
        worst_F = min(worst_F, fidelity(Distribution.point_mass(n, z), q))
    return worst_F, latest


@functools.cache
def check_8():
    rows, passed = [], True
    for gamma in (0.0, 1.0, 2.0):
        for tau in (2, 4):
            one = build_one_qubit_circuit(gate_operator(builtin_gate("identity")), CircuitParams(tau_avr=tau, gamma=gamma, eta=0.5))
            two = build_cnot_circuit(CircuitParams(tau_avr=tau, gamma=gamma, eta=0.5, gate=GateOperator(2, np.eye(16))))
            for c, n, want in ((one, 1, 4 + tau), (two, 2, 5 + tau)):
                F, latest = _identity_end_to_end(c, n, NeuronParams(0.0, gamma))
                ok = c.tau_gate == want and latest <= c.tau_gate and abs(F - 1) <= 1e-12
                passed &= ok
                rows.append((n, gamma, tau, c.tau_gate, latest, F))
    # the pass-through pbits of the CNOT circuit itself
    cnot = build_cnot_circuit(CircuitParams(tau_avr=4, gamma=1.0, eta=0.5))
    for z in range(16):
        inputs = np.tile(bits_of(z, 4), (40, 1))
        raster = run(cnot.spec, inputs, 40, np.random.default_rng(0), NeuronParams(0.0, 1.0))
        out = circuit_outputs(cnot, inputs, raster)
        passed &= bool(np.array_equal(out[cnot.tau_gate :, [0, 3]], inputs[cnot.tau_gate :, [0, 3]]))
    worst = min(r[5] for r in rows)
    slowest = max(r[4] - r[3] for r in rows)
    return passed, (
        f"min F {worst:.12f}; outputs settle {-slowest} or more steps before tau_gate "
        "(4+tau_avr one qubit, 5+tau_avr CNOT); CNOT pbits A', D' copy A, D"
    )


# ----------------------------------------------------------------------------
# Tier 3


@functools.cache
def point(family, gamma, sigma, tau_sig=30):
    """One seeded sweep point: eta search on the default grid, then 10**4 steps per trial."""
    target = "fig2a" if family == "phase" else "fig3a"
    cfg = preset(target, gamma_list=(gamma,), sigma_list=(sigma,), tau_sig_list=(tau_sig,), eta_budget=2000)
    return sweep(cfg, workers=default_workers())[0]


def describe(pt):
    F, Fsd = pt.F
    return f"F={F:.4f}+/-{Fsd:.4f} R={pt.R[0]:.3f} alpha={pt.alpha:.1f}deg eta={pt.eta:g}"


@functools.cache
def check_9():
    a, b = point("phase", 1.0, 0.0, 30), point("phase", 1.0, 0.0, 50)
    F30, F50 = a.F[0], b.F[0]
    passed = F30 >= 0.90 and F50 - F30 <= 0.02
    return passed, f"tau_sig=30: {describe(a)}; tau_sig=50: F={F50:.4f}; gain {F50 - F30:+.4f} (max 0.02)"


@functools.cache
def check_10():
    pts = {g: point("phase", g, 0.0) for g in (0.0, 0.05, 0.1, 0.25)}
    R = {g: pt.R[0] for g, pt in pts.items()}
    return all(r > 1 for r in R.values()), "R_mean " + ", ".join(f"gamma={g}: {r:.3f}" for g, r in R.items())


@functools.cache
def check_11():
    drops = {}
    for family in ("phase", "cnot"):
        drops[family] = (point(family, 1.0, 0.0).F[0], point(family, 1.0, 0.3).F[0])
    passed = all(f0 - f3 > 0.02 for f0, f3 in drops.values())
    return passed, "; ".join(
        f"{fam}: F(sigma=0)={f0:.4f} F(sigma=0.3)={f3:.4f} drop {f0 - f3:+.4f} (need > 0.02)"
        for fam, (f0, f3) in drops.items()
    )


def cnot_headline():
    det = {g: point("cnot", g, 0.0) for g in (1.0, 1.5)}
    noisy = point("cnot", 1.0, 0.3)
    return det, noisy


@functools.cache
def check_12():
    det, noisy = cnot_headline()
    strict = all(pt.F[0] >= 0.94 and pt.alpha <= 18 for pt in det.values()) and 0.62 <= noisy.F[0] <= 0.92
    summary = "; ".join(f"gamma={g}: {describe(pt)}" for g, pt in det.items())
    summary += f"; sigma=0.3: F={noisy.F[0]:.4f}"
    if strict:
        return True, "strict bounds met; " + summary
    near = all(abs(pt.F[0] - REFERENCE_F_DETERMINISTIC) <= 0.10 for pt in det.values()) and abs(
        noisy.F[0] - REFERENCE_F_NOISY
    ) <= 0.10
    prerequisites = {n: CHECKS[n]()[0] for n in TIER_1_2 + (9, 10, 11, 13)}
    missing = [n for n, ok in prerequisites.items() if not ok]
    downgrade = near and not missing
    state = "downgraded form met" if downgrade else "downgraded form not met"
    why = f"F within 0.10 of 0.97 and 0.77: {'yes' if near else 'no'}"
    if missing:
        why += f"; failing prerequisites {missing}"
    return downgrade, f"strict bounds not met, {state} ({why}); " + summary


@functools.cache
def check_13():
    det, _ = cnot_headline()
    parts, passed = [], True
    for g, pt in det.items():
        ent = np.array([r.result.F_mean for r in pt.records if r.entangled])
        sep = np.array([r.result.F_mean for r in pt.records if not r.entangled])
        diff = abs(ent.mean() - sep.mean())
        limit = 2 * math.sqrt(ent.std() ** 2 + sep.std() ** 2)
        passed &= diff < limit
        parts.append(f"gamma={g}: |{ent.mean():.4f} - {sep.mean():.4f}| = {diff:.4f} < {limit:.4f}")
    return passed, "; ".join(parts)


CHECKS = {n: globals()[f"check_{n}"] for n in range(1, 14)}

TITLES = {
    1: "phase gate operator equals closed form",
    2: "CNOT operator equals block assembly",
    3: "round trip, purity and probability bound of test states",
    4: "CNOT keeps the marginal of pbits A and D",
    5: "saturation decay law",
    6: "embedding truth tables",
    7: "rectification exactness",
    8: "identity gate end to end",
    9: "phase sweep fidelity and plateau",
    10: "overcoherence at small gamma",
    11: "noise degrades fidelity",
    12: "CNOT headline numbers",
    13: "entanglement neutrality",
}


@pytest.mark.parametrize(
    "number",
    [pytest.param(n, marks=pytest.mark.slow) if n >= 9 else n for n in range(1, 14)],
    ids=[f"c{n:02d}" for n in range(1, 14)],
)
def test_criterion(number, acceptance, acceptance_header):
    passed, detail = CHECKS[number]()
    acceptance(number, TITLES[number], passed, detail)
    if number == 12:
        acceptance_header(
            "criterion 12 is evaluated strictly first; if its lower bounds are missed the downgraded form "
            "(fidelity within 0.10 of 0.97 and 0.77, with criteria 1-11 and 13 passing) is applied: " + detail
        )
    print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
    assert passed, detail
