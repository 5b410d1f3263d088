"""Command-line interface.

Subcommands: ``verify``, ``states``, ``dump-circuit``, ``trial``, ``sweep``
and ``plot``. Exit status is 0 on success, 1 when a check fails and 2 on
usage errors (bad arguments or malformed configuration files).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .circuits import CircuitParams, build_cnot_circuit, build_one_qubit_circuit
from .engine import iterate_saturation, saturation_decay_law
from .povm import (
    Distribution,
    Povm,
    cnot_closed,
    coherence,
    default_povm,
    embed,
    gate_operator,
    invert_vector,
    metric_g,
    phase_gate_closed,
)
from .qubit import ValidationError, builtin_gate, ket_to_bloch, random_ket, random_unitary, unitary_to_transfer

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

ONE_QUBIT_GATES = ("phase", "rot", "identity", "not", "hadamard", "antipode")
GATES = ONE_QUBIT_GATES + ("cnot",)


# node and edge counts of the original circuit drawings, for comparison only
REFERENCE_COUNTS = {1: (10, 62), 2: (38, 1309)}


class UsageError(Exception):
    pass


def _angle(args) -> float:
    value = args.angle
    return float(np.radians(value)) if args.angle_unit == "deg" else float(value)


def _gate(name: str, angle: float | None):
    """Event-space operator of a CLI gate name."""
    if name == "cnot":
        return cnot_closed()
    builtin = {"phase": "phase_phi", "rot": "rot_theta"}.get(name, name)
    if builtin in ("phase_phi", "rot_theta") and angle is None:
        raise UsageError(f"gate {name!r} needs --angle")
    if builtin == "phase_phi":
        return phase_gate_closed(angle)
    return gate_operator(builtin_gate(builtin, angle))


def _circuit(args):
    angle = _angle(args) if args.angle is not None else None
    G = _gate(args.gate, angle)
    params = CircuitParams(
        tau_avr=args.tau_avr,
        eta=args.eta,
        gamma=args.gamma,
        sigma=getattr(args, "sigma", 0.0),
        layout=args.layout,
        norm_form=args.norm_form,
    )
    if args.gate == "cnot":
        return build_cnot_circuit(params)
    return build_one_qubit_circuit(G, params)


def _config_line(args, keys) -> str:
    return " ".join(f"{k}={getattr(args, k)}" for k in keys)


# ----------------------------------------------------------------------------
# verify


def _max_over(values) -> float:
    return float(max(values))


def verification_checks(povm: Povm) -> list[tuple[str, float, float]]:
    """``(name, deviation, tolerance)`` for the algebraic identities of the library.

    A check that raises reports an infinite deviation.
    """
    rng = np.random.default_rng(ex.DEFAULT_SEED)
    A, Ai = povm.matrix, povm.inverse
    angles = 2 * np.pi * np.arange(36) / 36

    def cnot():
        return gate_operator(builtin_gate("cnot"), povm)

    def round_trip(n):
        return _max_over(
            np.abs(invert_vector(embed(s, povm), povm) - s.coeffs).max()
            for s in (ket_to_bloch(random_ket(n, rng)) for _ in range(100))
        )

    def embedded_tests():
        return [embed(s, povm).probs for n in (1, 2) for s in ex.test_states(n).states]

    def bound_excess():
        # positivity of each POVM element gives p <= 2**-n (equal to 2**(1-2n) at n = 1)
        return max(0.0, _max_over(p.max() - 2.0 ** -int(round(np.log(p.size) / np.log(4))) for p in embedded_tests()))

    def marginals():
        G = cnot()
        out = 0.0
        for _ in range(50):
            p = Distribution.from_vector(rng.dirichlet(np.ones(16)))
            out = max(out, np.abs(p.marginal((0, 3)) - _raw_marginal(G.apply(p), (0, 3))).max())
        return out

    def orthogonality():
        out = 0.0
        for n in (1, 2):
            for _ in range(20):
                L = unitary_to_transfer(random_unitary(n, rng)).entries
                out = max(out, np.abs(L.T @ L - np.eye(4**n)).max())
        return out

    def pure_norm():
        ps = [embed(ket_to_bloch(random_ket(n, rng)), povm).probs for n in (1, 2) for _ in range(20)]
        return _max_over(abs(metric_g(p, p, povm) - 1) for p in ps)

    checks = [
        ("povm_inverse", 1e-12, lambda: np.abs(A @ Ai - np.eye(4)).max()),
        ("povm_closed_inverse", 1e-12, lambda: np.abs(Ai - np.diag([1, 3, 3, 3]) @ A.T).max()),
        ("povm_identity_column", 1e-12, lambda: np.abs(A[:, 0] - 0.5).max()),
        ("phase_gate_closed_form", 1e-12, lambda: _max_over(
            np.abs(gate_operator(builtin_gate("phase_phi", phi), povm).entries - phase_gate_closed(phi).entries).max()
            for phi in angles)),
        ("cnot_block_form", 1e-12, lambda: np.abs(cnot().entries - cnot_closed().entries).max()),
        ("cnot_column_sums", 1e-10, lambda: np.abs(cnot().entries.sum(axis=0) - 1).max()),
        ("round_trip_n1", 1e-12, lambda: round_trip(1)),
        ("round_trip_n2", 1e-12, lambda: round_trip(2)),
        ("test_state_purity", 1e-9, lambda: _max_over(abs(coherence(p, povm) - 1) for p in embedded_tests())),
        ("probability_bound", 1e-9, bound_excess),
        ("cnot_marginal_invariance", 1e-10, marginals),
        ("transfer_orthogonality", 1e-10, orthogonality),
        ("metric_pure_norm", 1e-10, pure_norm),
        ("saturation_decay_law", 0.05, lambda: abs(
            iterate_saturation(1.0, 1.0, 100) / saturation_decay_law(1.0, 1.0, 100) - 1)),
    ]
    results = []
    for name, tol, fn in checks:
        try:
            dev = float(fn())
        except (ArithmeticError, ValueError):
            dev = float("inf")
        results.append((name, dev, tol))
    return results


def _raw_marginal(v: np.ndarray, bits) -> np.ndarray:
    out = np.zeros(2 ** len(bits))
    for z, pz in enumerate(v):
        code = 0
        for b in bits:
            code = 2 * code + ((z >> (3 - b)) & 1)
        out[code] += pz
    return out


def cmd_verify(args) -> int:
    povm = default_povm()
    if args.perturb_povm:
        noise = np.random.default_rng(1).normal(size=(4, 4))
        povm = Povm.from_matrix(povm.matrix + args.perturb_povm * noise)
    checks = verification_checks(povm)
    width = max(len(c[0]) for c in checks)
    ok = True
    print(f"{'check':<{width}}  {'max deviation':>14}  {'tolerance':>9}  status")
    for name, dev, tol in checks:
        passed = dev <= tol
        ok &= passed
        print(f"{name:<{width}}  {dev:14.3e}  {tol:9.1e}  {'ok' if passed else 'FAIL'}")
    print(f"{sum(d <= t for _, d, t in checks)}/{len(checks)} checks passed")
    return EXIT_OK if ok else EXIT_FAIL


# ----------------------------------------------------------------------------
# states, dump-circuit, trial


def cmd_states(args) -> int:
    states = ex.test_states(args.n)
    for label, s, ent in zip(states.labels, states.states, states.entangled):
        p = embed(s).probs
        flag = " entangled" if ent else ""
        print(f"{label:<16} " + " ".join(f"{x:.5f}" for x in p) + flag)
    return EXIT_OK


def cmd_dump(args) -> int:
    circuit = _circuit(args)
    header = {"seed": "none", "config": _config_line(args, ("gate", "angle", "angle_unit", "tau_avr", "eta", "gamma", "layout", "norm_form"))}
    header.update(circuit.header())
    ref_nodes, ref_edges = REFERENCE_COUNTS[circuit.n_qubits]
    header["reference_counts"] = f"nodes={ref_nodes} edges={ref_edges} (informational)"
    for label, (src, shift) in circuit.passthrough.items():
        header[f"copy {label}"] = f"{src} delayed {shift}"
    text = circuit.spec.to_text(header)
    _emit(text, args.output)
    return EXIT_OK


def cmd_trial(args) -> int:
    n = 2 if args.gate == "cnot" else 1
    states = ex.test_states(n)
    try:
        si = states.index(args.state)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    circuit = _circuit(args)
    cfg = ex.SweepConfig(
        target="fig2a" if n == 1 else "fig3a",
        steps_budget=args.budget,
        tau_sig_list=(args.tau_sig,),
        gamma_list=(args.gamma,),
        sigma_list=(args.sigma,),
        master_seed=args.seed,
    )
    p_in = embed(states.states[si])
    res = ex.run_trial(circuit, p_in, cfg, ex.trial_seed(args.seed, (2, si)), eta=args.eta)
    print(f"# seed={args.seed} config={_config_line(args, ('gate', 'angle', 'angle_unit', 'state', 'gamma', 'sigma', 'eta', 'tau_avr', 'tau_sig', 'budget', 'layout'))}")
    print(f"F = {res.F_mean:.3f} +/- {res.F_sd:.3f}")
    print(f"R = {res.R_mean:.3f} +/- {res.R_sd:.3f}")
    print(f"alpha_deg = {res.alpha_mean:.2f}")
    print(f"segments = {res.segments}  tau_gate = {circuit.tau_gate}")
    print("p_out = " + " ".join(f"{x:.4f}" for x in res.p_out.probs))
    return EXIT_OK


# ----------------------------------------------------------------------------
# sweep, plot


def cmd_sweep(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    try:
        cfg = ex.parse_config(text)
    except ex.ConfigError as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    if args.seed is not None:
        cfg = ex.with_overrides(cfg, master_seed=args.seed)
    points = ex.sweep(cfg, workers=args.workers, eta=args.eta)
    rows = ex.sweep_rows(cfg, points, detail=args.detail)
    text = ex.format_csv(cfg, rows)
    _emit(text, args.output)
    if args.plot:
        from .plotting import sweep_svg

        Path(args.plot).write_text(sweep_svg(rows, f"# seed={cfg.master_seed} config={cfg.summary()}"))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import sweep_svg

    try:
        text = Path(args.csv).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from None
    header = next((ln for ln in text.splitlines() if ln.startswith("# seed=")), "# seed=unknown config=unknown")
    rows = ex.read_csv(text)
    if not rows:
        raise UsageError(f"{args.csv} has no rows")
    out = args.output or str(Path(args.csv).with_suffix(".svg"))
    Path(out).write_text(sweep_svg(rows, header))
    return EXIT_OK


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------------
# parser


def _add_circuit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gate", choices=GATES, required=True)
    p.add_argument("--angle", type=float, default=None, help="rotation angle (see --angle-unit)")
    p.add_argument("--angle-unit", choices=("rad", "deg"), default="rad")
    p.add_argument("--tau-avr", type=int, default=None, help="synaptic averaging (default 2, or 4 for cnot)")
    p.add_argument("--eta", type=float, default=0.5, help="inhibition level")
    p.add_argument("--gamma", type=float, default=1.0, help="saturation parameter")
    p.add_argument("--layout", choices=("sparse", "direct"), default="sparse")
    p.add_argument("--norm-form", choices=("balanced", "printed"), default="balanced")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikegates", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the algebraic self-checks")
    p.add_argument("--perturb-povm", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("states", help="print the test states and their distributions")
    p.add_argument("-n", type=int, choices=(1, 2), default=1)
    p.set_defaults(func=cmd_states)

    p = sub.add_parser("dump-circuit", help="write a circuit as an edge list")
    _add_circuit_options(p)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("trial", help="run one gate on one test state")
    _add_circuit_options(p)
    p.add_argument("--state", required=True, help="test state label (see 'states')")
    p.add_argument("--sigma", type=float, default=0.0, help="noise level")
    p.add_argument("--tau-sig", type=int, default=30)
    p.add_argument("--budget", type=int, default=10_000, help="post-transient steps")
    p.add_argument("--seed", type=int, default=ex.DEFAULT_SEED)
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("sweep", help="run a sweep described by a config file")
    p.add_argument("config")
    p.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
    p.add_argument("--plot", default=None, help="also write an SVG plot")
    p.add_argument("--workers", type=int, default=ex.default_workers())
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--eta", type=float, default=None, help="fix eta instead of optimizing it")
    p.add_argument("--detail", action="store_true", help="add one row per trial")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="plot a sweep CSV as SVG")
    p.add_argument("csv")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tau_avr", 0) is None:
        args.tau_avr = 4 if args.gate == "cnot" else 2
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ValidationError) as exc:
        print(f"spikegates {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
