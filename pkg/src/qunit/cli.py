"""Command-line front end.

Exit codes: 0 passed, 1 assertion failed, 2 configuration error,
3 execution error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .circuit import SubroutineSpec, apply_mutation
from .errors import (
    ArityMismatch,
    BindingError,
    BudgetExceeded,
    DimensionMismatch,
    IncompatibleAssertion,
    InvalidState,
    NotCoprime,
    QasmSyntaxError,
    QUnitError,
    TooLarge,
    UnknownGate,
)
from .harness import Protocol, run_unit_test, select_protocol, shot_sweep, sweep_to_csv
from .simulator import (
    DensityMatrix,
    NoiseModel,
    derive_seed,
    evolve,
    outcome_probabilities,
    reduce_qubits,
    sample_probabilities,
)
from .testfile import TestFileError, load_test_file
from .tomography import (
    PREPARATION_LABELS,
    estimate_pauli_expectations,
    expectations_to_csv,
    preparation_unitary,
    process_tomography,
    ptm_to_choi,
    state_tomography,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_EXEC = 0, 1, 2, 3

CONFIG_ERRORS = (
    TestFileError,
    QasmSyntaxError,
    UnknownGate,
    ArityMismatch,
    BindingError,
    NotCoprime,
    IncompatibleAssertion,
    TooLarge,
    BudgetExceeded,
    DimensionMismatch,
    InvalidState,
)

CORPUS_DIR = Path(__file__).parent / "corpus"


class ConfigError(Exception):
    pass


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(out, text)


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text):
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _noise(text):
    try:
        return NoiseModel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad noise spec {text!r}: {exc}") from exc


def _threshold(text):
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("threshold must lie in [0, 1]")
    return v


def _load(args):
    try:
        tf = load_test_file(args.test)
    except CONFIG_ERRORS:
        raise
    except (QUnitError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{args.test}: {exc}") from exc
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.shots is not None:
        overrides["shots"] = args.shots
    if args.noise is not None:
        overrides["noise"] = args.noise
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    return tf, tf.test.replace(**overrides)


def _report_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "protocol", "probability", "passed", "threshold", "method",
                "total_circuits_executed", "total_shots", "seed"])
    v = report.verdict
    w.writerow([report.name, report.protocol_used.value, repr(v.probability), v.passed, v.threshold,
                v.method.value, report.total_circuits_executed, report.total_shots, report.seed])
    return buf.getvalue()


def cmd_run(args) -> int:
    _, test = _load(args)
    report = run_unit_test(test)
    text = report.to_json() if args.format == "json" else _report_csv(report)
    if args.out is not None:
        write_atomic(args.out, text)
    print(report.summary())
    return EXIT_PASS if report.passed else EXIT_FAIL


def _noise_suffix(noise: NoiseModel) -> str:
    return str(noise).replace(":", "_")


def cmd_sweep(args) -> int:
    tf, test = _load(args)
    if tf.sweep is None:
        raise ConfigError("test file has no sweep section")
    shots = tf.sweep.shots if args.shots is None else (args.shots,)
    grid = tf.sweep.noise_grid if args.noise is None else ()
    if not grid:
        _emit(sweep_to_csv(shot_sweep(test, shots, tf.sweep.seeds_per_point)), args.out)
        return EXIT_PASS
    out = Path(args.out) if args.out is not None else None
    for noise in grid:
        text = sweep_to_csv(shot_sweep(test.replace(noise=noise), shots, tf.sweep.seeds_per_point))
        if out is None:
            print(f"# noise {noise}")
            sys.stdout.write(text)
        else:
            write_atomic(out.with_name(f"{out.stem}_{_noise_suffix(noise)}{out.suffix or '.csv'}"), text)
    return EXIT_PASS


def cmd_tomo(args) -> int:
    """Reconstruct the state or channel the test would assert on."""
    _, test = _load(args)
    protocol = select_protocol(test.context, test.assertion, test.protocol)
    circuit = test.circuit()
    n = circuit.n_qubits
    out_q = tuple(range(n)) if test.output_qubits is None else test.output_qubits
    if protocol is Protocol.PROCESS_TOMOGRAPHY:
        zero = DensityMatrix.zero(n).data
        cache = {}

        def ex(label, setting, shots):
            if label not in cache:
                u = preparation_unitary(label)
                cache[label] = reduce_qubits(evolve(u @ zero @ u.conj().T, circuit, test.noise), n, out_q)
            out = cache[label]
            p = outcome_probabilities(out, setting.basis_change())
            if shots is None:
                return p
            prep = int("".join(str(PREPARATION_LABELS.index(c)) for c in label), 4)
            return sample_probabilities(p, shots, derive_seed(test.seed, prep, setting.index), len(out_q))

        ptm = process_tomography(ex, n, test.shots, len(out_q))
        if args.format == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["row"] + [f"c{k}" for k in range(ptm.data.shape[1])])
            for j, row in enumerate(ptm.data):
                w.writerow([j] + [repr(float(x)) for x in row])
            text = buf.getvalue()
        else:
            choi = ptm_to_choi(ptm, check=False).projected()
            text = json.dumps({"ptm": ptm.to_dict(), "choi": choi.to_dict()}, sort_keys=True) + "\n"
    else:
        if not test.context.inputs:
            raise ConfigError("state tomography needs a fixed input state")
        rho_in = test.context.inputs[0]
        out = reduce_qubits(evolve(rho_in.data, circuit, test.noise), n, out_q)

        def ex(setting, shots):
            p = outcome_probabilities(out, setting.basis_change())
            if shots is None:
                return p
            return sample_probabilities(p, shots, derive_seed(test.seed, 0, setting.index), len(out_q))

        if args.format == "csv":
            text = expectations_to_csv(estimate_pauli_expectations(ex, len(out_q), test.shots), test.shots)
        else:
            rho = state_tomography(ex, len(out_q), test.shots)
            text = json.dumps(rho.to_dict(), sort_keys=True) + "\n"
    _emit(text, args.out)
    return EXIT_PASS


def cmd_mutate(args) -> int:
    tf, test = _load(args)
    base = test.circuit()
    rows = [("original", test)]
    for i, m in enumerate(tf.mutations):
        mutant = apply_mutation(base, m)
        rows.append((f"m{i}:{m.describe()}", test.replace(subroutine=SubroutineSpec.from_circuit(mutant), theta=())))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mutation_id", "protocol", "probability", "verdict"])
    ok = True
    for ident, t in rows:
        r = run_unit_test(t)
        w.writerow([ident, r.protocol_used.value, repr(r.probability), "PASSED" if r.passed else "FAILED"])
        killed = not r.passed
        ok &= (not killed) if ident == "original" else killed
        print(f"{ident} {r.protocol_used.value} probability={r.probability:.6f} "
              f"{'PASSED' if r.passed else 'FAILED'}")
    if args.out is not None:
        write_atomic(args.out, buf.getvalue())
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_corpus(args) -> int:
    """List the shipped corpus, or write it to ``--out`` as a directory."""
    from .case_studies import corpus_documents

    docs = corpus_documents()
    if args.out is None:
        for name in sorted(docs):
            print(name)
        return EXIT_PASS
    for name, doc in sorted(docs.items()):
        write_atomic(Path(args.out) / name, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_PASS


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "tomo": cmd_tomo, "mutate": cmd_mutate, "corpus": cmd_corpus}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qunit", description="Context-aware unit tests for quantum subroutines.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "tomo", "mutate"):
        p = sub.add_parser(name, help=COMMANDS[name].__doc__)
        p.add_argument("--test", required=True, help="JSON test file")
        p.add_argument("--out", help="output file (stdout if omitted)")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--shots", type=_positive)
        p.add_argument("--noise", type=_noise, help="noiseless, bitflip:p or depolarizing:p")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--threshold", type=_threshold)
    p = sub.add_parser("corpus", help=cmd_corpus.__doc__)
    p.add_argument("--out", help="directory to write the corpus into")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QUnitError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"execution error: {exc}", file=sys.stderr)
        return EXIT_EXEC


if __name__ == "__main__":
    sys.exit(main())
