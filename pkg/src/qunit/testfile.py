"""Declarative JSON test files.

Example::

    {
      "name": "sample1_fixed_input",
      "subroutine": {"source": "def sample1(qubit[3] q) { ... }"},
      "theta": [],
      "context": {"input": {"state": {"basis": "000"}}, "output": "unrestricted"},
      "assertion": {"state_equals": {"circuit_output": {"subroutine": {...}}}},
      "protocol": "auto",
      "shots": 10000,
      "noise": {"kind": "noiseless", "p": 0.0},
      "seed": 0
    }

Subroutines are given as ``{"source": text}``, ``{"path": file}`` (relative
to the test file) or ``{"builtin": name, "args": {...}}``. States are
``{"basis": "010"}``, ``{"statevector": [[re, im], ...]}``,
``{"density_matrix": [[[re, im], ...], ...]}`` or
``{"circuit_output": {"subroutine": ..., "theta": [...], "input": state}}``.
Optional ``sweep`` and ``mutations`` sections drive the sweep and mutate
commands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assertions import (
    ChoiEquals,
    Deterministic,
    DistributionEquals,
    Functional,
    FunctionalEquals,
    StateEquals,
)
from .circuit import bind, mutation_from_dict, mutation_to_dict, parse_subroutine, serialize
from .harness import (
    ComputationalMeasurement,
    Context,
    DeterministicOutput,
    FixedState,
    FixedStateSet,
    FullSpace,
    Observables,
    Protocol,
    Unrestricted,
    UnitTest,
)
from .simulator import (
    NOISELESS,
    DensityMatrix,
    NoiseModel,
    apply_circuit,
    complex_pairs,
    from_complex_pairs,
)
from .tomography import ChoiMatrix, PauliString


class TestFileError(ValueError):
    """The test file is malformed or refers to something that does not exist."""

    __test__ = False


def _builtin(name: str, args: dict):
    from . import case_studies as cs
    from .circuit import SubroutineSpec
    from .library import build_qft, build_qft_inverse

    if name == "modmul":
        return cs.shor_subroutine1_spec(**args)
    if name in ("qft", "iqft", "iqft_mutant"):
        n = int(args.get("n_qubits", 4))
        build = {"qft": build_qft, "iqft": build_qft_inverse, "iqft_mutant": cs.iqft_mutant}[name]
        return SubroutineSpec.from_circuit(build(n))
    if name in cs.SAMPLE_SOURCES:
        return cs.sample_spec(name)
    raise TestFileError(f"unknown builtin subroutine {name!r}")


def load_subroutine(d: dict, base: Path):
    if "source" in d:
        return parse_subroutine(d["source"])
    if "path" in d:
        path = base / d["path"]
        if not path.is_file():
            raise TestFileError(f"subroutine file {path} not found")
        return parse_subroutine(path.read_text())
    if "builtin" in d:
        return _builtin(d["builtin"], d.get("args", {}))
    raise TestFileError("subroutine needs one of source, path, builtin")


def load_state(d: dict, base: Path) -> DensityMatrix:
    if "basis" in d:
        return DensityMatrix.basis(d["basis"])
    if "statevector" in d:
        psi = np.array([complex(re, im) for re, im in d["statevector"]])
        return DensityMatrix.from_statevector(psi)
    if "density_matrix" in d:
        m = from_complex_pairs(d["density_matrix"])
        return DensityMatrix(int(round(np.log2(m.shape[0]))), m)
    if "circuit_output" in d:
        spec = d["circuit_output"]
        circuit = bind(load_subroutine(spec["subroutine"], base), spec.get("theta", []))
        rho = load_state(spec["input"], base) if "input" in spec else DensityMatrix.zero(circuit.n_qubits)
        return apply_circuit(rho, circuit, load_noise(spec.get("noise")))
    raise TestFileError(f"unrecognised state specification {sorted(d)}")


def load_noise(d) -> NoiseModel:
    if d is None:
        return NOISELESS
    if isinstance(d, str):
        return NoiseModel.parse(d)
    if d.get("kind", "noiseless") == "noiseless":
        return NOISELESS
    return NoiseModel.parse(f"{d['kind']}:{d['p']}")


def _load_choi(d: dict, base: Path) -> ChoiMatrix:
    from .case_studies import circuit_choi

    if "matrix" in d:
        return ChoiMatrix(int(d["n_in"]), int(d["n_out"]), from_complex_pairs(d["matrix"]))
    circuit = bind(load_subroutine(d["subroutine"], base), d.get("theta", []))
    return circuit_choi(circuit, load_noise(d.get("noise")))


def load_assertion(d: dict, base: Path):
    if len(d) != 1:
        raise TestFileError("assertion needs exactly one kind")
    (kind, body), = d.items()
    if kind == "state_equals":
        if isinstance(body, list):
            return StateEquals(tuple(load_state(s, base) for s in body))
        return StateEquals(load_state(body, base))
    if kind == "choi_equals":
        return ChoiEquals(_load_choi(body, base))
    if kind == "distribution_equals":
        return DistributionEquals(np.array(body, dtype=float))
    if kind == "functional":
        fn = Functional.purity() if body["kind"] == "purity" else Functional.expectation(PauliString(body["observable"]))
        return FunctionalEquals(fn, float(body["p_expected"]), float(body.get("tolerance", 0.05)))
    if kind == "deterministic":
        return Deterministic(body)
    raise TestFileError(f"unknown assertion kind {kind!r}")


def load_context(d: dict, base: Path) -> Context:
    inp = d.get("input", "full_space")
    if inp == "full_space":
        domain = FullSpace()
    elif isinstance(inp, dict) and "state" in inp:
        domain = FixedState(load_state(inp["state"], base))
    elif isinstance(inp, dict) and "states" in inp:
        domain = FixedStateSet(tuple(load_state(s, base) for s in inp["states"]))
    else:
        raise TestFileError(f"unrecognised input domain {inp!r}")
    out = d.get("output", "unrestricted")
    if isinstance(out, dict) and "observables" in out:
        usage = Observables(tuple(PauliString(p) for p in out["observables"]))
    else:
        usages = {
            "unrestricted": Unrestricted,
            "computational": ComputationalMeasurement,
            "deterministic": DeterministicOutput,
        }
        if out not in usages:
            raise TestFileError(f"unrecognised output usage {out!r}")
        usage = usages[out]()
    return Context(domain, usage)


@dataclass(frozen=True, eq=False)
class Sweep:
    shots: tuple
    seeds_per_point: int = 1
    noise_grid: tuple = ()


@dataclass(frozen=True, eq=False)
class TestFile:
    __test__ = False

    test: UnitTest
    sweep: Sweep | None = None
    mutations: tuple = field(default_factory=tuple)
    raw: dict = field(default_factory=dict, repr=False)


def parse_test(d: dict, base: Path = Path(".")) -> TestFile:
    try:
        protocol = d.get("protocol", "auto")
        shots = d.get("shots", 1000)
        test = UnitTest(
            subroutine=load_subroutine(d["subroutine"], base),
            context=load_context(d.get("context", {}), base),
            assertion=load_assertion(d["assertion"], base),
            theta=tuple(d.get("theta", [])),
            protocol=None if protocol in (None, "auto") else Protocol(protocol),
            shots=None if shots is None else int(shots),
            noise=load_noise(d.get("noise")),
            seed=int(d.get("seed", 0)),
            name=d.get("name", ""),
            threshold=d.get("threshold"),
            output_qubits=d.get("output_qubits"),
            k_medians=int(d.get("k_medians", 10)),
        )
    except KeyError as exc:
        raise TestFileError(f"missing field {exc}") from exc
    sweep = None
    if "sweep" in d:
        s = d["sweep"]
        sweep = Sweep(
            tuple(int(x) for x in s["shots"]),
            int(s.get("seeds_per_point", 1)),
            tuple(load_noise(n) for n in s.get("noise_grid", [])),
        )
    mutations = tuple(mutation_from_dict(m) for m in d.get("mutations", []))
    return TestFile(test, sweep, mutations, d)


def load_test_file(path) -> TestFile:
    path = Path(path)
    if not path.is_file():
        raise TestFileError(f"test file {path} not found")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TestFileError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise TestFileError(f"{path}: top level must be an object")
    return parse_test(d, path.parent)


# ---------------------------------------------------------------------------
# writers used to ship the corpus


def source_subroutine(spec) -> dict:
    return {"source": serialize(spec)}


def statevector_spec(psi) -> dict:
    return {"statevector": [[float(z.real), float(z.imag)] for z in np.asarray(psi, dtype=complex)]}


def density_spec(rho: DensityMatrix) -> dict:
    return {"density_matrix": complex_pairs(rho.data)}


def noise_spec(noise: NoiseModel) -> dict:
    return noise.to_dict()


def mutations_spec(mutations) -> list:
    return [mutation_to_dict(m) for m in mutations]
