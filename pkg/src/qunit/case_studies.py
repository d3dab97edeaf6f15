"""Reference corpus: the GHZ subroutine with three mutants, and two
phase-estimation subroutines (controlled modular multiplication and the
inverse QFT) with their context-driven tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assertions import ChoiEquals, DistributionEquals, StateEquals
from .circuit import (
    Circuit,
    Gate,
    GateDeletion,
    GateInsertion,
    GateKind,
    GateSubstitution,
    QubitIndexSwap,
    SubroutineSpec,
    apply_mutation,
    bind,
    cx,
    mutation_to_dict,
    parse_subroutine,
)
from .errors import BindingError, NotCoprime
from .harness import ComputationalMeasurement, Context, FixedState, FullSpace, Protocol, UnitTest
from .library import build_controlled_modmul, build_qft_inverse, register_size
from .simulator import NOISELESS, DensityMatrix, NoiseModel, circuit_to_kraus
from .tomography import ChoiMatrix, kraus_to_choi

SAMPLE_SOURCES = {
    "sample1": """// sample1
def sample1(qubit[3] q) {
    x q[0];
    h q[0];
    cx q[0], q[1];
    cx q[0], q[2];
}
""",
    # Hadamard on the wrong qubit
    "sample2": """// sample2
def sample2(qubit[3] q) {
    x q[0];
    h q[1];
    cx q[0], q[1];
    cx q[0], q[2];
}
""",
    # phase gate instead of X
    "sample3": """// sample3
def sample3(qubit[3] q) {
    s q[0];
    h q[0];
    cx q[0], q[1];
    cx q[0], q[2];
}
""",
    # extra CNOT that is inert when q[1] starts in |0>
    "sample4": """// sample4
def sample4(qubit[3] q) {
    x q[0];
    h q[0];
    cx q[1], q[2];
    cx q[0], q[1];
    cx q[0], q[2];
}
""",
}

# The same three defects expressed as mutations of sample1.
SAMPLE_MUTATIONS = {
    "sample2": QubitIndexSwap(gate_pos=1, old_index=0, new_index=1),
    "sample3": GateSubstitution(gate_pos=0, new_kind=GateKind.S),
    "sample4": GateInsertion(position=2, gate=cx(1, 2)),
}

# (without context, with context)
GHZ_GROUND_TRUTH = {
    "sample1": (True, True),
    "sample2": (False, False),
    "sample3": (False, False),
    "sample4": (False, True),
}

SHOR_CONTROL_QUBITS = 8


@dataclass(frozen=True, eq=False)
class CaseStudy:
    name: str
    subroutines: tuple
    tests: tuple
    ground_truth: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [t.name for t in self.tests if t.name not in self.ground_truth]
        if missing:
            raise ValueError(f"ground truth missing for {missing}")

    def test(self, name: str) -> UnitTest:
        for t in self.tests:
            if t.name == name:
                return t
        raise KeyError(name)


# ---------------------------------------------------------------------------
# GHZ


def sample_spec(name: str) -> SubroutineSpec:
    return parse_subroutine(SAMPLE_SOURCES[name])


def ghz_state() -> DensityMatrix:
    """(|000> - |111>)/sqrt(2), the output of sample1 on |000>."""
    psi = np.zeros(8, dtype=complex)
    psi[0], psi[7] = 1, -1
    return DensityMatrix.from_statevector(psi / np.sqrt(2))


def circuit_choi(circuit: Circuit, noise: NoiseModel = NOISELESS) -> ChoiMatrix:
    return kraus_to_choi(circuit_to_kraus(circuit, noise))


def ghz_test(
    name: str,
    with_context: bool,
    shots: int | None = 10**4,
    seed: int = 0,
    noise: NoiseModel = NOISELESS,
) -> UnitTest:
    """Test of one sample against the behaviour of sample1.

    Without context the whole channel is compared with sample1's Choi
    matrix; with context the input is fixed to |000> and only the output
    state is compared with the GHZ state.
    """
    spec = sample_spec(name)
    if with_context:
        context = Context(FixedState(DensityMatrix.basis("000")))
        assertion = StateEquals(ghz_state())
    else:
        context = Context(FullSpace())
        assertion = ChoiEquals(circuit_choi(bind(sample_spec("sample1"))))
    suffix = "fixed_input" if with_context else "full_space"
    return UnitTest(spec, context, assertion, shots=shots, noise=noise, seed=seed, name=f"{name}_{suffix}")


def ghz_corpus(shots: int | None = 10**4, seed: int = 0, noise: NoiseModel = NOISELESS) -> CaseStudy:
    tests, truth = [], {}
    for name, (full, fixed) in GHZ_GROUND_TRUTH.items():
        for with_context, expected in ((False, full), (True, fixed)):
            t = ghz_test(name, with_context, shots, seed, noise)
            tests.append(t)
            truth[t.name] = expected
    specs = tuple(sample_spec(n) for n in SAMPLE_SOURCES)
    return CaseStudy("ghz", specs, tuple(tests), truth)


# ---------------------------------------------------------------------------
# phase estimation: subroutine 1 (controlled modular multiplication)


def shor_subroutine1_spec(a: int = 2, N: int = 9, n_control: int = SHOR_CONTROL_QUBITS) -> SubroutineSpec:
    """Controlled multiplication by a^(2^theta) mod N on a compact register.

    Qubit 0 stands in for control qubit ``theta`` of the phase-estimation
    register; qubits 1.. hold the target register. The circuit applies H to
    the control and then the controlled multiplication.
    """
    if math.gcd(a, N) != 1:
        raise NotCoprime(f"gcd({a}, {N}) = {math.gcd(a, N)}")
    n = 1 + register_size(N)

    def builder(theta):
        (t,) = theta
        if int(t) != t or not 1 <= t <= n_control:
            raise BindingError(f"theta must be an integer in 1..{n_control}, got {t}")
        gate = build_controlled_modmul(a, N, int(t), control=0)
        return Circuit(n, (Gate(GateKind.H, (0,)), gate), f"modmul_a{a}_N{N}")

    return SubroutineSpec(f"modmul_a{a}_N{N}", n, 1, builder, ("theta",))


def shor_eigenstate(a: int = 2, N: int = 9) -> np.ndarray:
    """Uniform superposition over the orbit {a^k mod N}.

    Multiplication by any power of a permutes the orbit, so this is an
    eigenvector with eigenvalue 1 for every theta.
    """
    orbit, x = [], 1
    while x not in orbit:
        orbit.append(x)
        x = a * x % N
    psi = np.zeros(2 ** register_size(N), dtype=complex)
    psi[orbit] = 1
    return psi / np.linalg.norm(psi)


def shor_input_state(a: int = 2, N: int = 9) -> DensityMatrix:
    """Control qubit in |1> next to the eigenvector on the target register."""
    return DensityMatrix.from_statevector(np.kron([0, 1], shor_eigenstate(a, N)))


def shor_subroutine1_test(
    a: int = 2,
    N: int = 9,
    theta: int = 1,
    noise: NoiseModel = NOISELESS,
    shots: int | None = 10**4,
    seed: int = 0,
) -> UnitTest:
    """The target register must leave the subroutine unchanged."""
    spec = shor_subroutine1_spec(a, N)
    bind(spec, (theta,))  # fail fast on a bad theta
    target = tuple(range(1, spec.n_qubits))
    return UnitTest(
        spec,
        Context(FixedState(shor_input_state(a, N))),
        StateEquals(DensityMatrix.from_statevector(shor_eigenstate(a, N))),
        theta=(theta,),
        protocol=Protocol.STATE_TOMOGRAPHY,
        shots=shots,
        noise=noise,
        seed=seed,
        name=f"modmul_a{a}_N{N}_theta{theta}",
        output_qubits=target,
    )


# ---------------------------------------------------------------------------
# phase estimation: subroutine 2 (inverse QFT)


def iqft_input_state(n_qubits: int) -> np.ndarray:
    """|0...0> with a Hadamard on the least significant qubit."""
    psi = np.zeros(2**n_qubits, dtype=complex)
    psi[0] = psi[1] = 1 / np.sqrt(2)
    return psi


def iqft_expected_distribution(n_qubits: int) -> np.ndarray:
    """|DFT(psi)|^2, which is the profile (1 + cos(2 pi k / 2^n)) / 2^n."""
    psi = iqft_input_state(n_qubits)
    amp = np.fft.fft(psi) / np.sqrt(psi.size)
    p = np.abs(amp) ** 2
    return p / p.sum()


def iqft_mutant(n_qubits: int) -> Circuit:
    """The inverse QFT with the pi/2 controlled phase onto qubit 0 deleted."""
    c = build_qft_inverse(n_qubits)
    pos = next(
        i for i, g in enumerate(c.gates)
        if g.kind is GateKind.CP and set(g.qubits) == {0, 1}
    )
    return apply_mutation(c, GateDeletion(pos))


def iqft_delta_test(
    n_qubits: int = 4,
    noise: NoiseModel = NOISELESS,
    shots: int | None = 10**4,
    seed: int = 0,
    mutated: bool = False,
) -> UnitTest:
    if not 2 <= n_qubits <= 10:
        raise ValueError("the inverse QFT test supports 2..10 qubits")
    circuit = iqft_mutant(n_qubits) if mutated else build_qft_inverse(n_qubits)
    if mutated:
        circuit = Circuit(circuit.n_qubits, circuit.gates, f"iqft{n_qubits}_mutant")
    return UnitTest(
        SubroutineSpec.from_circuit(circuit),
        Context(FixedState(DensityMatrix.from_statevector(iqft_input_state(n_qubits))), ComputationalMeasurement()),
        DistributionEquals(iqft_expected_distribution(n_qubits)),
        protocol=Protocol.STATISTICAL_CHI2,
        shots=shots,
        noise=noise,
        seed=seed,
        name=circuit.name,
    )


def phase_estimation_corpus(shots: int | None = 10**4, seed: int = 0) -> CaseStudy:
    tests = (
        shor_subroutine1_test(shots=shots, seed=seed),
        iqft_delta_test(shots=shots, seed=seed),
        iqft_delta_test(shots=shots, seed=seed, mutated=True),
    )
    truth = {tests[0].name: True, tests[1].name: True, tests[2].name: False}
    specs = tuple(t.subroutine for t in tests)
    return CaseStudy("phase_estimation", specs, tests, truth)


# ---------------------------------------------------------------------------
# declarative corpus


def corpus_documents() -> dict:
    """Test files for the whole corpus, keyed by file name."""
    from .testfile import density_spec, statevector_spec

    docs = {}
    sample1 = {"source": SAMPLE_SOURCES["sample1"]}
    ghz = statevector_spec(np.array([1, 0, 0, 0, 0, 0, 0, -1]) / np.sqrt(2))
    full = {"input": "full_space", "output": "unrestricted"}
    fixed = {"input": {"state": {"basis": "000"}}, "output": "unrestricted"}
    for name in SAMPLE_SOURCES:
        src = {"source": SAMPLE_SOURCES[name]}
        docs[f"{name}_full_space.json"] = {
            "name": f"{name}_full_space",
            "subroutine": src,
            "context": full,
            "assertion": {"choi_equals": {"subroutine": sample1}},
            "protocol": "auto",
            "shots": 10**4,
            "seed": 0,
        }
        docs[f"{name}_fixed_input.json"] = {
            "name": f"{name}_fixed_input",
            "subroutine": src,
            "context": fixed,
            "assertion": {"state_equals": ghz},
            "protocol": "auto",
            "shots": 10**4,
            "seed": 0,
        }
    docs["ghz_sweep.json"] = dict(
        docs["sample1_fixed_input.json"],
        name="ghz_sweep",
        sweep={"shots": [10, 100, 1000, 10**4], "seeds_per_point": 5},
    )
    mutations = [mutation_to_dict(SAMPLE_MUTATIONS[k]) for k in ("sample2", "sample3", "sample4")]
    docs["ghz_mutations_fixed_input.json"] = dict(
        docs["sample1_fixed_input.json"], name="ghz_mutations_fixed_input", mutations=mutations
    )
    docs["ghz_mutations_full_space.json"] = dict(
        docs["sample1_full_space.json"], name="ghz_mutations_full_space", mutations=mutations
    )
    docs["modmul_a2_N9.json"] = {
        "name": "modmul_a2_N9_theta1",
        "subroutine": {"builtin": "modmul", "args": {"a": 2, "N": 9}},
        "theta": [1],
        "context": {"input": {"state": density_spec(shor_input_state())}, "output": "unrestricted"},
        "assertion": {"state_equals": statevector_spec(shor_eigenstate())},
        "protocol": Protocol.STATE_TOMOGRAPHY.value,
        "output_qubits": [1, 2, 3, 4],
        "shots": 10**5,
        "seed": 0,
        "sweep": {
            "shots": [10, 100, 1000, 10**4, 10**5],
            "seeds_per_point": 3,
            "noise_grid": [{"kind": "bitflip", "p": p} for p in (0.001, 0.003, 0.005, 0.007)],
        },
    }
    for n, mutated in ((4, False), (4, True), (8, False)):
        name = f"iqft{n}_delta" + ("_mutant" if mutated else "")
        docs[f"{name}.json"] = {
            "name": name,
            "subroutine": {"builtin": "iqft_mutant" if mutated else "iqft", "args": {"n_qubits": n}},
            "context": {"input": {"state": statevector_spec(iqft_input_state(n))}, "output": "computational"},
            "assertion": {"distribution_equals": iqft_expected_distribution(n).tolist()},
            "protocol": Protocol.STATISTICAL_CHI2.value,
            "shots": 10**5 if mutated else 10**4,
            # seeds 0 and 1 land in the 5% false-rejection tail of the test
            "seed": 2,
            "sweep": {"shots": [10, 100, 1000, 10**4, 10**5], "seeds_per_point": 10},
        }
    return docs
