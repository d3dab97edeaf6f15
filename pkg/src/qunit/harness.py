"""Unit tests for quantum subroutines: context, protocol choice and execution.

A :class:`UnitTest` binds a subroutine, its parameters, a usage
:class:`Context` and an assertion. :func:`run_unit_test` chooses the
cheapest protocol the context allows, simulates every circuit configuration
it needs with per-setting seeds, reconstructs what it must and evaluates the
assertion.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .assertions import (
    AssertionVerdict,
    ChoiEquals,
    Deterministic,
    DistributionEquals,
    FunctionalEquals,
    FunctionalKind,
    StateEquals,
    assert_choi_equals,
    assert_state_equals,
    chi2_assert,
    deterministic_assert,
    functional_assert,
)
from .circuit import Circuit, SubroutineSpec, bind
from .errors import BudgetExceeded, DimensionMismatch, IncompatibleAssertion, TooLarge
from .simulator import (
    NOISELESS,
    DensityMatrix,
    NoiseModel,
    derive_seed,
    evolve,
    outcome_probabilities,
    prepare_channel,
    reduce_qubits,
    sample_probabilities,
)
from .tomography import (
    PREPARATION_LABELS,
    classical_shadows,
    preparation_unitary,
    process_tomography,
    ptm_to_choi,
    state_tomography,
)

CIRCUIT_CAP_ENV = "QUNIT_CIRCUIT_CAP"


class Protocol(enum.Enum):
    PROCESS_TOMOGRAPHY = "process_tomography"
    STATE_TOMOGRAPHY = "state_tomography"
    CLASSICAL_SHADOWS = "classical_shadows"
    STATISTICAL_CHI2 = "statistical_chi2"
    SINGLE_SHOT = "single_shot"


QUBIT_CAPS = {
    Protocol.PROCESS_TOMOGRAPHY: 4,
    Protocol.STATE_TOMOGRAPHY: 6,
    Protocol.CLASSICAL_SHADOWS: 10,
    Protocol.STATISTICAL_CHI2: 10,
    Protocol.SINGLE_SHOT: 10,
}


# ---------------------------------------------------------------------------
# context


@dataclass(frozen=True)
class FullSpace:
    """No restriction: the subroutine may receive any input."""


@dataclass(frozen=True, eq=False)
class FixedState:
    rho: DensityMatrix

    def __post_init__(self):
        if not isinstance(self.rho, DensityMatrix):
            raise TypeError("FixedState needs a DensityMatrix")

    @property
    def states(self):
        return (self.rho,)


@dataclass(frozen=True, eq=False)
class FixedStateSet:
    rhos: tuple

    def __post_init__(self):
        rhos = tuple(self.rhos)
        if not rhos or not all(isinstance(r, DensityMatrix) for r in rhos):
            raise TypeError("FixedStateSet needs a nonempty sequence of DensityMatrix")
        object.__setattr__(self, "rhos", rhos)

    @property
    def states(self):
        return self.rhos


@dataclass(frozen=True)
class Unrestricted:
    """The output may be used arbitrarily downstream."""


@dataclass(frozen=True)
class Observables:
    observables: tuple

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))


@dataclass(frozen=True)
class ComputationalMeasurement:
    """The output is only ever measured in the computational basis."""


@dataclass(frozen=True)
class DeterministicOutput:
    """The output is a single computational basis state."""


@dataclass(frozen=True, eq=False)
class Context:
    input_domain: FullSpace | FixedState | FixedStateSet = field(default_factory=FullSpace)
    output_usage: Unrestricted | Observables | ComputationalMeasurement | DeterministicOutput = field(
        default_factory=Unrestricted
    )

    @property
    def inputs(self) -> tuple:
        return () if isinstance(self.input_domain, FullSpace) else self.input_domain.states


# ---------------------------------------------------------------------------
# protocol selection


def _basis_index(rho: DensityMatrix):
    diag = np.diagonal(rho.data).real
    i = int(np.argmax(diag))
    return i if abs(diag[i] - 1) < 1e-9 else None


def _diagonal_expectation(a) -> bool:
    return (
        isinstance(a, FunctionalEquals)
        and a.functional.kind is FunctionalKind.EXPECTATION
        and a.functional.observable.is_diagonal
    )


def _state_list(a: StateEquals):
    return (a.expected,) if isinstance(a.expected, DensityMatrix) else tuple(a.expected)


def _compatible(protocol: Protocol, a) -> bool:
    if protocol is Protocol.PROCESS_TOMOGRAPHY:
        return isinstance(a, ChoiEquals)
    if protocol is Protocol.STATE_TOMOGRAPHY:
        return isinstance(a, (StateEquals, FunctionalEquals))
    if protocol is Protocol.CLASSICAL_SHADOWS:
        return isinstance(a, FunctionalEquals) and a.functional.kind is FunctionalKind.EXPECTATION
    if protocol is Protocol.STATISTICAL_CHI2:
        return isinstance(a, (DistributionEquals, StateEquals)) or _diagonal_expectation(a)
    if isinstance(a, StateEquals):
        return all(_basis_index(r) is not None for r in _state_list(a))
    return isinstance(a, Deterministic)


def select_protocol(context: Context, assertion, explicit: Protocol | None = None) -> Protocol:
    """Cheapest protocol that still fully covers the declared context."""
    full = isinstance(context.input_domain, FullSpace)
    if explicit is not None:
        if not _compatible(explicit, assertion):
            raise IncompatibleAssertion(f"{assertion.kind} cannot be checked by {explicit.value}")
        if full != (explicit is Protocol.PROCESS_TOMOGRAPHY):
            raise IncompatibleAssertion(f"{explicit.value} does not match the input domain of the context")
        return explicit
    if full:
        if isinstance(assertion, ChoiEquals):
            return Protocol.PROCESS_TOMOGRAPHY
        raise IncompatibleAssertion("an unrestricted input domain needs a channel (Choi) assertion")
    if isinstance(assertion, ChoiEquals):
        raise IncompatibleAssertion("a channel assertion needs the full input space")
    usage = context.output_usage
    if isinstance(assertion, Deterministic):
        choice = Protocol.SINGLE_SHOT
    elif isinstance(assertion, DistributionEquals):
        choice = Protocol.STATISTICAL_CHI2
    elif isinstance(usage, DeterministicOutput):
        choice = Protocol.SINGLE_SHOT
    elif isinstance(usage, ComputationalMeasurement):
        choice = Protocol.STATISTICAL_CHI2
    elif isinstance(usage, Observables) and isinstance(assertion, FunctionalEquals):
        choice = Protocol.CLASSICAL_SHADOWS
    else:
        choice = Protocol.STATE_TOMOGRAPHY
    if not _compatible(choice, assertion):
        raise IncompatibleAssertion(f"{assertion.kind} cannot be checked under {type(usage).__name__} usage")
    return choice


def circuit_budget(protocol: Protocol, n_qubits: int, n_snapshots: int | None = None, n_out: int | None = None) -> int:
    """Number of distinct circuit configurations a protocol executes."""
    if protocol is Protocol.PROCESS_TOMOGRAPHY:
        return 4**n_qubits * 3 ** (n_qubits if n_out is None else n_out)
    if protocol is Protocol.STATE_TOMOGRAPHY:
        return 3**n_qubits
    if protocol is Protocol.CLASSICAL_SHADOWS:
        if n_snapshots is None:
            raise ValueError("classical shadows budget needs n_snapshots")
        return n_snapshots
    return 1


def circuit_cap() -> int | None:
    raw = os.environ.get(CIRCUIT_CAP_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"{CIRCUIT_CAP_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError(f"{CIRCUIT_CAP_ENV} must be positive")
    return cap


# ---------------------------------------------------------------------------
# tests and reports


@dataclass(frozen=True, eq=False)
class UnitTest:
    """A subroutine test.

    ``shots`` is per setting; ``None`` runs tomographic protocols with exact
    outcome probabilities. For classical shadows it is the snapshot count.
    ``output_qubits`` selects the register the assertion looks at; the rest
    is traced out. ``threshold`` overrides the method default.
    """

    subroutine: SubroutineSpec
    context: Context
    assertion: object
    theta: tuple = ()
    protocol: Protocol | None = None
    shots: int | None = 1000
    noise: NoiseModel = NOISELESS
    seed: int = 0
    name: str = ""
    threshold: float | None = None
    output_qubits: tuple | None = None
    k_medians: int = 10

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(self.theta))
        if self.output_qubits is not None:
            object.__setattr__(self, "output_qubits", tuple(int(q) for q in self.output_qubits))
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")
        if not self.name:
            object.__setattr__(self, "name", self.subroutine.name)

    def replace(self, **changes) -> "UnitTest":
        return dataclasses.replace(self, **changes)

    def circuit(self) -> Circuit:
        return bind(self.subroutine, self.theta)


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # keep pytest from collecting this class

    name: str
    verdict: AssertionVerdict
    protocol_used: Protocol
    total_circuits_executed: int
    total_shots: int
    seed: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def passed(self) -> bool:
        return self.verdict.passed

    @property
    def probability(self) -> float:
        return self.verdict.probability

    def to_dict(self, include_wall_time: bool = False) -> dict:
        d = {
            "name": self.name,
            "verdict": self.verdict.to_dict(),
            "protocol_used": self.protocol_used.value,
            "total_circuits_executed": self.total_circuits_executed,
            "total_shots": self.total_shots,
            "seed": self.seed,
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, include_wall_time: bool = False) -> str:
        return json.dumps(self.to_dict(include_wall_time), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        status = "PASSED" if self.passed else "FAILED"
        return f"{self.name} {self.protocol_used.value} probability={self.probability:.6f} {status}"


UnitTest.__test__ = False


class _Tally:
    def __init__(self):
        self.circuits = 0
        self.shots = 0

    def add(self, circuits, shots):
        self.circuits += circuits
        self.shots += 0 if shots is None else circuits * shots


def _check_size(protocol, n_in, n_out):
    cap = QUBIT_CAPS[protocol]
    size = max(n_in, n_out) if protocol is Protocol.PROCESS_TOMOGRAPHY else n_out
    if size > cap:
        raise TooLarge(f"{protocol.value} is capped at {cap} qubits, test needs {size}")


def _outputs(test: UnitTest, circuit: Circuit, out_q):
    n = circuit.n_qubits
    for i, rho in enumerate(test.context.inputs):
        if rho.n_qubits != n:
            raise DimensionMismatch(f"context state has {rho.n_qubits} qubits, subroutine {n}")
        yield i, reduce_qubits(evolve(rho.data, circuit, test.noise), n, out_q)


def _sampler(out, seed_of, n_out, tally):
    def executor(setting, shots):
        p = outcome_probabilities(out, setting.basis_change())
        tally.add(1, shots)
        if shots is None:
            return p
        return sample_probabilities(p, shots, seed_of(setting), n_out)

    return executor


def _run_process(test, circuit, out_q, tally):
    n, n_out = circuit.n_qubits, len(out_q)
    expected = test.assertion.expected
    if (expected.n_in, expected.n_out) != (n, n_out):
        raise DimensionMismatch(f"expected Choi is {expected.n_in}->{expected.n_out}, test is {n}->{n_out}")
    zero = DensityMatrix.zero(n)
    cache = {}

    def executor(label, setting, shots):
        out = cache.get(label)
        if out is None:
            rho = prepare_channel(zero, preparation_unitary(label)).data
            out = cache[label] = reduce_qubits(evolve(rho, circuit, test.noise), n, out_q)
        p = outcome_probabilities(out, setting.basis_change())
        tally.add(1, shots)
        if shots is None:
            return p
        prep_index = int("".join(str(PREPARATION_LABELS.index(c)) for c in label), 4)
        return sample_probabilities(p, shots, derive_seed(test.seed, prep_index, setting.index), n_out)

    ptm = process_tomography(executor, n, test.shots, n_out)
    choi = ptm_to_choi(ptm, check=False).projected()
    return [assert_choi_equals(choi, expected, test.threshold)]


def _run_state(test, circuit, out_q, tally):
    a = test.assertion
    verdicts = []
    for i, out in _outputs(test, circuit, out_q):
        ex = _sampler(out, lambda s, i=i: derive_seed(test.seed, i, s.index), len(out_q), tally)
        rho = state_tomography(ex, len(out_q), test.shots)
        if isinstance(a, StateEquals):
            verdicts.append(assert_state_equals(rho, a.expected_for(i), test.threshold))
        else:
            verdicts.append(functional_assert(rho, a, test.threshold))
    return verdicts


def _run_shadows(test, circuit, out_q, tally):
    a = test.assertion
    if test.shots is None:
        raise ValueError("classical shadows need a finite snapshot count")
    verdicts = []
    for i, out in _outputs(test, circuit, out_q):
        def ex(setting, shots, out=out, i=i):
            p = outcome_probabilities(out, setting.basis_change())
            tally.add(shots, 1)
            return sample_probabilities(p, shots, derive_seed(test.seed, i, setting.index), len(out_q))

        (est,) = classical_shadows(ex, [a.functional.observable], test.shots, test.k_medians, derive_seed(test.seed, i))
        verdicts.append(functional_assert(est.value, a, test.threshold))
    return verdicts


def _run_counts(test, circuit, out_q, tally, protocol):
    a = test.assertion
    if test.shots is None:
        raise ValueError(f"{protocol.value} needs a finite shot count")
    verdicts = []
    for i, out in _outputs(test, circuit, out_q):
        p = outcome_probabilities(out)
        tally.add(1, test.shots)
        counts = sample_probabilities(p, test.shots, derive_seed(test.seed, i), len(out_q))
        if isinstance(a, Deterministic):
            verdicts.append(deterministic_assert(counts, a.expected_bitstring, test.threshold))
        elif protocol is Protocol.SINGLE_SHOT:
            bits = counts.bitstring(_basis_index(a.expected_for(i)))
            verdicts.append(deterministic_assert(counts, bits, test.threshold).with_meta(assertion_kind=a.kind))
        elif isinstance(a, DistributionEquals):
            verdicts.append(chi2_assert(counts, a.expected, test.threshold))
        elif isinstance(a, StateEquals):
            expected = np.diagonal(a.expected_for(i).data).real
            verdicts.append(chi2_assert(counts, expected, test.threshold).with_meta(assertion_kind=a.kind))
        else:
            verdicts.append(functional_assert(counts, a, test.threshold))
    return verdicts


def run_unit_test(test: UnitTest) -> TestReport:
    """Execute one unit test; deterministic given the test's seed."""
    start = time.perf_counter()
    protocol = select_protocol(test.context, test.assertion, test.protocol)
    circuit = test.circuit()
    n = circuit.n_qubits
    out_q = tuple(range(n)) if test.output_qubits is None else test.output_qubits
    if any(not 0 <= q < n for q in out_q) or len(set(out_q)) != len(out_q):
        raise ValueError(f"invalid output qubits {out_q} for {n} qubits")
    _check_size(protocol, n, len(out_q))
    n_inputs = max(1, len(test.context.inputs))
    budget = n_inputs * circuit_budget(protocol, n if protocol is Protocol.PROCESS_TOMOGRAPHY else len(out_q),
                                       n_snapshots=test.shots, n_out=len(out_q))
    cap = circuit_cap()
    if cap is not None and budget > cap:
        raise BudgetExceeded(f"{protocol.value} needs {budget} circuits, cap is {cap}")

    tally = _Tally()
    if protocol is Protocol.PROCESS_TOMOGRAPHY:
        verdicts = _run_process(test, circuit, out_q, tally)
    elif protocol is Protocol.STATE_TOMOGRAPHY:
        verdicts = _run_state(test, circuit, out_q, tally)
    elif protocol is Protocol.CLASSICAL_SHADOWS:
        verdicts = _run_shadows(test, circuit, out_q, tally)
    else:
        verdicts = _run_counts(test, circuit, out_q, tally, protocol)

    worst = min(verdicts, key=lambda v: v.probability)
    verdict = worst.with_meta(shots=test.shots, seed=test.seed, assertion_kind=test.assertion.kind)
    return TestReport(
        name=test.name,
        verdict=verdict,
        protocol_used=protocol,
        total_circuits_executed=tally.circuits,
        total_shots=tally.shots,
        seed=test.seed,
        wall_time=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepPoint:
    shots: int
    mean_probability: float
    stddev: float
    n_seeds: int


def shot_sweep(test: UnitTest, shot_counts, seeds_per_point: int = 1):
    """Mean and spread of the assertion probability versus shot count.

    Run j at every shot count uses seed ``derive_seed(test.seed, j)``, so
    points differ only in the number of shots.
    """
    shot_counts = [int(s) for s in shot_counts]
    if not shot_counts or any(b <= a for a, b in zip(shot_counts, shot_counts[1:])):
        raise ValueError("shot counts must be nonempty and strictly ascending")
    if seeds_per_point < 1:
        raise ValueError("seeds_per_point must be positive")
    points = []
    for shots in shot_counts:
        probs = np.array([
            run_unit_test(test.replace(shots=shots, seed=derive_seed(test.seed, j))).probability
            for j in range(seeds_per_point)
        ])
        points.append(SweepPoint(shots, float(probs.mean()), float(probs.std()), seeds_per_point))
    return points


def sweep_to_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["shots", "mean_probability", "stddev"])
    for p in points:
        w.writerow([p.shots, repr(p.mean_probability), repr(p.stddev)])
    return buf.getvalue()
