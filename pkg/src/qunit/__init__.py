"""qunit: context-aware unit testing for quantum subroutines on a density-matrix simulator."""

from .assertions import (
    AssertionVerdict,
    ChoiEquals,
    Deterministic,
    DistributionEquals,
    Functional,
    FunctionalEquals,
    Method,
    StateEquals,
    assert_choi_equals,
    assert_state_equals,
    chi2_assert,
    deterministic_assert,
    fidelity,
    functional_assert,
    trace_distance,
)
from .circuit import Circuit, Gate, GateKind, SubroutineSpec, apply_mutation, bind, parse_subroutine, serialize
from .harness import (
    ComputationalMeasurement,
    Context,
    DeterministicOutput,
    FixedState,
    FixedStateSet,
    FullSpace,
    Observables,
    Protocol,
    TestReport,
    UnitTest,
    Unrestricted,
    circuit_budget,
    run_unit_test,
    select_protocol,
    shot_sweep,
)
from .simulator import Counts, DensityMatrix, KrausChannel, NoiseModel, apply_circuit, circuit_to_kraus
from .tomography import (
    ChoiMatrix,
    PauliString,
    PauliTransferMatrix,
    classical_shadows,
    process_tomography,
    state_tomography,
)

__version__ = "0.1.0"
