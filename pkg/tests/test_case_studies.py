import json

import numpy as np
import pytest
from oracle import run_statevector

from qunit.assertions import trace_distance
from qunit.case_studies import (
    GHZ_GROUND_TRUTH,
    SAMPLE_MUTATIONS,
    SAMPLE_SOURCES,
    CaseStudy,
    corpus_documents,
    ghz_corpus,
    ghz_state,
    iqft_delta_test,
    iqft_expected_distribution,
    iqft_input_state,
    iqft_mutant,
    phase_estimation_corpus,
    sample_spec,
    shor_eigenstate,
    shor_input_state,
    shor_subroutine1_spec,
    shor_subroutine1_test,
)
from qunit.circuit import Circuit, Gate, GateKind, apply_mutation, bind
from qunit.cli import CORPUS_DIR
from qunit.errors import BindingError, NotCoprime
from qunit.harness import run_unit_test
from qunit.simulator import DensityMatrix, NoiseModel, apply_circuit, reduce_qubits
from qunit.testfile import parse_test


def test_ghz_state_matches_sample1_output():
    psi = run_statevector(bind(sample_spec("sample1")))
    expected = np.zeros(8)
    expected[0], expected[7] = 1 / np.sqrt(2), -1 / np.sqrt(2)
    assert np.allclose(psi, expected, atol=1e-12)
    assert np.allclose(ghz_state().data, np.outer(expected, expected))


@pytest.mark.parametrize("name", ["sample2", "sample3", "sample4"])
def test_mutations_reproduce_samples(name):
    base = bind(sample_spec("sample1"))
    assert apply_mutation(base, SAMPLE_MUTATIONS[name]).gates == bind(sample_spec(name)).gates


@pytest.mark.parametrize("name, expected", [("sample1", 1.0), ("sample2", 0.25), ("sample3", 0.0), ("sample4", 1.0)])
def test_sample_fidelities_against_statevector_oracle(name, expected):
    # pure states: fidelity is the squared overlap
    psi = run_statevector(bind(sample_spec(name)))
    ghz = np.zeros(8)
    ghz[0], ghz[7] = 1 / np.sqrt(2), -1 / np.sqrt(2)
    assert abs(np.vdot(ghz, psi)) ** 2 == pytest.approx(expected, abs=1e-9)


def test_ghz_corpus_exact_verdicts_match_ground_truth():
    study = ghz_corpus(shots=None)
    assert len(study.tests) == 2 * len(SAMPLE_SOURCES)
    for t in study.tests:
        assert run_unit_test(t).passed == study.ground_truth[t.name], t.name


def test_case_study_requires_full_ground_truth():
    study = ghz_corpus(shots=None)
    with pytest.raises(ValueError):
        CaseStudy("x", study.subroutines, study.tests, {})
    assert study.test("sample4_fixed_input").name == "sample4_fixed_input"
    with pytest.raises(KeyError):
        study.test("nope")


def test_ground_truth_table():
    assert GHZ_GROUND_TRUTH == {
        "sample1": (True, True),
        "sample2": (False, False),
        "sample3": (False, False),
        "sample4": (False, True),
    }


# ---------------------------------------------------------------------------
# modular multiplication


def test_eigenstate_is_invariant_for_every_theta():
    spec = shor_subroutine1_spec()
    target = DensityMatrix.from_statevector(shor_eigenstate())
    h_only = Circuit(5, (Gate(GateKind.H, (0,)),))
    for theta in range(1, 9):
        out = apply_circuit(shor_input_state(), bind(spec, (theta,)))
        reduced = DensityMatrix(4, reduce_qubits(out.data, 5, (1, 2, 3, 4)))
        assert trace_distance(reduced, target) < 1e-9
        # eigenvalue 1: no kickback, so only the Hadamard acts
        assert trace_distance(out, apply_circuit(shor_input_state(), h_only)) < 1e-9


def test_eigenstate_support_is_the_orbit_of_two():
    psi = shor_eigenstate()
    assert set(np.flatnonzero(np.abs(psi) > 1e-12)) == {1, 2, 4, 5, 7, 8}


@pytest.mark.parametrize("theta", [0, 9, 1.5])
def test_theta_out_of_range(theta):
    with pytest.raises(BindingError):
        bind(shor_subroutine1_spec(), (theta,))


def test_non_coprime_base():
    with pytest.raises(NotCoprime):
        shor_subroutine1_spec(3, 9)


def test_modmul_noiseless_sampled_passes():
    r = run_unit_test(shor_subroutine1_test(shots=10**4, seed=3))
    assert r.passed and r.probability > 0.9
    assert r.name == "modmul_a2_N9_theta1"
    assert r.total_circuits_executed == 81


def test_modmul_bitflip_lowers_probability():
    clean = run_unit_test(shor_subroutine1_test(shots=10**5))
    noisy = run_unit_test(shor_subroutine1_test(shots=10**5, noise=NoiseModel.bit_flip(0.007)))
    assert noisy.probability < clean.probability


# ---------------------------------------------------------------------------
# inverse QFT


@pytest.mark.parametrize("n", [2, 3, 4, 8])
def test_iqft_expected_distribution_is_cosine_profile(n):
    N = 2**n
    k = np.arange(N)
    assert np.allclose(iqft_expected_distribution(n), (1 + np.cos(2 * np.pi * k / N)) / N, atol=1e-12)


def test_iqft_expected_distribution_against_explicit_dft():
    psi = iqft_input_state(2)
    w = np.exp(-2j * np.pi / 4)
    dft = np.array([[w ** (j * k) for k in range(4)] for j in range(4)]) / 2
    assert np.allclose(iqft_expected_distribution(2), np.abs(dft @ psi) ** 2, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_iqft_circuit_output_matches_expected(n):
    from qunit.library import build_qft_inverse
    from oracle import unitary

    out = unitary(build_qft_inverse(n)) @ iqft_input_state(n)
    assert np.allclose(np.abs(out) ** 2, iqft_expected_distribution(n), atol=1e-12)


def test_iqft_mutant_removes_one_gate():
    from qunit.library import build_qft_inverse

    assert len(iqft_mutant(4).gates) == len(build_qft_inverse(4).gates) - 1


def test_iqft_mutant_is_killed_on_every_seed():
    killed = [not run_unit_test(iqft_delta_test(mutated=True, shots=10**5, seed=s)).passed for s in range(20)]
    assert all(killed)


@pytest.mark.parametrize("n", [1, 11])
def test_iqft_register_bounds(n):
    with pytest.raises(ValueError):
        iqft_delta_test(n)


def test_phase_estimation_corpus():
    study = phase_estimation_corpus(shots=10**4, seed=2)
    for t in study.tests:
        assert run_unit_test(t).passed == study.ground_truth[t.name], t.name


# ---------------------------------------------------------------------------
# shipped corpus


def test_shipped_corpus_is_up_to_date():
    docs = corpus_documents()
    shipped = sorted(p.name for p in CORPUS_DIR.glob("*.json"))
    assert shipped == sorted(docs)
    for name, doc in docs.items():
        assert json.loads((CORPUS_DIR / name).read_text()) == json.loads(json.dumps(doc))


@pytest.mark.parametrize("name", sorted(corpus_documents()))
def test_corpus_documents_parse(name):
    tf = parse_test(json.loads((CORPUS_DIR / name).read_text()), CORPUS_DIR)
    assert tf.test.name


@pytest.mark.parametrize("name", [f"sample{i}_{c}" for i in range(1, 5) for c in ("full_space", "fixed_input")])
def test_corpus_files_agree_with_ground_truth(name):
    tf = parse_test(json.loads((CORPUS_DIR / f"{name}.json").read_text()), CORPUS_DIR)
    sample, ctx = name.split("_", 1)
    expected = GHZ_GROUND_TRUTH[sample][ctx == "fixed_input"]
    assert run_unit_test(tf.test.replace(shots=None)).passed == expected
