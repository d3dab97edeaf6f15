import json

import numpy as np
import pytest
from conftest import random_circuit, random_density
from oracle import fidelity as fidelity_oracle, run_statevector, unitary
from scipy.stats import chisquare

from qunit.assertions import (
    AssertionVerdict,
    DistributionEquals,
    Functional,
    FunctionalEquals,
    Method,
    assert_choi_equals,
    assert_state_equals,
    chi2_assert,
    chi2_statistic,
    deterministic_assert,
    fidelity,
    functional_assert,
    pool_bins,
    trace_distance,
)
from qunit.case_studies import circuit_choi, ghz_state, sample_spec
from qunit.circuit import bind
from qunit.errors import DegenerateExpected, DimensionMismatch, NotPSD, UnsupportedFunctional
from qunit.simulator import Counts, DensityMatrix, KrausChannel, sample_probabilities
from qunit.tomography import ChoiMatrix, kraus_to_choi


def ket(bits):
    return DensityMatrix.basis(bits)


def sample_output(name):
    psi = run_statevector(bind(sample_spec(name)))
    return DensityMatrix.from_statevector(psi)


# ---------------------------------------------------------------------------
# distances


def test_trace_distance_examples():
    assert trace_distance(ket("0"), ket("0")) == 0
    assert trace_distance(ket("0"), ket("1")) == pytest.approx(1.0)
    assert trace_distance(ket("0"), DensityMatrix.maximally_mixed(1)) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        trace_distance(ket("0"), ket("00"))


def test_fidelity_on_sample_outputs():
    ghz = ghz_state()
    assert abs(fidelity(sample_output("sample1"), ghz) - 1) < 1e-9
    assert abs(fidelity(sample_output("sample2"), ghz) - 0.25) < 1e-9
    assert abs(fidelity(sample_output("sample3"), ghz)) < 1e-9


@pytest.mark.parametrize("ranks", [(1, 1), (1, 4), (2, 3), (4, 4), (8, 2)])
def test_fidelity_matches_sqrtm_oracle(ranks, rng):
    n = 3 if max(ranks) > 4 else 2
    for _ in range(5):
        a = random_density(n, rng, rank=ranks[0])
        b = random_density(n, rng, rank=ranks[1])
        assert fidelity(a, b) == pytest.approx(fidelity_oracle(a.data, b.data), abs=1e-7)


def test_fidelity_pure_states_is_overlap(rng):
    for _ in range(10):
        u = rng.normal(size=4) + 1j * rng.normal(size=4)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        f = fidelity(DensityMatrix.from_statevector(u), DensityMatrix.from_statevector(v))
        assert f == pytest.approx(abs(np.vdot(u, v)) ** 2, abs=1e-12)


def test_fidelity_classical_states(rng):
    p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    f = fidelity(DensityMatrix(2, np.diag(p)), DensityMatrix(2, np.diag(q)))
    assert f == pytest.approx(np.sum(np.sqrt(p * q)) ** 2, abs=1e-12)


def test_fuchs_van_de_graaf_sandwich(rng):
    for _ in range(200):
        n = int(rng.integers(1, 4))
        a = random_density(n, rng, rank=int(rng.integers(1, 2**n + 1)))
        b = random_density(n, rng, rank=int(rng.integers(1, 2**n + 1)))
        t, f = trace_distance(a, b), fidelity(a, b)
        assert 1 - t <= np.sqrt(f) + 1e-9
        assert np.sqrt(f) <= np.sqrt(1 - t**2) + 1e-9
        assert (1 - t) ** 2 <= f + 1e-9 and f <= 1 - t**2 + 1e-9


def test_lower_bound_holds_for_root_fidelity_only():
    # p = (1/2, 1/2, 0), q = (1/2, 0, 1/2): T = 1/2 while F = 1/4
    a = DensityMatrix(2, np.diag([0.5, 0.5, 0, 0]))
    b = DensityMatrix(2, np.diag([0.5, 0, 0.5, 0]))
    t, f = trace_distance(a, b), fidelity(a, b)
    assert t == pytest.approx(0.5) and f == pytest.approx(0.25)
    assert 1 - t > f
    assert 1 - t <= np.sqrt(f) + 1e-12


def test_fidelity_symmetry_bounds_and_identity(rng):
    for _ in range(30):
        a, b = random_density(2, rng), random_density(2, rng, rank=2)
        f = fidelity(a, b)
        assert 0 <= f <= 1
        assert f == pytest.approx(fidelity(b, a), abs=1e-9)
        assert fidelity(a, a) == pytest.approx(1, abs=1e-9)
        assert f < 1 - 1e-9


def test_fidelity_unitary_invariance(rng):
    for _ in range(20):
        a, b = random_density(3, rng), random_density(3, rng, rank=1)
        u = unitary(random_circuit(3, 15, rng))
        ua = DensityMatrix(3, u @ a.data @ u.conj().T)
        ub = DensityMatrix(3, u @ b.data @ u.conj().T)
        assert fidelity(ua, ub) == pytest.approx(fidelity(a, b), abs=1e-9)


# ---------------------------------------------------------------------------
# state and channel assertions


def test_assert_state_equals():
    v = assert_state_equals(ghz_state(), ghz_state())
    assert v.passed and v.probability == pytest.approx(1)
    assert v.method is Method.FIDELITY and v.threshold == 0.5
    v = assert_state_equals(sample_output("sample3"), ghz_state())
    assert not v.passed and v.probability < 1e-9


def test_assert_choi_equals():
    c1 = circuit_choi(bind(sample_spec("sample1")))
    c4 = circuit_choi(bind(sample_spec("sample4")))
    assert assert_choi_equals(c1, c1).probability == pytest.approx(1)
    v = assert_choi_equals(c4, c1)
    assert v.method is Method.PROCESS_FIDELITY
    assert v.probability < 0.5 and not v.passed
    # direct computation: |tr(U1^dag U4)|^2 / d^2
    u1, u4 = unitary(bind(sample_spec("sample1"))), unitary(bind(sample_spec("sample4")))
    assert v.probability == pytest.approx(abs(np.trace(u1.conj().T @ u4)) ** 2 / 64, abs=1e-9)


def test_choi_identity_vs_x_is_zero():
    ident = kraus_to_choi(KrausChannel((np.eye(2),)))
    flip = kraus_to_choi(KrausChannel((np.array([[0, 1], [1, 0]]),)))
    assert assert_choi_equals(ident, flip).probability == pytest.approx(0, abs=1e-12)


def test_choi_equals_rejects_non_psd():
    good = kraus_to_choi(KrausChannel((np.eye(2),)))
    bad = ChoiMatrix(1, 1, np.diag([0.6, 0.5, 0.0, -0.1]), check=False)
    with pytest.raises(NotPSD):
        assert_choi_equals(bad, good)


# ---------------------------------------------------------------------------
# chi-squared


def test_chi2_exact_counts():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    counts = Counts(2, 1000, {i: int(1000 * x) for i, x in enumerate(p)})
    v = chi2_assert(counts, p)
    assert v.probability == pytest.approx(1.0)
    assert v.method is Method.CHI2_P_VALUE and v.passed


def test_chi2_all_mass_on_one_outcome():
    v = chi2_assert(Counts(3, 1000, {5: 1000}), np.full(8, 1 / 8))
    assert v.probability < 1e-6 and not v.passed


def test_chi2_matches_scipy_without_pooling(rng):
    p = rng.dirichlet(np.ones(6) * 5)
    counts = sample_probabilities(p, 5000, seed=4)
    obs = counts.as_array()[:6]
    stat, dof = chi2_statistic(obs, p)
    ref = chisquare(obs, p * obs.sum())
    assert dof == 5
    assert stat == pytest.approx(ref.statistic)


def test_pooling_merges_small_bins():
    obs, exp = pool_bins([1, 2, 50, 3, 40], [1.0, 3.0, 50.0, 2.0, 44.0])
    assert exp.tolist() == [54.0, 46.0]
    assert obs.tolist() == [53.0, 43.0]
    assert obs.sum() == 96


def test_pooling_keeps_large_bins():
    obs, exp = pool_bins([10, 20, 30], [15.0, 15.0, 30.0])
    assert exp.tolist() == [15.0, 15.0, 30.0]


def test_chi2_degenerate():
    with pytest.raises(DegenerateExpected):
        chi2_assert(Counts(1, 4, {0: 4}), np.array([0.5, 0.5]))
    with pytest.raises(DegenerateExpected):
        chi2_assert(Counts(1, 100, {0: 100}), np.array([1.0, 0.0]))


def test_chi2_calibration():
    p = np.array([0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05])
    rejected = [not chi2_assert(sample_probabilities(p, 1000, seed=s), p).passed for s in range(500)]
    assert np.mean(rejected) <= 0.07


def test_distribution_validation():
    with pytest.raises(ValueError):
        DistributionEquals(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        DistributionEquals(np.array([1.5, -0.5]))


# ---------------------------------------------------------------------------
# deterministic and functional


@pytest.mark.parametrize(
    "table, prob, passed",
    [({2: 100}, 1.0, True), ({2: 99, 3: 1}, 0.99, False), ({1: 100}, 0.0, False)],
)
def test_deterministic_assert(table, prob, passed):
    v = deterministic_assert(Counts(2, 100, table), "10")
    assert v.probability == pytest.approx(prob)
    assert v.passed is passed
    assert v.method is Method.EXACT_MATCH


def test_purity_functional():
    a = FunctionalEquals(Functional.purity(), 1.0, 0.05)
    assert functional_assert(ghz_state(), a).probability == pytest.approx(1)
    b = FunctionalEquals(Functional.purity(), 0.125, 0.05)
    assert functional_assert(DensityMatrix.maximally_mixed(3), b).probability == pytest.approx(1)
    c = FunctionalEquals(Functional.purity(), 0.95, 0.1)
    assert functional_assert(ghz_state(), c).probability == pytest.approx(0.5)
    with pytest.raises(UnsupportedFunctional):
        functional_assert(Counts(1, 1, {0: 1}), a)


def test_expectation_functional_from_counts():
    ghz = ghz_state()
    assert ghz.expectation(Functional.expectation("ZZZ").observable.matrix()) == pytest.approx(0)
    p = np.diagonal(ghz.data).real
    a = FunctionalEquals(Functional.expectation("ZZZ"), 0.0, 0.05)
    passes = [functional_assert(sample_probabilities(p, 10_000, seed=s), a).passed for s in range(20)]
    assert sum(passes) >= 17
    wrong = FunctionalEquals(Functional.expectation("ZZZ"), 0.5, 0.05)
    assert not functional_assert(sample_probabilities(p, 10_000, seed=0), wrong).passed
    with pytest.raises(UnsupportedFunctional):
        functional_assert(Counts(3, 1, {0: 1}), FunctionalEquals(Functional.expectation("XZZ"), 0, 0.1))


def test_expectation_functional_from_state():
    a = FunctionalEquals(Functional.expectation("XXX"), -1.0, 0.1)
    v = functional_assert(ghz_state(), a)
    assert v.probability == pytest.approx(1) and v.method is Method.TOLERANCE


# ---------------------------------------------------------------------------
# verdicts


def test_verdict_invariant():
    with pytest.raises(ValueError):
        AssertionVerdict(0.4, True, 0.5, Method.FIDELITY)
    with pytest.raises(ValueError):
        AssertionVerdict(1.2, True, 0.5, Method.FIDELITY)


def test_threshold_monotonicity(rng):
    for p in rng.random(50):
        v = AssertionVerdict.evaluate(p, Method.FIDELITY)
        for t in np.linspace(0, 1, 11):
            raised = v.with_threshold(max(t, v.threshold))
            assert not (not v.passed and raised.passed)


def test_verdict_json():
    v = AssertionVerdict.evaluate(0.75, Method.FIDELITY).with_meta(shots=10, seed=3, assertion_kind="state_equals")
    d = json.loads(v.to_json())
    assert d == {
        "probability": 0.75,
        "passed": True,
        "threshold": 0.5,
        "method": "fidelity",
        "shots": 10,
        "seed": 3,
        "assertion_kind": "state_equals",
    }


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        fidelity(ket("0"), ket("00"))
    with pytest.raises(DimensionMismatch):
        deterministic_assert(Counts(2, 1, {0: 1}), "000")

