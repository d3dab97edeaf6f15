"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even
when output capture is on).
"""
import numpy as np
import pytest
from conftest import random_circuit, random_density
from oracle import choi_state, ptm as oracle_ptm
from scipy.stats import linregress

from qunit.assertions import chi2_assert, fidelity, trace_distance
from qunit.case_studies import (
    GHZ_GROUND_TRUTH,
    circuit_choi,
    ghz_state,
    ghz_test,
    iqft_delta_test,
    iqft_expected_distribution,
    sample_spec,
    shor_subroutine1_test,
)
from qunit.circuit import Circuit, bind
from qunit.harness import Protocol, circuit_budget, run_unit_test, shot_sweep
from qunit.simulator import (
    DensityMatrix,
    NoiseModel,
    apply_circuit,
    circuit_to_kraus,
    derive_seed,
    evolve,
    outcome_probabilities,
    sample_probabilities,
)
from qunit.tomography import (
    choi_to_kraus,
    choi_to_ptm,
    kraus_to_choi,
    preparation_unitary,
    process_tomography,
    ptm_to_choi,
)

SWEEP_SHOTS = [10, 100, 1000, 10**4]


@pytest.fixture
def record(capsys):
    def _record(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return _record


def test_criterion_1_ground_truth_table(record):
    lines, ok = [], True
    for name, expected in GHZ_GROUND_TRUTH.items():
        for with_context, want in zip((False, True), expected):
            votes = [run_unit_test(ghz_test(name, with_context, shots=10**5, seed=s)).passed for s in range(10)]
            got = sum(votes) > len(votes) / 2
            ok &= got == want
            lines.append(f"{name}/{'ctx' if with_context else 'noctx'}={'P' if got else 'F'}({sum(votes)}/10)")
    assert record(1, ok, " ".join(lines))


def _monotone_within_sigma(points):
    last = points[-3:]
    return all(b.mean_probability >= a.mean_probability - max(a.stddev, b.stddev) for a, b in zip(last, last[1:]))


def test_criterion_2_shot_sweep_shape(record):
    ok, parts = True, []
    for with_context in (True, False):
        tag = "ctx" if with_context else "noctx"
        good = shot_sweep(ghz_test("sample1", with_context), SWEEP_SHOTS, 5)
        ok &= good[-1].mean_probability > 0.9 and _monotone_within_sigma(good)
        parts.append(f"sample1/{tag}=" + ",".join(f"{p.mean_probability:.3f}" for p in good))
        for name in ("sample2", "sample3"):
            bad = shot_sweep(ghz_test(name, with_context), SWEEP_SHOTS, 5)
            ok &= all(p.mean_probability < 0.3 for p in bad)
            parts.append(f"{name}/{tag}max={max(p.mean_probability for p in bad):.3f}")
    assert record(2, ok, " ".join(parts))


def test_criterion_3_depolarizing_degrades(record):
    clean = run_unit_test(ghz_test("sample1", True, shots=10**5)).probability
    noisy = run_unit_test(ghz_test("sample1", True, shots=10**5, noise=NoiseModel.depolarizing(0.01))).probability
    ok = 0.5 < noisy < clean
    assert record(3, ok, f"noiseless={clean:.4f} depolarizing(0.01)={noisy:.4f}")


def test_criterion_4_bitflip_ordering(record):
    ps = [0.0, 0.001, 0.003, 0.005, 0.007]
    probs = [run_unit_test(shor_subroutine1_test(noise=NoiseModel.bit_flip(p), shots=10**5)).probability for p in ps]
    decreasing = all(a > b for a, b in zip(probs, probs[1:]))
    r2 = linregress(ps[1:], probs[1:]).rvalue ** 2
    ok = decreasing and r2 > 0.9
    assert record(4, ok, "probs=" + ",".join(f"{x:.5f}" for x in probs) + f" R2={r2:.4f}")


def test_criterion_5_iqft_shot_threshold(record):
    def pass_rate(shots):
        return np.mean([run_unit_test(iqft_delta_test(4, shots=shots, seed=s)).passed for s in range(50)])

    high, low = pass_rate(10**4), pass_rate(10**2)
    ok = high >= 0.9 and low <= 0.6
    assert record(5, ok, f"pass rate 1e4 shots={high:.2f} (need >=0.90), 1e2 shots={low:.2f} (need <=0.60)")


def test_criterion_6_exact_oracles(record):
    ghz = ghz_state()
    out = {n: apply_circuit(DensityMatrix.basis("000"), bind(sample_spec(n))) for n in ("sample2", "sample3")}
    f2, f3 = fidelity(out["sample2"], ghz), fidelity(out["sample3"], ghz)
    choi = circuit_choi(Circuit(2, ())).data
    phi = np.eye(4).reshape(-1) / 2
    err = np.abs(choi - np.outer(phi, phi)).max()
    ok = abs(f2 - 0.25) < 1e-9 and abs(f3) < 1e-9 and err < 1e-9
    assert record(6, ok, f"F(sample2)={f2:.12f} F(sample3)={f3:.2e} |Choi(I)-Phi+|={err:.1e}")


def test_criterion_7_property_suites(record):
    rng = np.random.default_rng(7)
    checks = {}

    # trace and positivity preservation under noise
    worst = 0.0
    for noise in (NoiseModel.bit_flip(0.05), NoiseModel.depolarizing(0.1)):
        for n in (1, 2, 3):
            for _ in range(5):
                o = apply_circuit(random_density(n, rng), random_circuit(n, 10, rng), noise).data
                worst = max(worst, abs(np.trace(o) - 1), -np.linalg.eigvalsh(o).min())
    checks["trace_psd"] = worst < 1e-10

    # Fuchs-van de Graaf on the root fidelity: 1 - T <= sqrt(F) <= sqrt(1 - T^2)
    fvdg = True
    for i in range(200):
        n = 1 + i % 3
        a = random_density(n, rng, rank=int(rng.integers(1, 2**n + 1)))
        b = random_density(n, rng, rank=int(rng.integers(1, 2**n + 1)))
        t, f = trace_distance(a, b), fidelity(a, b)
        fvdg &= 1 - t - 1e-9 <= np.sqrt(f) <= np.sqrt(1 - t**2) + 1e-9
    checks["fvdg"] = fvdg

    # PTM <-> Choi <-> Kraus round trips
    worst = 0.0
    for n in (1, 2):
        for noise in (NoiseModel.bit_flip(0.1), NoiseModel.depolarizing(0.2)):
            k = circuit_to_kraus(random_circuit(n, 6, rng), noise)
            c = kraus_to_choi(k)
            worst = max(worst, np.abs(c.data - choi_state(k.operators)).max())
            p = choi_to_ptm(c)
            worst = max(worst, np.abs(p.data - oracle_ptm(k.operators, n)).max())
            worst = max(worst, np.abs(ptm_to_choi(p).data - c.data).max())
            worst = max(worst, np.abs(kraus_to_choi(choi_to_kraus(c)).data - c.data).max())
    checks["round_trip"] = worst < 1e-9

    # exact process tomography equals direct application
    worst = 0.0
    for n in (1, 2, 3):
        for _ in range(3):
            circuit = random_circuit(n, 8, rng)
            noise = NoiseModel.depolarizing(0.05)
            zero = DensityMatrix.zero(n).data

            def ex(label, setting, shots):
                u = preparation_unitary(label)
                return outcome_probabilities(evolve(u @ zero @ u.conj().T, circuit, noise), setting.basis_change())

            ptm = process_tomography(ex, n, None)
            for _ in range(3):
                rho = random_density(n, rng)
                worst = max(worst, np.abs(ptm.apply(rho).data - apply_circuit(rho, circuit, noise).data).max())
    checks["process_vs_direct"] = worst < 1e-6

    # chi-squared calibration at the 5% level
    p = iqft_expected_distribution(4)
    rejections = np.mean([not chi2_assert(sample_probabilities(p, 1000, derive_seed(99, i), 4), p).passed
                          for i in range(2000)])
    checks["chi2_calibration"] = rejections <= 0.07

    ok = all(checks.values())
    detail = " ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items()) + f" chi2_reject={rejections:.3f}"
    assert record(7, ok, detail)


def test_criterion_8_budget_law(record):
    process = run_unit_test(ghz_test("sample1", False, shots=100)).total_circuits_executed
    state = run_unit_test(ghz_test("sample1", True, shots=100)).total_circuits_executed
    ok = process == 1728 == circuit_budget(Protocol.PROCESS_TOMOGRAPHY, 3) and state == 27
    assert record(8, ok, f"process={process} state={state}")
