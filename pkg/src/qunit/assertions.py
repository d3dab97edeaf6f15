"""Probabilistic assertions over reconstructed states, channels and counts.

Each check returns an :class:`AssertionVerdict` holding a probability in
[0, 1] and the pass/fail decision ``probability >= threshold``.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateExpected, DimensionMismatch, NotPSD, UnsupportedFunctional
from .simulator import Counts, DensityMatrix, PSD_TOL
from .tomography import ChoiMatrix, PauliString


class Method(enum.Enum):
    FIDELITY = "fidelity"
    PROCESS_FIDELITY = "process_fidelity"
    CHI2_P_VALUE = "chi2_p_value"
    EXACT_MATCH = "exact_match"
    TOLERANCE = "tolerance"


DEFAULT_THRESHOLDS = {
    Method.FIDELITY: 0.5,
    Method.PROCESS_FIDELITY: 0.5,
    Method.CHI2_P_VALUE: 0.05,
    Method.EXACT_MATCH: 1.0,
    Method.TOLERANCE: 0.5,
}


@dataclass(frozen=True)
class AssertionVerdict:
    probability: float
    passed: bool
    threshold: float
    method: Method
    shots: int | None = None
    seed: int | None = None
    assertion_kind: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        if self.passed != (self.probability >= self.threshold):
            raise ValueError("passed must equal probability >= threshold")

    @classmethod
    def evaluate(cls, probability: float, method: Method, threshold: float | None = None, **meta) -> "AssertionVerdict":
        t = DEFAULT_THRESHOLDS[method] if threshold is None else float(threshold)
        p = float(np.clip(probability, 0.0, 1.0))
        return cls(p, p >= t, t, method, **meta)

    def with_threshold(self, threshold: float) -> "AssertionVerdict":
        return dataclasses.replace(self, threshold=threshold, passed=self.probability >= threshold)

    def with_meta(self, **meta) -> "AssertionVerdict":
        return dataclasses.replace(self, **meta)

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "passed": self.passed,
            "threshold": self.threshold,
            "method": self.method.value,
            "shots": self.shots,
            "seed": self.seed,
            "assertion_kind": self.assertion_kind,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# assertion kinds


@dataclass(frozen=True, eq=False)
class StateEquals:
    """Expected output state; a tuple gives one state per input of a state set."""

    expected: DensityMatrix | tuple
    kind = "state_equals"

    def expected_for(self, i: int) -> DensityMatrix:
        if isinstance(self.expected, DensityMatrix):
            return self.expected
        return self.expected[i]


@dataclass(frozen=True, eq=False)
class ChoiEquals:
    expected: ChoiMatrix
    kind = "choi_equals"


@dataclass(frozen=True, eq=False)
class DistributionEquals:
    expected: np.ndarray
    kind = "distribution_equals"

    def __post_init__(self):
        p = np.asarray(self.expected, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ValueError("expected distribution must be a nonnegative vector summing to 1")
        p.setflags(write=False)
        object.__setattr__(self, "expected", p)


class FunctionalKind(enum.Enum):
    EXPECTATION = "expectation"
    PURITY = "purity"


@dataclass(frozen=True)
class Functional:
    kind: FunctionalKind
    observable: PauliString | None = None

    def __post_init__(self):
        if self.kind is FunctionalKind.EXPECTATION and self.observable is None:
            raise UnsupportedFunctional("expectation functional needs an observable")

    @classmethod
    def expectation(cls, observable) -> "Functional":
        obs = observable if isinstance(observable, PauliString) else PauliString(observable)
        return cls(FunctionalKind.EXPECTATION, obs)

    @classmethod
    def purity(cls) -> "Functional":
        return cls(FunctionalKind.PURITY)

    def __call__(self, rho: DensityMatrix) -> float:
        if self.kind is FunctionalKind.PURITY:
            return rho.purity()
        if self.observable.n_qubits != rho.n_qubits:
            raise DimensionMismatch("observable and state sizes differ")
        return rho.expectation(self.observable.matrix())

    def __str__(self):
        return "purity" if self.kind is FunctionalKind.PURITY else f"expectation({self.observable})"


@dataclass(frozen=True)
class FunctionalEquals:
    functional: Functional
    p_expected: float
    tolerance: float = 0.05
    kind = "functional"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class Deterministic:
    expected_bitstring: str
    kind = "deterministic"

    def __post_init__(self):
        if not self.expected_bitstring or set(self.expected_bitstring) - {"0", "1"}:
            raise ValueError(f"invalid bitstring {self.expected_bitstring!r}")


Assertion = StateEquals | ChoiEquals | DistributionEquals | FunctionalEquals | Deterministic


# ---------------------------------------------------------------------------
# distance measures


def _matrices(rho, sigma):
    a = rho.data if isinstance(rho, (DensityMatrix, ChoiMatrix)) else np.asarray(rho, dtype=complex)
    b = sigma.data if isinstance(sigma, (DensityMatrix, ChoiMatrix)) else np.asarray(sigma, dtype=complex)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of rho - sigma."""
    a, b = _matrices(rho, sigma)
    diff = a - b
    return float(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def _sqrt_factor(m, cutoff=1e-12):
    lam, v = np.linalg.eigh((m + m.conj().T) / 2)
    keep = lam > cutoff
    return v[:, keep] * np.sqrt(lam[keep]), int(keep.sum())


def fidelity(rho, sigma) -> float:
    """Squared Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Works in the support of the lower-rank argument, so pure states reduce
    to an overlap computation.
    """
    a, b = _matrices(rho, sigma)
    fa, ra = _sqrt_factor(a)
    fb, rb = _sqrt_factor(b)
    f, other = (fa, b) if ra <= rb else (fb, a)
    # sqrt(rho) sigma sqrt(rho) shares its nonzero spectrum with F^dag sigma F
    m = f.conj().T @ other @ f
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2)
    return float(np.clip(np.sqrt(np.clip(lam, 0, None)).sum() ** 2, 0.0, 1.0))


# ---------------------------------------------------------------------------
# checks


def assert_state_equals(rho_est, rho_expected, threshold: float | None = None) -> AssertionVerdict:
    return AssertionVerdict.evaluate(
        fidelity(rho_est, rho_expected), Method.FIDELITY, threshold, assertion_kind=StateEquals.kind
    )


def assert_choi_equals(c_est: ChoiMatrix, c_expected: ChoiMatrix, threshold: float | None = None) -> AssertionVerdict:
    for c in (c_est, c_expected):
        if np.linalg.eigvalsh((c.data + c.data.conj().T) / 2).min() < -PSD_TOL:
            raise NotPSD("Choi matrix is not positive semidefinite; project the estimate first")
    return AssertionVerdict.evaluate(
        fidelity(c_est, c_expected), Method.PROCESS_FIDELITY, threshold, assertion_kind=ChoiEquals.kind
    )


def pool_bins(observed, expected, min_expected: float = 5.0):
    """Merge bins whose expected count is below ``min_expected``.

    The smallest offending bin is repeatedly merged into its smaller
    neighbour until every bin qualifies or one bin is left.
    """
    obs = [float(x) for x in observed]
    exp = [float(x) for x in expected]
    while len(exp) > 1:
        i = int(np.argmin(exp))
        if exp[i] >= min_expected:
            break
        if i == 0:
            j = 1
        elif i == len(exp) - 1:
            j = i - 1
        else:
            j = i - 1 if exp[i - 1] <= exp[i + 1] else i + 1
        lo, hi = min(i, j), max(i, j)
        obs[lo:hi + 1] = [obs[lo] + obs[hi]]
        exp[lo:hi + 1] = [exp[lo] + exp[hi]]
    return np.array(obs), np.array(exp)


def chi2_statistic(observed, expected_probs):
    """Pearson statistic and degrees of freedom after pooling."""
    observed = np.asarray(observed, dtype=float)
    p = np.asarray(expected_probs, dtype=float)
    if observed.shape != p.shape:
        raise DimensionMismatch(f"{observed.size} observed bins vs {p.size} expected")
    if abs(p.sum() - 1) > 1e-9:
        raise ValueError("expected distribution must sum to 1")
    shots = observed.sum()
    if shots < 1:
        raise ValueError("need at least one shot")
    obs, exp = pool_bins(observed, p * shots)
    if len(exp) < 2:
        raise DegenerateExpected("fewer than two bins after pooling")
    return float(((obs - exp) ** 2 / exp).sum()), len(exp) - 1


def chi2_assert(counts: Counts, expected, threshold: float | None = None) -> AssertionVerdict:
    stat, dof = chi2_statistic(counts.as_array(), expected)
    return AssertionVerdict.evaluate(
        chi2.sf(stat, dof),
        Method.CHI2_P_VALUE,
        threshold,
        shots=counts.shots,
        assertion_kind=DistributionEquals.kind,
    )


def deterministic_assert(counts: Counts, expected_bitstring: str, threshold: float | None = None) -> AssertionVerdict:
    if counts.shots < 1:
        raise ValueError("need at least one shot")
    if len(expected_bitstring) != counts.n_qubits:
        raise DimensionMismatch("bitstring length differs from the measured register")
    frac = counts.get(expected_bitstring) / counts.shots
    return AssertionVerdict.evaluate(
        frac, Method.EXACT_MATCH, threshold, shots=counts.shots, assertion_kind=Deterministic.kind
    )


def parity_counts(counts: Counts, observable: PauliString) -> np.ndarray:
    """Counts of even and odd parity over the observable's support."""
    if not observable.is_diagonal:
        raise UnsupportedFunctional(f"{observable} is not diagonal in the computational basis")
    if observable.n_qubits != counts.n_qubits:
        raise DimensionMismatch("observable and register sizes differ")
    mask = int("".join("1" if c == "Z" else "0" for c in observable.letters), 2)
    arr = counts.as_array()
    odd = np.array([bin(i & mask).count("1") % 2 for i in range(arr.size)], dtype=bool)
    return np.array([arr[~odd].sum(), arr[odd].sum()])


def functional_assert(data, assertion: FunctionalEquals, threshold: float | None = None) -> AssertionVerdict:
    """Check f[rho] = p_expected from a reconstructed state or from counts.

    From a state the probability is the linear ramp
    1 - min(1, |f - p_expected| / tolerance). From counts only diagonal
    expectation values are supported; they reduce to a two-bin chi-squared
    test of the parity outcomes against ((1 + p)/2, (1 - p)/2).
    """
    fn = assertion.functional
    if isinstance(data, Counts):
        if fn.kind is not FunctionalKind.EXPECTATION:
            raise UnsupportedFunctional(f"{fn} cannot be evaluated from counts")
        p = float(np.clip(assertion.p_expected, -1, 1))
        stat, dof = chi2_statistic(parity_counts(data, fn.observable), [(1 + p) / 2, (1 - p) / 2])
        return AssertionVerdict.evaluate(
            chi2.sf(stat, dof), Method.CHI2_P_VALUE, threshold, shots=data.shots, assertion_kind=assertion.kind
        )
    value = float(data) if np.isscalar(data) else fn(data)
    ramp = 1.0 - min(1.0, abs(value - assertion.p_expected) / assertion.tolerance)
    return AssertionVerdict.evaluate(ramp, Method.TOLERANCE, threshold, assertion_kind=assertion.kind)
