"""State and process reconstruction from simulated measurement data.

Conventions
-----------
* A Pauli string ``"XZI"`` puts its first letter on qubit 0 (the most
  significant qubit). Strings are indexed in base 4 with I=0, X=1, Y=2, Z=3
  and the first letter most significant, so one qubit is ordered (I, X, Y, Z).
* Pauli transfer matrices are normalized: R[j, k] = tr(P_j L(P_k)) / d_out,
  which makes the first row (1, 0, ..., 0) for trace-preserving maps.
* Choi matrices are unit-trace and ordered input (x) output:
  C = (1/d_in) sum_ij |i><j| (x) L(|i><j|).

Executors
---------
State-level routines take ``executor(setting, shots)`` where ``setting`` is a
:class:`PauliString` over {X, Y, Z}; it must return the computational-basis
:class:`~qunit.simulator.Counts` observed after rotating by
``setting.basis_change()``, or an exact probability vector. Process
tomography takes ``executor(preparation, setting, shots)`` where
``preparation`` is a label over ``0 1 + r`` (``r`` is the +i eigenstate of Y).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import InitVar, dataclass

import numpy as np

from .errors import ExecutorFailure, InvalidState, NotPSD, QUnitError, TooLarge
from .simulator import (
    H,
    I2,
    S,
    X,
    Y,
    Z,
    Counts,
    DensityMatrix,
    KrausChannel,
    complex_pairs,
    from_complex_pairs,
    make_rng,
    matrix_from_bytes,
    matrix_to_bytes,
)

PAULI_STACK = np.stack([I2, X, Y, Z])
LETTERS = "IXYZ"
_CODE = {c: i for i, c in enumerate(LETTERS)}
# maps each Pauli eigenbasis onto the computational basis
_BASIS_CHANGE = {"I": I2, "X": H, "Y": H @ S.conj().T, "Z": I2}

MAX_PROCESS_QUBITS = 4
MAX_STATE_QUBITS = 6


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        letters = "".join(self.letters).upper()
        if not letters or set(letters) - set(LETTERS):
            raise ValueError(f"invalid Pauli string {self.letters!r}")
        object.__setattr__(self, "letters", letters)

    def __str__(self):
        return self.letters

    def __len__(self):
        return len(self.letters)

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def codes(self) -> np.ndarray:
        return np.array([_CODE[c] for c in self.letters])

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    @property
    def is_identity(self) -> bool:
        return self.weight == 0

    @property
    def is_diagonal(self) -> bool:
        return set(self.letters) <= {"I", "Z"}

    @property
    def index(self) -> int:
        idx = 0
        for c in self.letters:
            idx = 4 * idx + _CODE[c]
        return idx

    @classmethod
    def from_index(cls, index: int, n_qubits: int) -> "PauliString":
        letters = []
        for _ in range(n_qubits):
            index, r = divmod(index, 4)
            letters.append(LETTERS[r])
        return cls("".join(reversed(letters)))

    def matrix(self) -> np.ndarray:
        m = np.eye(1, dtype=complex)
        for c in self.letters:
            m = np.kron(m, PAULI_STACK[_CODE[c]])
        return m

    def basis_change(self) -> np.ndarray:
        """Unitary taking this string's eigenbasis to the computational basis."""
        m = np.eye(1, dtype=complex)
        for c in self.letters:
            m = np.kron(m, _BASIS_CHANGE[c])
        return m


def all_pauli_strings(n_qubits: int):
    return [PauliString("".join(p)) for p in itertools.product(LETTERS, repeat=n_qubits)]


def measurement_settings(n_qubits: int):
    """The 3^n full-weight settings, in index order."""
    return [PauliString("".join(p)) for p in itertools.product("XYZ", repeat=n_qubits)]


def pauli_to_matrix(coeffs, n_qubits: int) -> np.ndarray:
    """sum_k coeffs[k] P_k for a length-4^n coefficient vector."""
    t = np.asarray(coeffs, dtype=complex).reshape((4,) * n_qubits)
    for _ in range(n_qubits):
        t = np.tensordot(t, PAULI_STACK, axes=([0], [0]))
    # axes are now (r0, c0, r1, c1, ...)
    t = t.transpose(list(range(0, 2 * n_qubits, 2)) + list(range(1, 2 * n_qubits, 2)))
    d = 2**n_qubits
    return t.reshape(d, d)


def matrix_to_pauli(m: np.ndarray, n_qubits: int) -> np.ndarray:
    """Vector of tr(P_k m) over all 4^n Pauli strings."""
    t = np.asarray(m, dtype=complex).reshape((2,) * (2 * n_qubits))
    # tr(P m) = sum_ab P[a, b] m[b, a]; interleave the (b_q, a_q) axes per qubit
    perm = [ax for q in range(n_qubits) for ax in (q, n_qubits + q)]
    t = t.transpose(perm)
    for _ in range(n_qubits):
        t = np.tensordot(t, PAULI_STACK, axes=([0, 1], [2, 1]))
    return t.reshape(-1)


def project_to_density(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest unit-trace PSD matrix.

    Hermitizes, then projects the spectrum onto the probability simplex:
    negative mass is truncated and the deficit redistributed evenly over the
    surviving eigenvalues.
    """
    m = np.asarray(m, dtype=complex)
    m = (m + m.conj().T) / 2
    lam, v = np.linalg.eigh(m)
    u = np.sort(lam)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u - css / j > 0)[-1]
    shift = css[rho] / (rho + 1)
    w = np.clip(lam - shift, 0.0, None)
    out = (v * w) @ v.conj().T
    return (out + out.conj().T) / 2


# ---------------------------------------------------------------------------
# expectation estimation


def _outcome_distribution(result, n_qubits: int) -> np.ndarray:
    if isinstance(result, Counts):
        p = result.frequencies()
    else:
        p = np.asarray(result, dtype=float)
    if p.shape != (2**n_qubits,):
        raise ExecutorFailure(f"executor returned {p.shape} outcomes, expected {2**n_qubits}")
    return p


def _call(executor, *args):
    try:
        return executor(*args)
    except QUnitError:
        raise
    except Exception as exc:  # noqa: BLE001 - surface any executor crash uniformly
        raise ExecutorFailure(f"executor failed on {args[:-1]}: {exc}") from exc


def parity_expectations(p: np.ndarray, n_qubits: int) -> np.ndarray:
    """Walsh-Hadamard transform: E[mask] = sum_b p[b] (-1)^(b . mask)."""
    t = np.asarray(p, dtype=float).reshape((2,) * n_qubits)
    wh = np.array([[1.0, 1.0], [1.0, -1.0]])
    for q in range(n_qubits):
        t = np.moveaxis(np.tensordot(wh, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def _mask_bits(n_qubits: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n_qubits)), dtype=int).reshape(-1, n_qubits)


def expectation_vector(distributions, n_qubits: int) -> np.ndarray:
    """Pauli expectations from full-weight settings by marginalization.

    ``distributions`` maps each setting to its outcome distribution; every
    string is averaged over all settings that agree with it off the identity.
    """
    bits = _mask_bits(n_qubits)
    place = 4 ** np.arange(n_qubits - 1, -1, -1)
    sums = np.zeros(4**n_qubits)
    hits = np.zeros(4**n_qubits)
    for setting, p in distributions:
        idx = bits @ (setting.codes * place)
        np.add.at(sums, idx, parity_expectations(p, n_qubits))
        np.add.at(hits, idx, 1)
    if np.any(hits == 0):
        raise ExecutorFailure("settings do not cover every Pauli string")
    return sums / hits


def _collect(executor, n_qubits, shots):
    out = []
    for setting in measurement_settings(n_qubits):
        out.append((setting, _outcome_distribution(_call(executor, setting, shots), n_qubits)))
    return out


def estimate_pauli_expectations(executor, n_qubits: int, shots_per_setting: int) -> dict:
    """Estimate <P> for all 4^n Pauli strings from the 3^n full-weight settings."""
    vec = expectation_vector(_collect(executor, n_qubits, shots_per_setting), n_qubits)
    return {p: float(v) for p, v in zip(all_pauli_strings(n_qubits), vec)}


def linear_inversion(expectations, n_qubits: int) -> np.ndarray:
    """rho = 2^-n sum_k <P_k> P_k (may be unphysical)."""
    if isinstance(expectations, dict):
        vec = np.zeros(4**n_qubits)
        for p, v in expectations.items():
            vec[p.index] = v
        expectations = vec
    return pauli_to_matrix(expectations, n_qubits) / 2**n_qubits


def state_tomography(executor, n_qubits: int, shots_per_setting: int) -> DensityMatrix:
    """Linear-inversion state estimate projected onto the density matrices."""
    if n_qubits > MAX_STATE_QUBITS:
        raise TooLarge(f"state tomography capped at {MAX_STATE_QUBITS} qubits")
    vec = expectation_vector(_collect(executor, n_qubits, shots_per_setting), n_qubits)
    rho = project_to_density(linear_inversion(vec, n_qubits))
    return DensityMatrix(n_qubits, rho)


def expectations_to_csv(expectations: dict, shots: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pauli_string", "value", "shots"])
    for p, v in sorted(expectations.items(), key=lambda kv: kv[0].index):
        w.writerow([str(p), repr(float(v)), shots])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# channel representations


@dataclass(frozen=True, eq=False)
class PauliTransferMatrix:
    n_in: int
    n_out: int
    data: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        data = np.array(np.real_if_close(self.data, tol=1e6), dtype=float)
        if data.shape != (4**self.n_out, 4**self.n_in):
            raise ValueError(f"PTM shape {data.shape} does not match {self.n_in}->{self.n_out} qubits")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if check and np.abs(data).max() > 1 + 1e-9 and self.n_in <= self.n_out:
            raise InvalidState("PTM entries must lie in [-1, 1]")

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        r_in = matrix_to_pauli(rho.data, self.n_in).real
        r_out = self.data @ r_in
        return DensityMatrix(self.n_out, pauli_to_matrix(r_out, self.n_out) / 2**self.n_out, check=False)

    def to_dict(self) -> dict:
        return {"n_in": self.n_in, "n_out": self.n_out, "data": self.data.tolist()}

    @classmethod
    def from_dict(cls, d) -> "PauliTransferMatrix":
        return cls(int(d["n_in"]), int(d["n_out"]), np.array(d["data"], dtype=float), check=False)

    def to_bytes(self) -> bytes:
        return matrix_to_bytes(self.data)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    n_in: int
    n_out: int
    data: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        data = np.array(self.data, dtype=complex)
        dim = 2 ** (self.n_in + self.n_out)
        if data.shape != (dim, dim):
            raise ValueError(f"Choi shape {data.shape} does not match {self.n_in}->{self.n_out} qubits")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if check:
            self.as_state()

    def as_state(self) -> DensityMatrix:
        """The Choi state as a density matrix (validates the invariants)."""
        try:
            return DensityMatrix(self.n_in + self.n_out, self.data)
        except InvalidState as exc:
            if "semidefinite" in str(exc):
                raise NotPSD(str(exc)) from exc
            raise

    def projected(self) -> "ChoiMatrix":
        return ChoiMatrix(self.n_in, self.n_out, project_to_density(self.data))

    def to_dict(self) -> dict:
        return {"n_in": self.n_in, "n_out": self.n_out, "data": complex_pairs(self.data)}

    @classmethod
    def from_dict(cls, d) -> "ChoiMatrix":
        return cls(int(d["n_in"]), int(d["n_out"]), from_complex_pairs(d["data"]))

    def to_bytes(self) -> bytes:
        return matrix_to_bytes(self.data)

    @classmethod
    def from_bytes(cls, blob: bytes, n_in: int) -> "ChoiMatrix":
        m = matrix_from_bytes(blob)
        total = int(round(np.log2(m.shape[0])))
        return cls(n_in, total - n_in, m)


def _transpose_signs(n_qubits: int) -> np.ndarray:
    """(-1)^(number of Y letters): P^T = sign * P."""
    y_count = np.zeros(1, dtype=int)
    for _ in range(n_qubits):
        y_count = (y_count[:, None] + np.array([0, 0, 1, 0])[None, :]).reshape(-1)
    return (-1.0) ** y_count


def ptm_to_choi(ptm: PauliTransferMatrix, check: bool = True) -> ChoiMatrix:
    n_in, n_out = ptm.n_in, ptm.n_out
    d_in = 2**n_in
    coeffs = (_transpose_signs(n_in)[:, None] * ptm.data.T).reshape(-1) / d_in**2
    return ChoiMatrix(n_in, n_out, pauli_to_matrix(coeffs, n_in + n_out), check=check)


def choi_to_ptm(choi: ChoiMatrix) -> PauliTransferMatrix:
    n_in, n_out = choi.n_in, choi.n_out
    traces = matrix_to_pauli(choi.data, n_in + n_out).real.reshape(4**n_in, 4**n_out)
    data = (2**n_in / 2**n_out) * (_transpose_signs(n_in)[:, None] * traces).T
    return PauliTransferMatrix(n_in, n_out, data, check=False)


def kraus_to_choi(channel: KrausChannel) -> ChoiMatrix:
    d_in = 2**channel.n_in
    vecs = np.stack([k.T.reshape(-1) for k in channel.operators], axis=1)
    return ChoiMatrix(channel.n_in, channel.n_out, vecs @ vecs.conj().T / d_in)


def choi_to_kraus(choi: ChoiMatrix, cutoff: float = 1e-10) -> KrausChannel:
    """Kraus operators from the eigendecomposition of d_in * C."""
    d_in, d_out = 2**choi.n_in, 2**choi.n_out
    lam, v = np.linalg.eigh(d_in * (choi.data + choi.data.conj().T) / 2)
    if lam.min() < -1e-9:
        raise NotPSD(f"Choi matrix has eigenvalue {lam.min():.2e}; project it first")
    ops = [np.sqrt(lam[i]) * v[:, i].reshape(d_in, d_out).T for i in np.argsort(lam)[::-1] if lam[i] >= cutoff]
    return KrausChannel(tuple(ops))


# ---------------------------------------------------------------------------
# process tomography

PREPARATION_LABELS = "01+r"
# normalized Pauli coefficients (I, X, Y, Z) of each preparation state
_PREP_BLOCH = np.array(
    [
        [1, 1, 1, 1],
        [0, 0, 1, 0],
        [0, 0, 0, 1],
        [1, -1, 0, 0],
    ],
    dtype=float,
)
_PREP_UNITARY = {"0": I2, "1": X, "+": H, "r": S @ H}


def preparation_labels(n_qubits: int):
    return ["".join(p) for p in itertools.product(PREPARATION_LABELS, repeat=n_qubits)]


def preparation_unitary(label: str) -> np.ndarray:
    """U_pre with U_pre|0...0> equal to the labelled product state."""
    m = np.eye(1, dtype=complex)
    for c in label:
        m = np.kron(m, _PREP_UNITARY[c])
    return m


def preparation_state(label: str) -> DensityMatrix:
    psi = preparation_unitary(label)[:, 0]
    return DensityMatrix(len(label), np.outer(psi, psi.conj()))


def process_tomography(executor, n_qubits: int, shots: int, n_out: int | None = None) -> PauliTransferMatrix:
    """Linear-inversion PTM from 4^n product preparations x 3^m settings.

    The preparations span the input operator space; the PTM is recovered by
    inverting the known Pauli expansion of the preparation set. The result is
    a raw estimate and is not projected.
    """
    n_out = n_qubits if n_out is None else n_out
    if n_qubits > MAX_PROCESS_QUBITS or n_out > MAX_PROCESS_QUBITS:
        raise TooLarge(f"process tomography capped at {MAX_PROCESS_QUBITS} qubits")
    labels = preparation_labels(n_qubits)
    columns = []
    for label in labels:
        dists = [
            (s, _outcome_distribution(_call(executor, label, s, shots), n_out))
            for s in measurement_settings(n_out)
        ]
        columns.append(expectation_vector(dists, n_out))
    out = np.stack(columns, axis=1)
    inv1 = np.linalg.inv(_PREP_BLOCH)
    inv = np.eye(1)
    for _ in range(n_qubits):
        inv = np.kron(inv, inv1)
    return PauliTransferMatrix(n_qubits, n_out, out @ inv, check=False)


# ---------------------------------------------------------------------------
# classical shadows


@dataclass(frozen=True)
class ShadowEstimate:
    observable: PauliString
    value: float
    n_snapshots: int
    k_medians: int


def _snapshot_outcomes(executor, bases, n_qubits, rng):
    """One outcome per snapshot, querying the executor once per distinct basis."""
    outcomes = np.zeros(len(bases), dtype=np.int64)
    uniq, inverse = np.unique(bases, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for u, codes in enumerate(uniq):
        rows = np.flatnonzero(inverse == u)
        setting = PauliString("".join(LETTERS[c] for c in codes))
        result = _call(executor, setting, len(rows))
        if isinstance(result, Counts):
            draws = result.as_array()
            if draws.sum() != len(rows):
                raise ExecutorFailure(f"executor returned {draws.sum()} shots, asked for {len(rows)}")
        else:
            draws = rng.multinomial(len(rows), _outcome_distribution(result, n_qubits))
        samples = np.repeat(np.arange(draws.size), draws)
        outcomes[rows] = rng.permutation(samples)
    return outcomes


def classical_shadows(executor, observables, n_snapshots: int, k_medians: int, seed: int):
    """Random single-qubit Pauli-basis shadows with median-of-means estimates."""
    observables = [o if isinstance(o, PauliString) else PauliString(o) for o in observables]
    if not observables:
        raise ValueError("need at least one observable")
    if not 1 <= k_medians <= n_snapshots:
        raise ValueError("need 1 <= k_medians <= n_snapshots")
    n = observables[0].n_qubits
    if any(o.n_qubits != n for o in observables):
        raise ValueError("observables must share a qubit count")
    rng = make_rng(seed)
    bases = rng.integers(1, 4, size=(n_snapshots, n))
    outcomes = _snapshot_outcomes(executor, bases, n, rng)
    bits = (outcomes[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    estimates = []
    for obs in observables:
        if obs.is_identity:
            estimates.append(ShadowEstimate(obs, 1.0, n_snapshots, k_medians))
            continue
        supp = np.flatnonzero(obs.codes)
        match = np.all(bases[:, supp] == obs.codes[supp], axis=1)
        sign = 1 - 2 * (bits[:, supp].sum(axis=1) % 2)
        vals = match * sign * 3.0 ** len(supp)
        means = [g.mean() for g in np.array_split(vals, k_medians)]
        value = float(np.clip(np.median(means), -1.0, 1.0))
        estimates.append(ShadowEstimate(obs, value, n_snapshots, k_medians))
    return estimates
