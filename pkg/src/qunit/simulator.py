"""Exact density-matrix simulation of circuits as quantum channels.

Circuits are applied gate by gate as channels on the full density matrix;
noise is inserted as an exact channel after every gate on the qubits that
gate touches. Randomness only enters in :func:`sample_counts`, which draws a
multinomial sample from the diagonal of a measured state.

Random streams come from numpy's Philox4x64 counter-based generator keyed by
a 64-bit seed, so counts are reproducible for a given (state, shots, seed).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import InitVar, dataclass, field

import numpy as np

from .circuit import Circuit, Gate, GateKind
from .errors import DimensionMismatch, InvalidState, NotDiagonal, TooLarge

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j]).astype(complex)
SDG = S.conj().T
T = np.diag([1, np.exp(1j * np.pi / 4)])
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

_BASE = {
    GateKind.H: H,
    GateKind.X: X,
    GateKind.Y: Y,
    GateKind.Z: Z,
    GateKind.S: S,
    GateKind.SDG: SDG,
    GateKind.T: T,
    GateKind.CX: X,
    GateKind.SWAP: SWAP,
}

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
MAX_KRAUS_QUBITS = 6


def make_rng(seed: int) -> np.random.Generator:
    """Philox4x64 stream keyed by a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))


def derive_seed(master: int, *indices: int) -> int:
    """Sub-seed for a (master seed, index...) pair, independent of call order."""
    ss = np.random.SeedSequence([int(master), *(int(i) for i in indices)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def controlled(u: np.ndarray, n_controls: int = 1) -> np.ndarray:
    """Controlled-``u`` with the control qubits leading (most significant)."""
    d = u.shape[0]
    full = np.eye(d * 2**n_controls, dtype=complex)
    full[-d:, -d:] = u
    return full


def gate_matrix(gate: Gate) -> np.ndarray:
    """Unitary of ``gate`` on ``gate.qubits`` (controls first, then targets)."""
    kind = gate.kind
    if kind is GateKind.RESET:
        raise ValueError("reset is not unitary")
    if kind is GateKind.CP:
        base = np.diag([1, np.exp(1j * gate.angle)])
    elif kind is GateKind.UMATRIX:
        base = np.asarray(gate.matrix)
    else:
        base = _BASE[kind]
    if gate.controls:
        return controlled(base, len(gate.controls))
    return base


def _act(tensor, op, axes):
    """Contract a k-qubit operator into the given tensor axes (left action)."""
    k = len(axes)
    op_t = op.reshape((2,) * (2 * k))
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _conjugate(tensor, op, qubits, n):
    tensor = _act(tensor, op, qubits)
    return _act(tensor, op.conj(), [n + q for q in qubits])


def _kraus_on(tensor, kraus, qubits, n):
    return sum(_conjugate(tensor, k, qubits, n) for k in kraus)


class NoiseKind(enum.Enum):
    NOISELESS = "noiseless"
    BITFLIP = "bitflip"
    DEPOLARIZING = "depolarizing"


@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit noise applied after each gate to the qubits it touches.

    ``BITFLIP``: rho -> (1-p) rho + p X rho X.
    ``DEPOLARIZING``: rho -> (1-p) rho + p tr_q(rho) (x) I/2, i.e. Kraus
    operators sqrt(1-3p/4) I and sqrt(p/4) {X, Y, Z}.
    """

    kind: NoiseKind = NoiseKind.NOISELESS
    p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise probability must lie in [0, 1], got {self.p}")
        if self.kind is NoiseKind.NOISELESS and self.p != 0.0:
            raise ValueError("noiseless model takes no probability")

    @classmethod
    def noiseless(cls):
        return cls()

    @classmethod
    def bit_flip(cls, p):
        return cls(NoiseKind.BITFLIP, float(p))

    @classmethod
    def depolarizing(cls, p):
        return cls(NoiseKind.DEPOLARIZING, float(p))

    @classmethod
    def parse(cls, text: str) -> "NoiseModel":
        """Parse ``noiseless``, ``bitflip:0.01`` or ``depolarizing:0.01``."""
        kind, _, p = text.strip().partition(":")
        kind = NoiseKind(kind.lower())
        if kind is NoiseKind.NOISELESS:
            return cls()
        return cls(kind, float(p))

    @property
    def is_noiseless(self) -> bool:
        return self.kind is NoiseKind.NOISELESS or self.p == 0.0

    def kraus(self) -> list:
        p = self.p
        if self.kind is NoiseKind.BITFLIP:
            return [np.sqrt(1 - p) * I2, np.sqrt(p) * X]
        if self.kind is NoiseKind.DEPOLARIZING:
            return [np.sqrt(1 - 0.75 * p) * I2] + [np.sqrt(p / 4) * P for P in (X, Y, Z)]
        return [I2]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.p}

    def __str__(self):
        return self.kind.value if self.kind is NoiseKind.NOISELESS else f"{self.kind.value}:{self.p:g}"


NOISELESS = NoiseModel()


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n_qubits: int
    data: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        data = np.array(self.data, dtype=complex)
        dim = 2**self.n_qubits
        if data.shape != (dim, dim):
            raise DimensionMismatch(f"expected {dim}x{dim} matrix for {self.n_qubits} qubits, got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if check:
            self.validate()

    def validate(self):
        d = self.data
        herm = np.linalg.norm(d - d.conj().T)
        if herm >= HERMITIAN_TOL:
            raise InvalidState(f"not Hermitian (||rho - rho^H||_F = {herm:.2e})")
        tr = np.trace(d).real
        if abs(tr - 1) >= TRACE_TOL:
            raise InvalidState(f"trace {tr} != 1")
        lam = np.linalg.eigvalsh(d).min()
        if lam < -PSD_TOL:
            raise InvalidState(f"not positive semidefinite (min eigenvalue {lam:.2e})")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @classmethod
    def from_statevector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        n = int(round(np.log2(psi.size)))
        if 2**n != psi.size:
            raise DimensionMismatch(f"statevector length {psi.size} is not a power of two")
        psi = psi / np.linalg.norm(psi)
        return cls(n, np.outer(psi, psi.conj()))

    @classmethod
    def basis(cls, bits) -> "DensityMatrix":
        """``|b><b|`` for a bitstring such as ``"000"`` (qubit 0 leftmost)."""
        n = len(bits)
        idx = int(bits, 2)
        data = np.zeros((2**n, 2**n), dtype=complex)
        data[idx, idx] = 1
        return cls(n, data)

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        return cls.basis("0" * n_qubits)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        return cls(n_qubits, np.eye(2**n_qubits) / 2**n_qubits)

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.n_qubits == other.n_qubits and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.n_qubits, self.data.tobytes()))

    def allclose(self, other: "DensityMatrix", atol=1e-9) -> bool:
        return self.n_qubits == other.n_qubits and np.linalg.norm(self.data - other.data) < atol

    def purity(self) -> float:
        return float(np.real(np.trace(self.data @ self.data)))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(op @ self.data)))

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(self.n_qubits + other.n_qubits, np.kron(self.data, other.data), check=False)

    def partial_trace(self, keep) -> "DensityMatrix":
        """Reduced state on the qubits in ``keep`` (kept in the given order)."""
        return DensityMatrix(len(keep), reduce_qubits(self.data, self.n_qubits, keep), check=False)

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "data": complex_pairs(self.data)}

    @classmethod
    def from_dict(cls, d: dict) -> "DensityMatrix":
        return cls(int(d["n_qubits"]), from_complex_pairs(d["data"]))

    def to_bytes(self) -> bytes:
        return matrix_to_bytes(self.data)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DensityMatrix":
        m = matrix_from_bytes(blob)
        return cls(int(round(np.log2(m.shape[0]))), m)


def reduce_qubits(rho: np.ndarray, n: int, keep) -> np.ndarray:
    keep = list(keep)
    if keep == list(range(n)):
        return np.asarray(rho)
    traced = [q for q in range(n) if q not in keep]
    t = np.asarray(rho).reshape((2,) * (2 * n))
    perm = keep + traced + [n + q for q in keep] + [n + q for q in traced]
    t = t.transpose(perm)
    dk, dt = 2 ** len(keep), 2 ** len(traced)
    t = t.reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t)


# ---------------------------------------------------------------------------
# serialization helpers shared with tomography

def complex_pairs(m: np.ndarray) -> list:
    """Row-major nested list of ``[re, im]`` pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def from_complex_pairs(rows) -> np.ndarray:
    return np.array([[complex(a, b) for a, b in row] for row in rows], dtype=complex)


_MAGIC = b"QUMX"


def matrix_to_bytes(m: np.ndarray) -> bytes:
    """Binary layout: ``b"QUMX"``, rows and cols as little-endian uint32, then
    row-major (re, im) float64 little-endian pairs."""
    m = np.asarray(m, dtype="<c16")
    return _MAGIC + struct.pack("<II", *m.shape) + np.ascontiguousarray(m).tobytes()


def matrix_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != _MAGIC:
        raise ValueError("not a qunit matrix blob")
    rows, cols = struct.unpack("<II", blob[4:12])
    return np.frombuffer(blob[12:], dtype="<c16").reshape(rows, cols).astype(complex)


# ---------------------------------------------------------------------------
# channels


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A channel rho -> sum_i K_i rho K_i^H with 2^m x 2^n operators."""

    operators: tuple
    check: InitVar[bool] = True

    def __post_init__(self, check):
        ops = tuple(np.array(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("a Kraus channel needs at least one operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise DimensionMismatch("Kraus operators must share one shape")
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        if check:
            err = np.linalg.norm(sum(k.conj().T @ k for k in ops) - np.eye(shape[1]))
            if err >= 1e-9:
                raise InvalidState(f"Kraus set is not trace preserving (err={err:.2e})")

    @property
    def n_in(self) -> int:
        return int(round(np.log2(self.operators[0].shape[1])))

    @property
    def n_out(self) -> int:
        return int(round(np.log2(self.operators[0].shape[0])))

    def __len__(self):
        return len(self.operators)

    def apply_matrix(self, m: np.ndarray) -> np.ndarray:
        return sum(k @ m @ k.conj().T for k in self.operators)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.n_qubits != self.n_in:
            raise DimensionMismatch(f"channel takes {self.n_in} qubits, state has {rho.n_qubits}")
        return DensityMatrix(self.n_out, self.apply_matrix(rho.data), check=False)


def reset_channel(rho: DensityMatrix) -> DensityMatrix:
    """Lambda(rho) = tr(rho) |0...0><0...0|."""
    out = np.zeros_like(rho.data)
    out[0, 0] = np.trace(rho.data)
    return DensityMatrix(rho.n_qubits, out)


def prepare_channel(rho: DensityMatrix, u_pre: np.ndarray) -> DensityMatrix:
    """Reset, then rotate: U_pre Lambda(rho) U_pre^H."""
    u_pre = np.asarray(u_pre, dtype=complex)
    if u_pre.shape != (rho.dim, rho.dim):
        raise DimensionMismatch(f"U_pre shape {u_pre.shape} does not match {rho.n_qubits} qubits")
    reset = reset_channel(rho).data
    return DensityMatrix(rho.n_qubits, u_pre @ reset @ u_pre.conj().T)


def evolve(rho: np.ndarray, circuit: Circuit, noise: NoiseModel = NOISELESS) -> np.ndarray:
    """Array-level core of :func:`apply_circuit`; no validation."""
    n = circuit.n_qubits
    t = np.asarray(rho, dtype=complex).reshape((2,) * (2 * n))
    noise_kraus = None if noise.is_noiseless else noise.kraus()
    for g in circuit.gates:
        if g.kind is GateKind.RESET:
            q = g.targets[0]
            t = _kraus_on(t, [np.array([[1, 0], [0, 0]]), np.array([[0, 1], [0, 0]])], [q], n)
        else:
            t = _conjugate(t, gate_matrix(g), list(g.qubits), n)
        if noise_kraus is not None:
            for q in g.qubits:
                t = _kraus_on(t, noise_kraus, [q], n)
    d = 2**n
    return t.reshape(d, d)


def apply_circuit(rho: DensityMatrix, circuit: Circuit, noise: NoiseModel = NOISELESS) -> DensityMatrix:
    if rho.n_qubits != circuit.n_qubits:
        raise DimensionMismatch(f"state has {rho.n_qubits} qubits, circuit {circuit.n_qubits}")
    return DensityMatrix(rho.n_qubits, evolve(rho.data, circuit, noise))


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Total unitary of a reset-free circuit."""
    n = circuit.n_qubits
    d = 2**n
    # columns are states; act on the row axes only
    t = np.eye(d, dtype=complex).reshape((2,) * n + (d,))
    for g in circuit.gates:
        if g.kind is GateKind.RESET:
            raise ValueError("circuit contains a reset and has no unitary")
        t = _act(t, gate_matrix(g), list(g.qubits))
    return t.reshape(d, d)


def outcome_probabilities(rho: np.ndarray, u_meas: np.ndarray | None = None) -> np.ndarray:
    """Born probabilities tr(P_a U rho U^H) as a real vector."""
    rho = np.asarray(rho)
    if u_meas is not None:
        if u_meas.shape != rho.shape:
            raise DimensionMismatch(f"U_meas shape {u_meas.shape} does not match state {rho.shape}")
        diag = np.einsum("ij,jk,ik->i", u_meas, rho, u_meas.conj())
    else:
        diag = np.diagonal(rho)
    p = np.clip(diag.real, 0.0, None)
    return p / p.sum()


def measure_channel(rho: DensityMatrix, u_meas: np.ndarray | None = None) -> DensityMatrix:
    """Destructive measurement after rotating by ``u_meas``: a diagonal state."""
    p = outcome_probabilities(rho.data, None if u_meas is None else np.asarray(u_meas, dtype=complex))
    return DensityMatrix(rho.n_qubits, np.diag(p))


@dataclass(frozen=True)
class Counts:
    """Measurement record: basis-state index -> occurrences."""

    n_qubits: int
    shots: int
    table: dict = field(hash=False)
    seed: int | None = None

    def __post_init__(self):
        if sum(self.table.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def bitstring(self, index: int) -> str:
        return format(index, f"0{self.n_qubits}b")

    def get(self, key) -> int:
        if isinstance(key, str):
            key = int(key, 2)
        return self.table.get(key, 0)

    def as_array(self) -> np.ndarray:
        out = np.zeros(2**self.n_qubits, dtype=np.int64)
        for k, v in self.table.items():
            out[k] = v
        return out

    def frequencies(self) -> np.ndarray:
        return self.as_array() / self.shots

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "seed": self.seed,
            "counts": {self.bitstring(k): int(v) for k, v in sorted(self.table.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Counts":
        counts = d["counts"]
        n = len(next(iter(counts))) if counts else int(d.get("n_qubits", 1))
        return cls(n, int(d["shots"]), {int(b, 2): int(v) for b, v in counts.items()}, d.get("seed"))


def sample_probabilities(p: np.ndarray, shots: int, seed: int, n_qubits: int | None = None) -> Counts:
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    p = p / p.sum()
    if n_qubits is None:
        n_qubits = int(round(np.log2(p.size)))
    draw = make_rng(seed).multinomial(shots, p)
    table = {int(i): int(draw[i]) for i in np.flatnonzero(draw)}
    return Counts(n_qubits, int(shots), table, int(seed))


def sample_counts(rho_diag: DensityMatrix, shots: int, seed: int) -> Counts:
    """Multinomial draw from the diagonal of a measured (diagonal) state."""
    d = rho_diag.data
    off = d - np.diag(np.diagonal(d))
    if np.abs(off).max(initial=0.0) > 1e-10:
        raise NotDiagonal("sample_counts expects the output of measure_channel")
    return sample_probabilities(np.diagonal(d).real, shots, seed, rho_diag.n_qubits)


def _embed(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    return np.kron(np.kron(np.eye(2**qubit), op), np.eye(2 ** (n - qubit - 1)))


def _compress(ops: list, d: int) -> list:
    """Minimal Kraus set spanning the same channel (at most d^2 operators)."""
    vecs = np.stack([k.reshape(-1) for k in ops], axis=1)
    gram = vecs @ vecs.conj().T
    lam, v = np.linalg.eigh(gram)
    keep = lam > 1e-12 * max(lam.max(), 1.0)
    return [np.sqrt(lam[i]) * v[:, i].reshape(d, d) for i in np.flatnonzero(keep)[::-1]]


def circuit_to_kraus(circuit: Circuit, noise: NoiseModel = NOISELESS, max_qubits: int = MAX_KRAUS_QUBITS) -> KrausChannel:
    """Kraus form of the (noisy) circuit, composed gate by gate."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise TooLarge(f"{n} qubits exceeds the Kraus extraction cap of {max_qubits}")
    d = 2**n
    noise_ops = None if noise.is_noiseless else noise.kraus()
    ops = [np.eye(d, dtype=complex)]
    reset_ops = [np.array([[1, 0], [0, 0]], dtype=complex), np.array([[0, 1], [0, 0]], dtype=complex)]
    for g in circuit.gates:
        if g.kind is GateKind.RESET:
            step = [_embed(r, g.targets[0], n) for r in reset_ops]
        else:
            u = np.eye(d, dtype=complex).reshape((2,) * n + (d,))
            step = [_act(u, gate_matrix(g), list(g.qubits)).reshape(d, d)]
        ops = [s @ k for s in step for k in ops]
        if noise_ops is not None:
            for q in g.qubits:
                ops = [_embed(e, q, n) @ k for e in noise_ops for k in ops]
                if len(ops) > d * d:
                    ops = _compress(ops, d)
        if len(ops) > d * d:
            ops = _compress(ops, d)
    if len(ops) > 1:
        ops = _compress(ops, d)
    return KrausChannel(tuple(ops))
