import numpy as np
import pytest

from qunit.circuit import Circuit, Gate, GateKind, cp, cx
from qunit.simulator import DensityMatrix

ONE_QUBIT = [GateKind.H, GateKind.X, GateKind.Y, GateKind.Z, GateKind.S, GateKind.SDG, GateKind.T]


def random_density(n, rng, rank=None):
    d = 2**n
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = a @ a.conj().T
    return DensityMatrix(n, m / np.trace(m))


def random_circuit(n, depth, rng):
    gates = []
    for _ in range(depth):
        r = rng.random()
        if n == 1 or r < 0.5:
            kind = ONE_QUBIT[rng.integers(len(ONE_QUBIT))]
            gates.append(Gate(kind, (int(rng.integers(n)),)))
            continue
        a, b = (int(q) for q in rng.choice(n, size=2, replace=False))
        if r < 0.7:
            gates.append(cx(a, b))
        elif r < 0.9:
            gates.append(cp(float(rng.uniform(-np.pi, np.pi)), a, b))
        else:
            gates.append(Gate(GateKind.SWAP, (a, b)))
    return Circuit(n, tuple(gates), "random")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
