"""Gate and circuit builders for the phase-estimation subroutines."""

from __future__ import annotations

import math

import numpy as np

from .circuit import Circuit, Gate, GateKind, cp
from .errors import NotCoprime


def register_size(N: int) -> int:
    """Qubits needed to hold residues modulo N: floor(log2(N-1)) + 1."""
    if N < 2:
        raise ValueError("modulus must be at least 2")
    return (N - 1).bit_length()


def modmul_matrix(a: int, N: int, theta: int) -> np.ndarray:
    """Permutation U with U[b*x mod N, x] = 1 for x < N, identity above N.

    ``b = a**(2**theta) mod N``.
    """
    if math.gcd(a, N) != 1:
        raise NotCoprime(f"gcd({a}, {N}) = {math.gcd(a, N)}")
    b = pow(a, 2**theta, N)
    dim = 2 ** register_size(N)
    u = np.zeros((dim, dim))
    for x in range(N):
        u[b * x % N, x] = 1
    for x in range(N, dim):
        u[x, x] = 1
    return u


def build_controlled_modmul(a: int, N: int, theta: int, control: int = 0, targets=None) -> Gate:
    """Controlled multiplication by a^(2^theta) mod N as a matrix gate."""
    u = modmul_matrix(a, N, theta)
    n = register_size(N)
    if targets is None:
        targets = tuple(range(control + 1, control + 1 + n))
    b = pow(a, 2**theta, N)
    return Gate(GateKind.UMATRIX, tuple(targets), (control,), matrix=u, label=f"M_{b}")


def _qft_gates(n: int):
    gates = []
    for j in range(n):
        gates.append(Gate(GateKind.H, (j,)))
        for k in range(j + 1, n):
            gates.append(cp(math.pi / 2 ** (k - j), k, j))
    for j in range(n // 2):
        gates.append(Gate(GateKind.SWAP, (j, n - 1 - j)))
    return gates


def build_qft(n: int) -> Circuit:
    """QFT: |x> -> 2^(-n/2) sum_k exp(2 pi i x k / 2^n) |k>."""
    return Circuit(n, tuple(_qft_gates(n)), f"qft{n}")


def build_qft_inverse(n: int) -> Circuit:
    """Inverse QFT built from H, controlled-phase and swap gates."""
    gates = []
    for g in reversed(_qft_gates(n)):
        gates.append(g.replace(angle=-g.angle) if g.kind is GateKind.CP else g)
    return Circuit(n, tuple(gates), f"iqft{n}")
