"""Circuit intermediate representation and the subroutine front end.

Qubit ordering convention used throughout qunit: qubit 0 is the leftmost
ket label and the most significant bit of a computational-basis index, so
``|q0 q1 q2>`` has index ``4*q0 + 2*q1 + q2``. Qiskit uses the opposite
convention; bitstrings and matrices produced here are not Qiskit-ordered.

The accepted source language is a small OpenQASM-3-like subset::

    // comment
    def sample1(qubit[3] q) {
        x q[0];
        h q[0];
        cx q[0], q[1];
        cp(pi/2) q[1], q[2];
    }

Classical parameters may be declared after the register
(``def f(qubit[2] q, angle theta)``) and used inside angle expressions.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    ArityMismatch,
    IllFormedResult,
    IndexOutOfRange,
    InvalidPosition,
    QasmSyntaxError,
    UnknownGate,
)


class GateKind(enum.Enum):
    H = "h"
    X = "x"
    Y = "y"
    Z = "z"
    S = "s"
    SDG = "sdg"
    T = "t"
    CX = "cx"
    CP = "cp"
    SWAP = "swap"
    UMATRIX = "u_matrix"
    RESET = "reset"


SINGLE_QUBIT_KINDS = frozenset(
    {GateKind.H, GateKind.X, GateKind.Y, GateKind.Z, GateKind.S, GateKind.SDG, GateKind.T}
)
# keyword -> (kind, number of qubit arguments, takes an angle)
_KEYWORDS = {
    "x": (GateKind.X, 1, False),
    "y": (GateKind.Y, 1, False),
    "z": (GateKind.Z, 1, False),
    "h": (GateKind.H, 1, False),
    "s": (GateKind.S, 1, False),
    "sdg": (GateKind.SDG, 1, False),
    "t": (GateKind.T, 1, False),
    "cx": (GateKind.CX, 2, False),
    "cp": (GateKind.CP, 2, True),
    "swap": (GateKind.SWAP, 2, False),
    "reset": (GateKind.RESET, 1, False),
}


@dataclass(frozen=True, eq=False)
class Gate:
    """One instruction of a circuit.

    ``CX`` and ``CP`` carry their control in ``controls`` and their target in
    ``targets``. ``UMATRIX`` applies ``matrix`` to ``targets`` (first target is
    the most significant) and is controlled on every qubit in ``controls``.
    """

    kind: GateKind
    targets: tuple
    controls: tuple = ()
    angle: float | None = None
    matrix: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        if self.matrix is not None:
            m = np.array(self.matrix, dtype=complex)
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
        if self.angle is not None:
            object.__setattr__(self, "angle", float(self.angle))
        self._validate()

    def _validate(self):
        qubits = self.controls + self.targets
        if len(set(qubits)) != len(qubits):
            raise IllFormedResult(f"{self.kind.value}: repeated qubit in {qubits}")
        if any(q < 0 for q in qubits):
            raise IllFormedResult(f"{self.kind.value}: negative qubit index")
        kind = self.kind
        if kind in SINGLE_QUBIT_KINDS or kind is GateKind.RESET:
            ok = len(self.targets) == 1 and not self.controls
        elif kind in (GateKind.CX, GateKind.CP):
            ok = len(self.targets) == 1 and len(self.controls) == 1
        elif kind is GateKind.SWAP:
            ok = len(self.targets) == 2 and not self.controls
        else:
            ok = len(self.targets) >= 1
        if not ok:
            raise IllFormedResult(
                f"{kind.value}: bad operand shape targets={self.targets} controls={self.controls}"
            )
        if kind is GateKind.CP and self.angle is None:
            raise IllFormedResult("cp requires an angle")
        if kind is GateKind.UMATRIX:
            dim = 2 ** len(self.targets)
            if self.matrix is None or self.matrix.shape != (dim, dim):
                raise IllFormedResult(f"u_matrix on {len(self.targets)} qubits needs a {dim}x{dim} matrix")
            err = np.linalg.norm(self.matrix @ self.matrix.conj().T - np.eye(dim))
            if err > 1e-10:
                raise IllFormedResult(f"u_matrix {self.label!r} is not unitary (err={err:.2e})")

    @property
    def qubits(self) -> tuple:
        return self.controls + self.targets

    def replace(self, **changes) -> "Gate":
        fields = dict(
            kind=self.kind,
            targets=self.targets,
            controls=self.controls,
            angle=self.angle,
            matrix=self.matrix,
            label=self.label,
        )
        fields.update(changes)
        return Gate(**fields)

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return NotImplemented
        if (self.kind, self.targets, self.controls, self.angle, self.label) != (
            other.kind,
            other.targets,
            other.controls,
            other.angle,
            other.label,
        ):
            return False
        if self.matrix is None or other.matrix is None:
            return self.matrix is None and other.matrix is None
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash((self.kind, self.targets, self.controls, self.angle, self.label))

    def __repr__(self):
        extra = f", angle={self.angle!r}" if self.angle is not None else ""
        extra += f", label={self.label!r}" if self.label else ""
        ctrl = f", controls={self.controls}" if self.controls else ""
        return f"Gate({self.kind.name}, targets={self.targets}{ctrl}{extra})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "targets": list(self.targets), "controls": list(self.controls)}
        if self.angle is not None:
            d["angle"] = self.angle
        if self.kind is GateKind.UMATRIX:
            d["label"] = self.label
            d["matrix"] = [[[z.real, z.imag] for z in row] for row in self.matrix]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        matrix = None
        if d.get("matrix") is not None:
            matrix = np.array([[complex(re_, im) for re_, im in row] for row in d["matrix"]])
        return cls(
            GateKind(d["kind"]),
            tuple(d["targets"]),
            tuple(d.get("controls", ())),
            angle=d.get("angle"),
            matrix=matrix,
            label=d.get("label", ""),
        )


def cx(control: int, target: int) -> Gate:
    return Gate(GateKind.CX, (target,), (control,))


def cp(angle: float, control: int, target: int) -> Gate:
    return Gate(GateKind.CP, (target,), (control,), angle=angle)


def single(kind: GateKind, qubit: int) -> Gate:
    return Gate(kind, (qubit,))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple = ()
    name: str = "circuit"

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise IllFormedResult("a circuit needs at least one qubit")
        for pos, g in enumerate(self.gates):
            if any(q >= self.n_qubits for q in g.qubits):
                raise IllFormedResult(f"gate {pos} ({g!r}) exceeds register of {self.n_qubits} qubits")

    def __len__(self):
        return len(self.gates)

    def append(self, *gates: Gate) -> "Circuit":
        return Circuit(self.n_qubits, self.gates + tuple(gates), self.name)

    def to_dict(self) -> dict:
        return {"name": self.name, "n_qubits": self.n_qubits, "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["n_qubits"]), tuple(Gate.from_dict(g) for g in d["gates"]), d.get("name", "circuit"))


# ---------------------------------------------------------------------------
# angle expressions: ("num", v) | ("name", s) | ("neg", e) | ("bin", op, a, b)

def eval_expr(expr, env: dict) -> float:
    tag = expr[0]
    if tag == "num":
        return expr[1]
    if tag == "name":
        if expr[1] == "pi":
            return math.pi
        return float(env[expr[1]])
    if tag == "neg":
        return -eval_expr(expr[1], env)
    _, op, a, b = expr
    x, y = eval_expr(a, env), eval_expr(b, env)
    return {"+": x + y, "-": x - y, "*": x * y, "/": x / y}[op]


def format_expr(expr) -> str:
    tag = expr[0]
    if tag == "num":
        return repr(expr[1])
    if tag == "name":
        return expr[1]
    if tag == "neg":
        return f"-({format_expr(expr[1])})"
    _, op, a, b = expr
    return f"({format_expr(a)} {op} {format_expr(b)})"


@dataclass(frozen=True)
class Statement:
    """A parsed gate statement; ``angle`` is an unevaluated expression."""

    keyword: str
    qubits: tuple
    angle: tuple | None = None


@dataclass(frozen=True)
class SubroutineSpec:
    """A subroutine: a deterministic map from parameters to a concrete circuit."""

    name: str
    n_qubits: int
    param_arity: int
    builder: Callable = field(compare=False, repr=False)
    param_names: tuple = ()
    statements: tuple | None = None

    @classmethod
    def from_circuit(cls, circuit: Circuit) -> "SubroutineSpec":
        return cls(circuit.name, circuit.n_qubits, 0, lambda theta: circuit)


def _statement_to_gate(st: Statement, env: dict) -> Gate:
    kind, _, _ = _KEYWORDS[st.keyword]
    angle = eval_expr(st.angle, env) if st.angle is not None else None
    if kind in (GateKind.CX, GateKind.CP):
        return Gate(kind, (st.qubits[1],), (st.qubits[0],), angle=angle)
    return Gate(kind, st.qubits, angle=angle)


def _spec_from_statements(name, n_qubits, param_names, statements) -> SubroutineSpec:
    def builder(theta):
        env = dict(zip(param_names, theta))
        return Circuit(n_qubits, tuple(_statement_to_gate(s, env) for s in statements), name)

    return SubroutineSpec(name, n_qubits, len(param_names), builder, tuple(param_names), tuple(statements))


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[(){}\[\];,+\-*/])|(?P<bad>.)"
)
_PARAM_TYPES = ("angle", "float", "int")


def _tokenize(source: str):
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(source):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("ws", "comment"):
            continue
        elif kind == "bad":
            raise QasmSyntaxError(f"unexpected character {m.group()!r}", line, col)
        else:
            tokens.append((kind, m.group(), line, col))
    tokens.append(("eof", "", line, len(source) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value=None, kind=None):
        tok = self.next()
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = repr(value) if value is not None else kind
            found = tok[1] or "end of input"
            raise QasmSyntaxError(f"found {found!r}", tok[2], tok[3], expected=want)
        return tok

    def accept(self, value):
        if self.peek()[1] == value:
            return self.next()
        return None

    def parse(self) -> SubroutineSpec:
        self.expect("def")
        name = self.expect(kind="ident")[1]
        self.expect("(")
        reg_name, n_qubits, params = None, None, []
        while True:
            tok = self.expect(kind="ident")
            if tok[1] == "qubit":
                if reg_name is not None:
                    raise QasmSyntaxError("only one qubit register is supported", tok[2], tok[3])
                self.expect("[")
                n_qubits = int(self.expect(kind="num")[1])
                self.expect("]")
                reg_name = self.expect(kind="ident")[1]
            elif tok[1] in _PARAM_TYPES:
                if self.accept("["):
                    self.expect(kind="num")
                    self.expect("]")
                params.append(self.expect(kind="ident")[1])
            else:
                raise QasmSyntaxError(f"found {tok[1]!r}", tok[2], tok[3], expected="'qubit' or a parameter type")
            if not self.accept(","):
                break
        self.expect(")")
        if reg_name is None:
            tok = self.peek()
            raise QasmSyntaxError("missing qubit register", tok[2], tok[3], expected="qubit[N] q")
        if n_qubits < 1:
            raise QasmSyntaxError("register size must be positive", *self.toks[self.i - 3][2:4])
        self.reg_name, self.n_qubits, self.params = reg_name, n_qubits, params
        self.expect("{")
        statements = []
        while self.peek()[1] != "}":
            if self.peek()[0] == "eof":
                tok = self.peek()
                raise QasmSyntaxError("unterminated body", tok[2], tok[3], expected="'}'")
            statements.append(self.statement())
        self.expect("}")
        self.expect(kind="eof")
        return _spec_from_statements(name, n_qubits, params, statements)

    def statement(self) -> Statement:
        tok = self.expect(kind="ident")
        keyword = tok[1].lower()
        if keyword not in _KEYWORDS:
            raise UnknownGate(tok[1])
        _, n_args, takes_angle = _KEYWORDS[keyword]
        angle = None
        if takes_angle:
            self.expect("(")
            angle = self.expr()
            self.expect(")")
        qubits = [self.qarg()]
        while self.accept(","):
            qubits.append(self.qarg())
        self.expect(";")
        if len(qubits) != n_args:
            raise QasmSyntaxError(
                f"{keyword} takes {n_args} qubit argument(s), got {len(qubits)}", tok[2], tok[3]
            )
        if len(set(qubits)) != len(qubits):
            raise QasmSyntaxError(f"{keyword}: repeated qubit operand", tok[2], tok[3])
        return Statement(keyword, tuple(qubits), angle)

    def qarg(self) -> int:
        tok = self.expect(kind="ident")
        if tok[1] != self.reg_name:
            raise QasmSyntaxError(f"unknown register {tok[1]!r}", tok[2], tok[3], expected=self.reg_name)
        self.expect("[")
        idx_tok = self.expect(kind="num")
        self.expect("]")
        idx = int(idx_tok[1])
        if idx >= self.n_qubits:
            raise IndexOutOfRange(
                f"line {idx_tok[2]}: {self.reg_name}[{idx}] outside register of size {self.n_qubits}"
            )
        return idx

    # expr := term (('+'|'-') term)* ; term := factor (('*'|'/') factor)*
    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            node = ("bin", op, node, self.factor())
        return node

    def factor(self):
        tok = self.next()
        if tok[1] == "-":
            return ("neg", self.factor())
        if tok[1] == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok[0] == "num":
            return ("num", float(tok[1]))
        if tok[0] == "ident" and (tok[1] == "pi" or tok[1] in self.params):
            return ("name", tok[1])
        raise QasmSyntaxError(f"found {tok[1]!r}", tok[2], tok[3], expected="angle expression")


def parse_subroutine(source: str) -> SubroutineSpec:
    """Parse a single ``def name(qubit[N] q, ...) { ... }`` block."""
    return _Parser(source).parse()


def serialize(spec: SubroutineSpec) -> str:
    """Render a parsed subroutine back to source text."""
    if spec.statements is None:
        if spec.param_arity:
            raise ValueError("only parsed subroutines with parameters can be serialized")
        return serialize_circuit(bind(spec, ()))
    params = "".join(f", angle {p}" for p in spec.param_names)
    lines = [f"def {spec.name}(qubit[{spec.n_qubits}] q{params}) {{"]
    for st in spec.statements:
        angle = f"({format_expr(st.angle)})" if st.angle is not None else ""
        args = ", ".join(f"q[{i}]" for i in st.qubits)
        lines.append(f"    {st.keyword}{angle} {args};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"def {circuit.name}(qubit[{circuit.n_qubits}] q) {{"]
    for g in circuit.gates:
        if g.kind is GateKind.UMATRIX:
            raise ValueError(f"matrix gate {g.label!r} has no source form")
        angle = f"({g.angle!r})" if g.angle is not None else ""
        args = ", ".join(f"q[{i}]" for i in g.qubits)
        lines.append(f"    {g.kind.value}{angle} {args};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def bind(spec: SubroutineSpec, theta: Sequence = ()) -> Circuit:
    """Fix the classical parameters of ``spec`` and return the concrete circuit."""
    theta = tuple(theta)
    if len(theta) != spec.param_arity:
        raise ArityMismatch(f"{spec.name} takes {spec.param_arity} parameter(s), got {len(theta)}")
    circuit = spec.builder(theta)
    if circuit.n_qubits != spec.n_qubits:
        raise IllFormedResult(f"builder produced {circuit.n_qubits} qubits, expected {spec.n_qubits}")
    return circuit


# ---------------------------------------------------------------------------
# mutations


@dataclass(frozen=True)
class QubitIndexSwap:
    gate_pos: int
    old_index: int
    new_index: int

    def describe(self):
        return f"qubit_index_swap@{self.gate_pos}:{self.old_index}->{self.new_index}"


@dataclass(frozen=True)
class GateSubstitution:
    gate_pos: int
    new_kind: GateKind
    angle: float | None = None

    def describe(self):
        return f"gate_substitution@{self.gate_pos}:{self.new_kind.value}"


@dataclass(frozen=True)
class GateInsertion:
    position: int
    gate: Gate

    def describe(self):
        qs = ",".join(str(q) for q in self.gate.qubits)
        return f"gate_insertion@{self.position}:{self.gate.kind.value}({qs})"


@dataclass(frozen=True)
class GateDeletion:
    gate_pos: int

    def describe(self):
        return f"gate_deletion@{self.gate_pos}"


Mutation = Union[QubitIndexSwap, GateSubstitution, GateInsertion, GateDeletion]


def _check_pos(c: Circuit, pos: int, allow_end=False):
    hi = len(c.gates) if allow_end else len(c.gates) - 1
    if not 0 <= pos <= hi:
        raise InvalidPosition(f"position {pos} outside circuit of {len(c.gates)} gates")


def apply_mutation(c: Circuit, m: Mutation) -> Circuit:
    """Return a mutated copy of ``c``; the input circuit is left untouched."""
    gates = list(c.gates)
    if isinstance(m, QubitIndexSwap):
        _check_pos(c, m.gate_pos)
        g = gates[m.gate_pos]
        if m.old_index not in g.qubits:
            raise InvalidPosition(f"gate {m.gate_pos} does not act on qubit {m.old_index}")

        def swap(qs):
            return tuple(m.new_index if q == m.old_index else q for q in qs)

        gates[m.gate_pos] = g.replace(targets=swap(g.targets), controls=swap(g.controls))
    elif isinstance(m, GateSubstitution):
        _check_pos(c, m.gate_pos)
        g = gates[m.gate_pos]
        angle = None
        if m.new_kind is GateKind.CP:
            angle = m.angle if m.angle is not None else g.angle
        gates[m.gate_pos] = g.replace(kind=m.new_kind, angle=angle, matrix=None, label="")
    elif isinstance(m, GateInsertion):
        _check_pos(c, m.position, allow_end=True)
        gates.insert(m.position, m.gate)
    elif isinstance(m, GateDeletion):
        _check_pos(c, m.gate_pos)
        del gates[m.gate_pos]
    else:
        raise TypeError(f"not a mutation: {m!r}")
    # Gate and Circuit constructors raise IllFormedResult on bad operands
    return Circuit(c.n_qubits, tuple(gates), c.name)


def mutation_to_dict(m: Mutation) -> dict:
    if isinstance(m, QubitIndexSwap):
        return {"kind": "qubit_index_swap", "gate_pos": m.gate_pos, "old_index": m.old_index, "new_index": m.new_index}
    if isinstance(m, GateSubstitution):
        d = {"kind": "gate_substitution", "gate_pos": m.gate_pos, "new_kind": m.new_kind.value}
        if m.angle is not None:
            d["angle"] = m.angle
        return d
    if isinstance(m, GateInsertion):
        return {"kind": "gate_insertion", "position": m.position, "gate": m.gate.to_dict()}
    return {"kind": "gate_deletion", "gate_pos": m.gate_pos}


def mutation_from_dict(d: dict) -> Mutation:
    kind = d["kind"]
    if kind == "qubit_index_swap":
        return QubitIndexSwap(int(d["gate_pos"]), int(d["old_index"]), int(d["new_index"]))
    if kind == "gate_substitution":
        return GateSubstitution(int(d["gate_pos"]), GateKind(d["new_kind"]), d.get("angle"))
    if kind == "gate_insertion":
        return GateInsertion(int(d["position"]), Gate.from_dict(d["gate"]))
    if kind == "gate_deletion":
        return GateDeletion(int(d["gate_pos"]))
    raise ValueError(f"unknown mutation kind {kind!r}")
