"""Boolean circuits with exact information accounting.

Circuits are DAGs of fan-in-2 AND/OR/XOR gates over named inputs,
stored in a one-gate-per-line text format.  Because inputs are uniform
bits, every information quantity can be computed exactly by enumerating
the truth table, which is what makes these circuits a ground-truth
testbed: I(X_S; Y) for any input subset S comes from counting, not
estimation.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .textio import write_csv

OPS = ("AND", "OR", "XOR")

MAX_ENUM_INPUTS = 20  # 2^n truth-table rows; enumeration guard


class CircuitError(ValueError):
    """Raised for malformed circuit files or invalid wiring."""


@dataclass(frozen=True)
class Gate:
    gate_id: str
    op: str
    left: str
    right: str


@dataclass(frozen=True)
class CircuitSpec:
    """Validated gate list; gates only reference inputs or earlier gates."""
    n_inputs: int
    gates: tuple[Gate, ...]
    output_ref: str

    def __post_init__(self):
        if self.n_inputs < 1:
            raise CircuitError("a circuit needs at least one input")
        known = {f"x{i}" for i in range(1, self.n_inputs + 1)}
        for gate in self.gates:
            if gate.op not in OPS:
                raise CircuitError(f"gate {gate.gate_id}: unknown op {gate.op!r}")
            if gate.gate_id in known:
                raise CircuitError(f"duplicate reference id {gate.gate_id!r}")
            if not gate.gate_id.startswith("g"):
                raise CircuitError(
                    f"gate id {gate.gate_id!r} must start with 'g'")
            for ref in (gate.left, gate.right):
                if ref not in known:
                    raise CircuitError(
                        f"gate {gate.gate_id}: reference {ref!r} is not an "
                        f"input or an earlier gate")
            known.add(gate.gate_id)
        if self.output_ref not in known:
            raise CircuitError(f"output {self.output_ref!r} is undefined")

    def input_names(self) -> list[str]:
        return [f"x{i}" for i in range(1, self.n_inputs + 1)]


def parse_circuit(text: str, source: str = "<string>") -> CircuitSpec:
    """Parse the one-gate-per-line format.

        inputs 10
        g1 = XOR x1 x7
        out g1

    Blank lines and # comments are allowed anywhere; errors carry line
    numbers.
    """
    n_inputs = None
    gates: list[Gate] = []
    output_ref = None

    def fail(lineno: int, msg: str):
        raise CircuitError(f"{source}:{lineno}: {msg}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "inputs":
            if n_inputs is not None:
                fail(lineno, "duplicate inputs declaration")
            if len(tokens) != 2 or not tokens[1].isdigit():
                fail(lineno, f"expected 'inputs <count>', got {raw.strip()!r}")
            n_inputs = int(tokens[1])
        elif tokens[0] == "out":
            if output_ref is not None:
                fail(lineno, "duplicate out declaration")
            if len(tokens) != 2:
                fail(lineno, f"expected 'out <ref>', got {raw.strip()!r}")
            output_ref = tokens[1]
        else:
            if len(tokens) != 5 or tokens[1] != "=":
                fail(lineno, f"expected '<id> = <OP> <ref> <ref>', "
                             f"got {raw.strip()!r}")
            gate_id, _, op, left, right = tokens
            if op not in OPS:
                fail(lineno, f"unknown op {op!r} (expected AND, OR or XOR)")
            gates.append(Gate(gate_id, op, left, right))
    if n_inputs is None:
        raise CircuitError(f"{source}: missing inputs declaration")
    if output_ref is None:
        raise CircuitError(f"{source}: missing out declaration")
    try:
        return CircuitSpec(n_inputs, tuple(gates), output_ref)
    except CircuitError as exc:
        raise CircuitError(f"{source}: {exc}") from None


def serialize_circuit(spec: CircuitSpec) -> str:
    lines = [f"inputs {spec.n_inputs}"]
    lines += [f"{g.gate_id} = {g.op} {g.left} {g.right}" for g in spec.gates]
    lines.append(f"out {spec.output_ref}")
    return "\n".join(lines) + "\n"


def load_circuit(path: str | Path) -> CircuitSpec:
    p = Path(path)
    return parse_circuit(p.read_text(), source=str(p))


_OP_FN = {
    "AND": np.logical_and,
    "OR": np.logical_or,
    "XOR": np.logical_xor,
}


def eval_circuit(spec: CircuitSpec, inputs: np.ndarray) -> np.ndarray:
    """Evaluate on an (n_rows, n_inputs) array of {0,1}; returns (n_rows,)."""
    inputs = np.asarray(inputs)
    if inputs.ndim != 2 or inputs.shape[1] != spec.n_inputs:
        raise CircuitError(
            f"expected (rows, {spec.n_inputs}) input array, got {inputs.shape}")
    values: dict[str, np.ndarray] = {
        f"x{i + 1}": inputs[:, i].astype(bool) for i in range(spec.n_inputs)}
    for gate in spec.gates:
        values[gate.gate_id] = _OP_FN[gate.op](values[gate.left],
                                               values[gate.right])
    return values[spec.output_ref].astype(np.uint8)


@dataclass
class TruthTable:
    """Exhaustive evaluation under uniform inputs.

    Row r assigns input x_i the bit (r >> (i - 1)) & 1.
    """
    n_inputs: int
    inputs: np.ndarray   # (2^n, n) uint8
    outputs: np.ndarray  # (2^n,) uint8

    @classmethod
    def from_circuit(cls, spec: CircuitSpec) -> "TruthTable":
        if spec.n_inputs > MAX_ENUM_INPUTS:
            raise CircuitError(
                f"refusing to enumerate 2^{spec.n_inputs} rows "
                f"(limit {MAX_ENUM_INPUTS} inputs)")
        rows = np.arange(2 ** spec.n_inputs, dtype=np.int64)
        inputs = ((rows[:, None] >> np.arange(spec.n_inputs)) & 1).astype(np.uint8)
        return cls(spec.n_inputs, inputs, eval_circuit(spec, inputs))

    def output_entropy_bits(self) -> float:
        return binary_entropy(float(self.outputs.mean()))


def binary_entropy(p: float) -> float:
    """H(p) in bits; 0 at the endpoints."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def exact_subset_mi(table: TruthTable, subset) -> float:
    """I(X_S; Y) in bits by exact enumeration.

    subset is an iterable of input indices (1-based, matching x1..xN).
    Uniform inputs make every S-assignment equiprobable, so
    H(Y | X_S) is the plain average of the per-group binary entropies.
    """
    subset = sorted(set(int(i) for i in subset))
    if any(i < 1 or i > table.n_inputs for i in subset):
        raise CircuitError(f"subset {subset} outside inputs 1..{table.n_inputs}")
    h_y = table.output_entropy_bits()
    if not subset:
        return 0.0
    keys = np.zeros(len(table.outputs), dtype=np.int64)
    for pos, i in enumerate(subset):
        keys |= table.inputs[:, i - 1].astype(np.int64) << pos
    n_groups = 2 ** len(subset)
    ones = np.bincount(keys, weights=table.outputs, minlength=n_groups)
    totals = np.bincount(keys, minlength=n_groups)
    h_cond = sum(binary_entropy(o / t) for o, t in zip(ones, totals)) / n_groups
    return h_y - h_cond


@dataclass
class SubsetPoint:
    bitmask: int       # bit (i-1) set when x_i is in the subset
    size_bits: int
    mi_bits: float
    on_front: bool


@dataclass
class SubsetScatter:
    points: list[SubsetPoint]
    front: list[tuple[int, float]]  # (subset size, best MI) for each size


def subset_scatter(table: TruthTable) -> SubsetScatter:
    """Exact MI of every input subset plus the per-size Pareto front."""
    n = table.n_inputs
    best: list[float] = [0.0] * (n + 1)
    raw: list[tuple[int, int, float]] = []
    for mask in range(2 ** n):
        subset = [i + 1 for i in range(n) if mask >> i & 1]
        mi = exact_subset_mi(table, subset)
        raw.append((mask, len(subset), mi))
        best[len(subset)] = max(best[len(subset)], mi)
    points = [SubsetPoint(mask, size, mi,
                          on_front=abs(mi - best[size]) <= 1e-12)
              for mask, size, mi in raw]
    front = [(size, best[size]) for size in range(n + 1)]
    return SubsetScatter(points=points, front=front)


def write_scatter_csv(scatter: SubsetScatter, path: str | Path) -> None:
    write_csv(path, ["subset_bitmask", "size_bits", "mi_bits", "pareto_flag"],
              [[p.bitmask, p.size_bits, p.mi_bits, int(p.on_front)]
               for p in scatter.points])


# The committed 10-input reference circuit.  Input 3 feeds the output
# gate's left branch through a single intermediate AND, the shortest
# route of any input, and carries the most single-input information;
# the XOR pair (x8, x9) carries none alone.  Output bias is 0.443, so
# H(Y) = 0.991 bits.
DEFAULT_CIRCUIT_FILE = "default10.circ"


def default_circuit() -> CircuitSpec:
    text = resources.files("dib.circuits").joinpath(
        DEFAULT_CIRCUIT_FILE).read_text()
    return parse_circuit(text, source=DEFAULT_CIRCUIT_FILE)


def passthrough_circuit(n_inputs: int = 10, which: int = 3) -> CircuitSpec:
    """Y = x_which among n_inputs - 1 irrelevant inputs."""
    gate = Gate("g1", "AND", f"x{which}", f"x{which}")
    return CircuitSpec(n_inputs, (gate,), "g1")
