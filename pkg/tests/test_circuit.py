import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dib.circuit import (
    CircuitError,
    CircuitSpec,
    Gate,
    TruthTable,
    binary_entropy,
    default_circuit,
    eval_circuit,
    exact_subset_mi,
    parse_circuit,
    passthrough_circuit,
    serialize_circuit,
    subset_scatter,
    write_scatter_csv,
)
from dib.textio import read_csv

AND2 = "inputs 2\ng1 = AND x1 x2\nout g1\n"
XOR2 = "inputs 2\ng1 = XOR x1 x2\nout g1\n"
MAJ3 = """
inputs 3
g1 = AND x1 x2
g2 = AND x1 x3
g3 = AND x2 x3
g4 = OR g1 g2
g5 = OR g4 g3
out g5
"""

# H(1/4) = 2 - 0.75 log2 3, worked out by hand
H_QUARTER = 2.0 - 0.75 * math.log2(3.0)


class TestParsing:
    def test_round_trip(self):
        spec = parse_circuit(MAJ3)
        assert parse_circuit(serialize_circuit(spec)) == spec

    def test_serialized_form_is_canonical(self):
        spec = parse_circuit(AND2)
        assert serialize_circuit(spec) == AND2

    def test_comments_and_blanks_ignored(self):
        text = "# top\ninputs 2\n\ng1 = OR x1 x2  # trailing\nout g1\n"
        spec = parse_circuit(text)
        assert spec.gates[0].op == "OR"

    def test_error_carries_line_number(self):
        text = "inputs 2\ng1 = NAND x1 x2\nout g1\n"
        with pytest.raises(CircuitError, match="f.circ:2"):
            parse_circuit(text, source="f.circ")

    def test_forward_reference_rejected(self):
        text = "inputs 2\ng1 = AND g2 x1\ng2 = OR x1 x2\nout g2\n"
        with pytest.raises(CircuitError, match="g2"):
            parse_circuit(text)

    def test_missing_out_rejected(self):
        with pytest.raises(CircuitError, match="out"):
            parse_circuit("inputs 2\ng1 = AND x1 x2\n")

    def test_missing_inputs_rejected(self):
        with pytest.raises(CircuitError, match="inputs"):
            parse_circuit("g1 = AND x1 x2\nout g1\n")

    def test_duplicate_gate_id_rejected(self):
        text = "inputs 2\ng1 = AND x1 x2\ng1 = OR x1 x2\nout g1\n"
        with pytest.raises(CircuitError, match="duplicate"):
            parse_circuit(text)

    def test_undefined_output_rejected(self):
        with pytest.raises(CircuitError, match="g9"):
            parse_circuit("inputs 2\ng1 = AND x1 x2\nout g9\n")

    def test_malformed_gate_line(self):
        with pytest.raises(CircuitError, match=":2"):
            parse_circuit("inputs 2\ng1 = AND x1\nout g1\n")


class TestEval:
    @pytest.mark.parametrize("op,truth", [
        ("AND", [0, 0, 0, 1]),
        ("OR", [0, 1, 1, 1]),
        ("XOR", [0, 1, 1, 0]),
    ])
    def test_primitive_ops(self, op, truth):
        spec = parse_circuit(f"inputs 2\ng1 = {op} x1 x2\nout g1\n")
        rows = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
        assert eval_circuit(spec, rows).tolist() == truth

    def test_shape_contract(self):
        spec = parse_circuit(AND2)
        with pytest.raises(CircuitError, match="rows, 2"):
            eval_circuit(spec, np.zeros((4, 3)))

    def test_truth_table_row_convention(self):
        # row r assigns x_i the bit (r >> (i-1)) & 1
        tt = TruthTable.from_circuit(parse_circuit(AND2))
        assert tt.inputs.tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]
        assert tt.outputs.tolist() == [0, 0, 0, 1]

    def test_enumeration_guard(self):
        gates = tuple(Gate(f"g{i}", "AND", f"x{i}", f"x{i + 1}")
                      for i in range(1, 2))
        spec = CircuitSpec(21, gates, "g1")
        with pytest.raises(CircuitError, match="2\\^21"):
            TruthTable.from_circuit(spec)


class TestEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_fair_coin(self):
        assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-15)

    def test_quarter(self):
        assert binary_entropy(0.25) == pytest.approx(H_QUARTER, abs=1e-15)


class TestExactMI:
    def test_and_gate_hand_values(self):
        tt = TruthTable.from_circuit(parse_circuit(AND2))
        assert tt.output_entropy_bits() == pytest.approx(H_QUARTER, abs=1e-12)
        # knowing one AND input: H(Y|x1) = (0 + 1)/2
        want = H_QUARTER - 0.5
        assert exact_subset_mi(tt, [1]) == pytest.approx(want, abs=1e-12)
        assert exact_subset_mi(tt, [1, 2]) == pytest.approx(H_QUARTER, abs=1e-12)

    def test_xor_gate_hand_values(self):
        tt = TruthTable.from_circuit(parse_circuit(XOR2))
        assert tt.output_entropy_bits() == pytest.approx(1.0, abs=1e-15)
        assert exact_subset_mi(tt, [1]) == pytest.approx(0.0, abs=1e-15)
        assert exact_subset_mi(tt, [2]) == pytest.approx(0.0, abs=1e-15)
        assert exact_subset_mi(tt, [1, 2]) == pytest.approx(1.0, abs=1e-15)

    def test_majority_hand_values(self):
        # H(Y|x1) = H(3/4), so I = 0.75 log2 3 - 1
        tt = TruthTable.from_circuit(parse_circuit(MAJ3))
        assert tt.output_entropy_bits() == pytest.approx(1.0, abs=1e-15)
        want = 0.75 * math.log2(3.0) - 1.0
        for i in (1, 2, 3):
            assert exact_subset_mi(tt, [i]) == pytest.approx(want, abs=1e-12)

    def test_empty_subset_is_zero(self):
        tt = TruthTable.from_circuit(parse_circuit(MAJ3))
        assert exact_subset_mi(tt, []) == 0.0

    def test_subset_out_of_range(self):
        tt = TruthTable.from_circuit(parse_circuit(AND2))
        with pytest.raises(CircuitError, match="outside"):
            exact_subset_mi(tt, [3])

    def test_duplicate_indices_collapse(self):
        tt = TruthTable.from_circuit(parse_circuit(AND2))
        assert exact_subset_mi(tt, [1, 1]) == exact_subset_mi(tt, [1])


@pytest.fixture(scope="module")
def table():
    return TruthTable.from_circuit(default_circuit())


class TestDefaultCircuit:
    """Frozen enumeration values for the bundled ten-input circuit."""

    def test_output_entropy(self, table):
        assert int(table.outputs.sum()) == 428
        assert table.output_entropy_bits() == pytest.approx(
            0.9804957926024032, abs=1e-12)
        assert 0.9 < table.output_entropy_bits() <= 1.0

    def test_input_3_strictly_dominant(self, table):
        singles = [exact_subset_mi(table, [i]) for i in range(1, 11)]
        assert singles[2] == pytest.approx(0.11190960825307728, abs=1e-12)
        others = singles[:2] + singles[3:]
        assert max(others) < 0.05
        assert singles[2] > max(others) + 0.05

    def test_every_input_informative_alone(self, table):
        # no input hides behind a parity: each one is worth something
        # by itself, which is what lets a sweep open them one at a time
        for i in range(1, 11):
            assert exact_subset_mi(table, [i]) > 1e-4

    def test_every_input_informative_given_the_rest(self, table):
        full = exact_subset_mi(table, range(1, 11))
        for i in range(1, 11):
            rest = [j for j in range(1, 11) if j != i]
            assert full - exact_subset_mi(table, rest) > 0.1

    def test_matches_straight_line_reimplementation(self, table):
        rng = np.random.default_rng(99)
        rows = rng.integers(0, 2, size=(20, 10))
        x = rows.astype(bool).T
        g1 = x[0] & x[1]
        g2 = x[3] & x[4]
        g3 = x[5] & x[6]
        g4 = x[7] | x[8]
        g5 = g1 & g2
        g6 = g3 & g4
        g7 = x[9] | x[7]
        g8 = g5 ^ g6
        g9 = x[2] & g7
        want = (g9 ^ g8).astype(np.int64)
        assert eval_circuit(default_circuit(), rows).tolist() == want.tolist()

    def test_full_subset_recovers_output_entropy(self, table):
        full = exact_subset_mi(table, range(1, 11))
        assert full == pytest.approx(table.output_entropy_bits(), abs=1e-12)

    def test_front_values_frozen(self, table):
        want = [
            0.0,
            0.11190960825307728,
            0.19058574190354038,
            0.3182942442282908,
            0.43610887180320623,
            0.5603669843125163,
            0.643205725985389,
            0.7087135710026049,
            0.7776762614876197,
            0.8554957926024032,
            0.9804957926024032,
        ]
        front = subset_scatter(table).front
        assert [s for s, _ in front] == list(range(11))
        np.testing.assert_allclose([m for _, m in front], want, atol=1e-12)

    def test_monotone_in_subset_inclusion(self, table):
        # adding an input can never lose information
        sc = subset_scatter(table)
        mi = np.array([p.mi_bits for p in sc.points])
        for mask in range(1024):
            for i in range(10):
                if not mask >> i & 1:
                    assert mi[mask] <= mi[mask | 1 << i] + 1e-12

    def test_scatter_csv_schema(self, table, tmp_path):
        sc = subset_scatter(table)
        out = tmp_path / "scatter.csv"
        write_scatter_csv(sc, out)
        header, rows = read_csv(out)
        assert header == ["subset_bitmask", "size_bits", "mi_bits",
                          "pareto_flag"]
        assert len(rows) == 1024
        flagged = [r for r in rows if r[3] == "1"]
        assert len(flagged) == 24

    def test_pareto_flags_mark_per_size_maxima(self, table):
        sc = subset_scatter(table)
        by_size: dict[int, float] = {}
        for p in sc.points:
            by_size[p.size_bits] = max(by_size.get(p.size_bits, 0.0), p.mi_bits)
        for p in sc.points:
            assert p.on_front == (abs(p.mi_bits - by_size[p.size_bits]) <= 1e-12)


class TestPassthrough:
    def test_copies_selected_input(self):
        tt = TruthTable.from_circuit(passthrough_circuit(10, which=3))
        assert tt.output_entropy_bits() == pytest.approx(1.0, abs=1e-15)
        assert exact_subset_mi(tt, [3]) == pytest.approx(1.0, abs=1e-15)
        for i in (1, 2, 4, 5, 6, 7, 8, 9, 10):
            assert exact_subset_mi(tt, [i]) == pytest.approx(0.0, abs=1e-15)


@st.composite
def random_circuits(draw):
    n = draw(st.integers(min_value=2, max_value=6))
    n_gates = draw(st.integers(min_value=1, max_value=8))
    refs = [f"x{i}" for i in range(1, n + 1)]
    gates = []
    for g in range(1, n_gates + 1):
        op = draw(st.sampled_from(("AND", "OR", "XOR")))
        left = draw(st.sampled_from(refs))
        right = draw(st.sampled_from(refs))
        gates.append(Gate(f"g{g}", op, left, right))
        refs.append(f"g{g}")
    return CircuitSpec(n, tuple(gates), refs[-1])


@given(random_circuits())
@settings(max_examples=60, deadline=None)
def test_random_circuit_invariants(spec):
    assert parse_circuit(serialize_circuit(spec)) == spec
    tt = TruthTable.from_circuit(spec)
    h = tt.output_entropy_bits()
    full = exact_subset_mi(tt, range(1, spec.n_inputs + 1))
    assert full == pytest.approx(h, abs=1e-12)
    for i in range(1, spec.n_inputs + 1):
        mi = exact_subset_mi(tt, [i])
        assert -1e-12 <= mi <= h + 1e-12
