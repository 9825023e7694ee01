import csv
import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhe_kmeans.groveropt import grover_000_111_circuits
from qhe_kmeans.keyledger import (
    TGateMode,
    clifford_update,
    derive_rule,
    ledger_rows,
    ledger_to_csv,
    ledger_to_dict,
    pauli_matrix,
    run_ledger,
    t_update,
)
from qhe_kmeans.qotp import KeyBitPair, KeySet, all_keysets
from qhe_kmeans.statevector import Circuit, circuit_unitary, equal_up_to_phase, op

GATES = [op("H", 0), op("X", 0), op("Y", 0), op("Z", 0), op("S", 0), op("Sdg", 0),
         op("CNOT", 0, 1), op("CNOT", 1, 0), op("CZ", 0, 1), op("SWAP", 0, 1)]


def conjugation_holds(gate, before: KeySet, after: KeySet) -> bool:
    # U P_before U^dagger must equal P_after up to a global phase
    u = circuit_unitary(Circuit(2 if gate.arity == 2 else 1, [gate]))
    lhs = u @ pauli_matrix(before.pairs) @ u.conj().T
    return equal_up_to_phase(lhs, pauli_matrix(after.pairs))


def test_hadamard_swaps_bits():
    assert clifford_update(KeySet.of((1, 0)), op("H", 0)) == KeySet.of((0, 1))


def test_cz_example():
    out = clifford_update(KeySet.of((1, 1), (1, 0)), op("CZ", 0, 1))
    assert out == KeySet.of((1, 0), (1, 1))


def test_cnot_example_from_conjugation():
    out = clifford_update(KeySet.of((1, 0), (0, 0)), op("CNOT", 0, 1))
    assert out == KeySet.of((1, 0), (1, 0))


def test_derive_rule_examples():
    assert derive_rule(op("S", 0), KeySet.of((1, 0))) == KeySet.of((1, 1))
    for a, b in itertools.product((0, 1), repeat=2):
        assert derive_rule(op("Z", 0), KeySet.of((a, b))) == KeySet.of((a, b))
    assert derive_rule(op("CZ", 0, 1), KeySet.of((0, 1), (1, 0))) == KeySet.of((0, 0), (1, 0))


def test_derive_rule_rejects_non_clifford():
    with pytest.raises(ValueError):
        derive_rule(op("T", 0), KeySet.of((1, 0)))


def test_clifford_update_rejects_t():
    with pytest.raises(ValueError):
        clifford_update(KeySet.of((1, 0)), op("T", 0))


@pytest.mark.parametrize("gate", GATES, ids=lambda g: g.label())
def test_rule_table_agrees_with_conjugation_for_every_key(gate):
    n = 2 if gate.arity == 2 else 1
    for keys in all_keysets(n):
        after = clifford_update(keys, gate)
        assert after == derive_rule(gate, keys)
        assert conjugation_holds(gate, keys, after)


def test_t_update_algebraic():
    k, s = t_update(KeySet.of((1, 0)), 0, TGateMode.ALGEBRAIC)
    assert k == KeySet.of((1, 1)) and s == 1
    k, s = t_update(KeySet.of((0, 1)), 0, TGateMode.ALGEBRAIC)
    assert k == KeySet.of((0, 1)) and s == 0


def test_t_update_fresh_is_seeded_and_same_key_is_identity():
    keys = KeySet.of((1, 0), (0, 1))
    a = t_update(keys, 1, TGateMode.TRUSTED_FRESH_KEY, np.random.default_rng(4))
    b = t_update(keys, 1, TGateMode.TRUSTED_FRESH_KEY, np.random.default_rng(4))
    assert a == b and a[0][0] == keys[0]
    assert t_update(keys, 0, TGateMode.TRUSTED_SAME_KEY) == (keys, 0)


def test_algebraic_t_correction_identity():
    # T X^a Z^b = X^a Z^(a xor b) S^a T up to phase, for all keys
    t = np.diag([1, np.exp(1j * np.pi / 4)])
    s = np.diag([1, 1j])
    for a, b in itertools.product((0, 1), repeat=2):
        lhs = t @ pauli_matrix((KeyBitPair(a, b),))
        rhs = pauli_matrix((KeyBitPair(a, a ^ b),)) @ np.linalg.matrix_power(s, a) @ t
        assert equal_up_to_phase(lhs, rhs)


def test_mode_parse_aliases():
    assert TGateMode.parse("same-key") is TGateMode.TRUSTED_SAME_KEY
    assert TGateMode.parse("fresh") is TGateMode.TRUSTED_FRESH_KEY
    assert TGateMode.parse("algebraic") is TGateMode.ALGEBRAIC
    with pytest.raises(ValueError):
        TGateMode.parse("magic")


def test_empty_circuit_ledger():
    keys = KeySet.of((1, 1), (0, 1))
    entries, final = run_ledger(Circuit(2), keys, TGateMode.TRUSTED_SAME_KEY)
    assert entries == [] and final == keys


def test_ledger_rejects_undecomposed_toffoli():
    with pytest.raises(ValueError):
        run_ledger(Circuit(3).add("TOFFOLI", 0, 1, 2), KeySet.zeros(3), TGateMode.ALGEBRAIC)


def test_search_circuit_final_a_bits():
    _, ev = grover_000_111_circuits()
    entries, final = run_ledger(ev, KeySet.parse("{1,1},{0,1},{0,1}"), TGateMode.TRUSTED_SAME_KEY)
    assert len(entries) == len(ev)
    assert final.a_bits == (1, 0, 0)


def test_ledger_csv_layout():
    c = Circuit(2).add("H", 0).add("CNOT", 0, 1)
    keys = KeySet.of((1, 0), (0, 0))
    entries, final = run_ledger(c, keys, TGateMode.TRUSTED_SAME_KEY)
    rows = list(csv.reader(io.StringIO(ledger_to_csv(keys, entries))))
    assert rows[0] == ["qubit", "initial", "1:H(0)", "2:CNOT(0,1)"]
    assert rows[1] == ["q0", "{1,0}", "{0,1}", "{0,1}"]
    assert rows[2] == ["q1", "{0,0}", "{0,0}", "{0,0}"]
    assert rows == ledger_rows(keys, entries)
    d = ledger_to_dict(keys, entries, final, TGateMode.TRUSTED_SAME_KEY)
    assert d["final"] == [[0, 1], [0, 0]]


@st.composite
def clifford_circuits(draw):
    n = draw(st.integers(1, 3))
    c = Circuit(n)
    for _ in range(draw(st.integers(0, 15))):
        if n >= 2 and draw(st.booleans()):
            a, b = draw(st.permutations(range(n)))[:2]
            c.add(draw(st.sampled_from(["CNOT", "CZ", "SWAP"])), a, b)
        else:
            c.add(draw(st.sampled_from(["H", "S", "Sdg", "X", "Y", "Z"])), draw(st.integers(0, n - 1)))
    return c


@settings(max_examples=60, deadline=None)
@given(clifford_circuits(), st.integers(0, 2**32 - 1))
def test_ledger_tracks_whole_clifford_circuit(c, seed):
    keys = KeySet.of(*np.random.default_rng(seed).integers(0, 2, size=(c.qubit_count, 2)).tolist())
    _, final = run_ledger(c, keys, TGateMode.ALGEBRAIC)
    u = circuit_unitary(c)
    assert equal_up_to_phase(u @ pauli_matrix(keys.pairs), pauli_matrix(final.pairs) @ u)
