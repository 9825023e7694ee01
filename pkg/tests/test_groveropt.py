import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhe_kmeans.groveropt import (
    ValueTable,
    best_iterations,
    build_phase_oracle,
    durr_hoyer_min,
    encrypted_grover,
    encrypted_search,
    grover_000_111_circuits,
    grover_search,
    marked_probability,
    marked_set,
    optimal_iterations,
    oracle_diagonal,
    reference_table,
    success_formula,
)
from qhe_kmeans.keyledger import TGateMode
from qhe_kmeans.qotp import KeySet, random_keyset
from qhe_kmeans.statevector import marginal_distribution, prepare


def test_marked_set_examples():
    t = reference_table()
    assert marked_set(t, 3) == {"000", "111"}
    assert marked_set(t, 0) == set()
    assert len(marked_set(t, 8)) == 8


def test_reference_table_values():
    t = reference_table()
    assert (t("000"), t("001"), t("111"), t("010")) == (1, 3, 2, 7)
    assert t.argmin() == ("000", 1)


def test_table_must_be_total():
    with pytest.raises(ValueError):
        ValueTable(2, {"00": 1, "01": 2, "10": 3})
    with pytest.raises(ValueError):
        ValueTable.from_dict({"index_bits": 1, "values": {"0": 1, "1": 2, "2": 0}})
    with pytest.raises(ValueError):
        ValueTable.from_list([1, 2, 3])


def test_table_json_roundtrip():
    t = reference_table()
    assert ValueTable.from_dict(t.to_dict()) == t


def expected_diagonal(marked, m):
    return np.array([-1 if format(i, f"0{m}b") in marked else 1 for i in range(2**m)])


@pytest.mark.parametrize(
    "marked,m",
    [({"000", "111"}, 3), ({"1"}, 1), ({"01"}, 2), ({"0110", "1111"}, 4), ({"00000"}, 5)],
)
def test_oracle_diagonal(marked, m):
    for decomposed in (False, True):
        d = oracle_diagonal(build_phase_oracle(marked, m, decomposed), m)
        assert np.allclose(d, expected_diagonal(marked, m), atol=1e-10)


def test_oracle_rejects_empty_marked_set():
    with pytest.raises(ValueError):
        build_phase_oracle(set(), 3)


def test_grover_search_finds_both_marked_states():
    h = grover_search({"000", "111"}, 3, 1, 8192, np.random.default_rng(0))
    assert h.support() == {"000", "111"}
    sigma = math.sqrt(8192 * 0.25)
    assert all(abs(h.counts[k] - 4096) <= 4 * sigma for k in ("000", "111"))


def test_marked_probability_examples():
    assert marked_probability({"000", "111"}, 3, 1) == pytest.approx(1.0, abs=1e-12)
    assert marked_probability({"11"}, 2, 1) == pytest.approx(1.0, abs=1e-12)
    assert marked_probability({"0"}, 1, 1) == pytest.approx(0.5, abs=1e-12)
    assert success_formula(2, 1, 1) == pytest.approx(0.5)


def test_grover_rejects_empty_or_full():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        grover_search(set(), 2, 1, 10, rng)
    with pytest.raises(ValueError):
        grover_search({"0", "1"}, 1, 1, 10, rng)


def test_optimal_iterations_examples():
    assert optimal_iterations(8, 2) == 1
    assert optimal_iterations(4, 1) == 1
    assert optimal_iterations(1024, 1) == 25


def test_best_iterations_avoids_zero_success():
    # N=4, M=2 gives theta=pi/4 and one iteration lands on sin^2(3pi/4)=0.5;
    # zero iterations (uniform sampling) gives the same 0.5, so either is fine,
    # but N=8, M=6 at one iteration gives sin^2(3*pi/3)=0
    assert success_formula(8, 6, optimal_iterations(8, 6)) == pytest.approx(0.0, abs=1e-12)
    assert best_iterations(8, 6) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.data())
def test_success_formula_matches_simulation(m, data):
    N = 2**m
    marked = data.draw(st.sets(st.integers(0, N - 1), min_size=1, max_size=N - 1))
    marked = {format(i, f"0{m}b") for i in marked}
    j = data.draw(st.integers(0, 3))
    sim = marked_probability(marked, m, j)
    assert sim == pytest.approx(success_formula(N, len(marked), j), abs=1e-9)


def test_reference_minimum_from_given_start():
    res = durr_hoyer_min(reference_table(), start="001", rng=np.random.default_rng(0))
    assert (res.a_min, res.b_min) == ("000", 1)
    assert res.trace[0][0] == 3
    assert marked_set(reference_table(), res.trace[0][0]) == {"000", "111"}
    assert res.iterations_used <= 3


def test_constant_table_terminates_immediately():
    res = durr_hoyer_min(ValueTable.from_list([5] * 8), rng=np.random.default_rng(1))
    assert res.b_min == 5 and res.iterations_used == 0 and res.terminated_early


def test_random_tables_find_minimum():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        t = ValueTable.from_list(rng.integers(0, 16, size=8).tolist())
        res = durr_hoyer_min(t, rng=rng)
        hits += res.b_min == t.argmin()[1]
    assert hits >= 95


def test_encrypted_grover_peaks():
    res = encrypted_grover(
        {"000", "111"}, 3, KeySet.parse("{1,1},{0,1},{0,1}"), 8192,
        TGateMode.TRUSTED_SAME_KEY, np.random.default_rng(0),
    )
    assert res.ciphertext.support() == {"100", "011"}
    assert res.decrypted.support() == {"000", "111"}


def test_encrypted_grover_zero_keys_is_plaintext():
    res = encrypted_grover(
        {"000", "111"}, 3, KeySet.zeros(3), 8192, TGateMode.TRUSTED_SAME_KEY, np.random.default_rng(0)
    )
    assert res.ciphertext == res.decrypted


def test_encrypted_grover_random_keys():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        res = encrypted_grover({"010", "101"}, 3, random_keyset(3, rng), 200, "fresh", rng)
        assert res.decrypted.frequency("010") + res.decrypted.frequency("101") >= 0.95


def test_encrypted_grover_with_ancilla():
    rng = np.random.default_rng(3)
    res = encrypted_grover({"1011"}, 4, random_keyset(4, rng), 2000, "algebraic", rng)
    assert res.decrypted.frequency("1011") > 0.9


def test_hand_built_search_matches_generic_distribution():
    prep, ev = grover_000_111_circuits()
    d = marginal_distribution(prepare(prep.extend(ev.ops)))
    assert {k: v for k, v in d.items() if v > 1e-12} == pytest.approx({"000": 0.5, "111": 0.5})
    assert ev.count(["T", "Tdg"]) == 7


def test_encrypted_minimum_search():
    rng = np.random.default_rng(5)
    res = durr_hoyer_min(
        reference_table(), rng=rng, start="010",
        search=encrypted_search(np.random.default_rng(6), TGateMode.ALGEBRAIC),
    )
    assert (res.a_min, res.b_min) == ("000", 1)
