"""SwapTest overlap estimation, in plaintext and through the delegated protocol.

Register layout: qubit 0 is the ancilla, qubits ``1..r`` hold the first
state and ``r+1..2r`` the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import protocol
from .keyledger import DEFAULT_T_MODE, TGateMode
from .qotp import KeyBitPair, KeySet
from .statevector import (
    Circuit,
    PureState,
    apply_bitflip_noise,
    decompose_circuit,
    embed,
    init_basis,
    outcome_probability,
    run_circuit,
    sample_shots,
)


@dataclass(frozen=True)
class SimilarityEstimate:
    p0: float
    similarity: float
    shots: int
    std_error: float

    @classmethod
    def from_p0(cls, p0: float, shots: int) -> "SimilarityEstimate":
        p0 = float(min(1.0, max(0.0, p0)))
        sim = min(1.0, max(0.0, 2 * p0 - 1))
        err = math.sqrt(p0 * (1 - p0) / shots) if shots > 0 else 0.0
        return cls(p0, sim, shots, err)

    def to_dict(self) -> dict:
        return {
            "p0": self.p0,
            "similarity": self.similarity,
            "shots": self.shots,
            "std_error": self.std_error,
        }


def swaptest_core(register_size: int, decomposed: bool = False) -> Circuit:
    """H on the ancilla, a controlled swap per register position, H again."""
    if register_size < 1:
        raise ValueError("register_size must be >= 1")
    r = register_size
    c = Circuit(1 + 2 * r)
    c.add("H", 0)
    for i in range(r):
        c.add("CSWAP", 0, 1 + i, 1 + r + i)
    c.add("H", 0)
    return decompose_circuit(c) if decomposed else c


def prep_circuit(prep_a: Circuit, prep_b: Circuit) -> Circuit:
    if prep_a.qubit_count != prep_b.qubit_count:
        raise ValueError(
            f"register size mismatch: {prep_a.qubit_count} vs {prep_b.qubit_count}"
        )
    r = prep_a.qubit_count
    n = 1 + 2 * r
    return Circuit(n, embed(prep_a, n, 1) + embed(prep_b, n, 1 + r))


def build_swaptest(prep_a: Circuit, prep_b: Circuit, decomposed: bool = False) -> Circuit:
    prep = prep_circuit(prep_a, prep_b)
    return prep.extend(swaptest_core(prep_a.qubit_count, decomposed).ops)


def _joint_input(state_a: PureState, state_b: PureState) -> PureState:
    if state_a.qubit_count != state_b.qubit_count:
        raise ValueError("states have different register sizes")
    return init_basis(1, "0").tensor(state_a).tensor(state_b)


def swaptest_state(state_a: PureState, state_b: PureState) -> PureState:
    """State just before the ancilla is measured."""
    return run_circuit(_joint_input(state_a, state_b), swaptest_core(state_a.qubit_count))


def swaptest_p0(state_a: PureState, state_b: PureState) -> float:
    return outcome_probability(swaptest_state(state_a, state_b), [0], "0")


def similarity_plain(
    state_a: PureState,
    state_b: PureState,
    shots: int | None,
    rng: np.random.Generator | None = None,
    noise_p: float = 0.0,
) -> SimilarityEstimate:
    """Estimate the overlap from the ancilla statistics; ``shots=None`` is exact."""
    final = swaptest_state(state_a, state_b)
    if shots is None:
        return SimilarityEstimate.from_p0(outcome_probability(final, [0], "0"), 0)
    if shots <= 0:
        raise ValueError("shots must be > 0")
    rng = np.random.default_rng() if rng is None else rng
    hist = sample_shots(final, shots, rng)
    if noise_p:
        hist = apply_bitflip_noise(hist, noise_p, rng)
    return SimilarityEstimate.from_p0(hist.marginal([0]).frequency("0"), shots)


def data_register_keys(keys: KeySet, register_size: int, shared_key_only: bool) -> KeySet:
    r = register_size
    if len(keys) == r:
        return keys.concat(keys)
    if len(keys) != 2 * r:
        raise ValueError(f"expected {r} or {2 * r} key pairs, got {len(keys)}")
    if shared_key_only and keys.pairs[:r] != keys.pairs[r:]:
        raise ValueError("both data registers must be encrypted with the same key pairs")
    return keys


def similarity_encrypted(
    prep_a: Circuit,
    prep_b: Circuit,
    keys: KeySet,
    shots: int | None,
    mode: TGateMode | str = DEFAULT_T_MODE,
    rng: np.random.Generator | None = None,
    noise_p: float = 0.0,
    shared_key_only: bool = False,
) -> tuple[SimilarityEstimate, protocol.SessionResult]:
    """SwapTest delegated to the evaluator with both data registers encrypted.

    ``keys`` holds either one pair per register position (used for both
    registers) or one pair per data qubit. The ancilla starts unencrypted;
    its outcome is still XOR-ed with the final ancilla key, which can pick up
    a mask from the CNOT back-action inside the decomposed controlled swap.
    """
    r = prep_a.qubit_count
    data_keys = data_register_keys(keys, r, shared_key_only)
    initial = KeySet((KeyBitPair(0, 0),)).concat(data_keys)
    session = protocol.run_delegated(
        prep_circuit(prep_a, prep_b),
        swaptest_core(r, decomposed=True),
        initial,
        shots,
        mode,
        rng,
        noise_p,
    )
    if shots is None:
        p0 = sum(v for k, v in session.decrypted_distribution.items() if k[0] == "0")
        return SimilarityEstimate.from_p0(p0, 0), session
    return SimilarityEstimate.from_p0(session.decrypted.marginal([0]).frequency("0"), shots), session


def basis_prep(bit: str) -> Circuit:
    """One-qubit preparation of |0> or |1>."""
    c = Circuit(1)
    if bit == "1":
        c.add("X", 0)
    elif bit != "0":
        raise ValueError(f"not a bit: {bit!r}")
    return c


__all__ = [
    "SimilarityEstimate",
    "basis_prep",
    "build_swaptest",
    "prep_circuit",
    "similarity_encrypted",
    "similarity_plain",
    "swaptest_core",
    "swaptest_p0",
    "swaptest_state",
]
