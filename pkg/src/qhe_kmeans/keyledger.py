"""Pauli-frame bookkeeping for QOTP keys as gates are evaluated on ciphertext.

A ciphertext ``X^a Z^b |psi>`` that passes through a Clifford gate G becomes
``X^a' Z^b' G|psi>`` up to phase. :func:`clifford_update` holds the bit rules;
:func:`derive_rule` recomputes them from matrices and is used to check them.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .qotp import KeyBitPair, KeySet, random_keyset
from .statevector import (
    CLIFFORD_KINDS,
    T_KINDS,
    Circuit,
    GateOp,
    gate_matrix,
)


class TGateMode(str, enum.Enum):
    TRUSTED_FRESH_KEY = "trusted_fresh_key"
    TRUSTED_SAME_KEY = "trusted_same_key"
    ALGEBRAIC = "algebraic"

    @classmethod
    def parse(cls, value: "str | TGateMode") -> "TGateMode":
        if isinstance(value, TGateMode):
            return value
        aliases = {
            "fresh": cls.TRUSTED_FRESH_KEY,
            "same-key": cls.TRUSTED_SAME_KEY,
            "same_key": cls.TRUSTED_SAME_KEY,
            "algebraic": cls.ALGEBRAIC,
        }
        if value in aliases:
            return aliases[value]
        return cls(value)


DEFAULT_T_MODE = TGateMode.TRUSTED_FRESH_KEY


@dataclass(frozen=True)
class LedgerEntry:
    step: int
    gate: GateOp
    keys_after: KeySet
    s_correction_flags: tuple[int, ...] = field(default=())


def clifford_update(keys: KeySet, gate: GateOp) -> KeySet:
    if gate.kind not in CLIFFORD_KINDS:
        raise ValueError(f"{gate.kind} is not a Clifford gate")
    if max(gate.targets) >= len(keys):
        raise ValueError(f"{gate.label()} out of range for {len(keys)} key pairs")
    kind = gate.kind
    if kind in ("I", "X", "Y", "Z"):
        return keys
    if kind == "H":
        (m,) = gate.targets
        p = keys[m]
        return keys.replace(m, KeyBitPair(p.b, p.a))
    if kind in ("S", "Sdg"):
        (m,) = gate.targets
        p = keys[m]
        return keys.replace(m, KeyBitPair(p.a, p.a ^ p.b))
    m, l = gate.targets
    pm, pl = keys[m], keys[l]
    if kind == "CNOT":
        return keys.replace(m, KeyBitPair(pm.a, pm.b ^ pl.b)).replace(
            l, KeyBitPair(pm.a ^ pl.a, pl.b)
        )
    if kind == "CZ":
        return keys.replace(m, KeyBitPair(pm.a, pm.b ^ pl.a)).replace(
            l, KeyBitPair(pl.a, pl.b ^ pm.a)
        )
    # SWAP
    return keys.replace(m, pl).replace(l, pm)


def pauli_matrix(pairs: tuple[KeyBitPair, ...]) -> np.ndarray:
    """Tensor product of X^a Z^b over ``pairs`` (first pair = most significant qubit)."""
    x = gate_matrix("X")
    z = gate_matrix("Z")
    out = np.eye(1, dtype=complex)
    for p in pairs:
        local = np.linalg.matrix_power(x, p.a) @ np.linalg.matrix_power(z, p.b)
        out = np.kron(out, local)
    return out


def derive_rule(gate: GateOp, keys: KeySet) -> KeySet:
    """Brute-force the frame P' with G P G^dagger = (phase) P'."""
    if gate.arity > 2:
        raise ValueError("derive_rule handles gates on at most two qubits")
    if max(gate.targets) >= len(keys):
        raise ValueError(f"{gate.label()} out of range for {len(keys)} key pairs")
    u = gate_matrix(gate.kind)
    local = tuple(keys[t] for t in gate.targets)
    conj = u @ pauli_matrix(local) @ u.conj().T
    for flat in itertools.product((0, 1), repeat=2 * gate.arity):
        cand = tuple(KeyBitPair(a, b) for a, b in zip(flat[0::2], flat[1::2]))
        p = pauli_matrix(cand)
        # Paulis are orthogonal under the trace inner product
        c = np.trace(p.conj().T @ conj) / p.shape[0]
        if abs(abs(c) - 1) < 1e-9 and np.allclose(conj, c * p, atol=1e-9):
            out = keys
            for t, pair in zip(gate.targets, cand):
                out = out.replace(t, pair)
            return out
    raise ValueError(f"{gate.kind} does not map the Pauli frame to a Pauli frame")


def t_update(
    keys: KeySet,
    qubit: int,
    mode: TGateMode,
    rng: np.random.Generator | None = None,
) -> tuple[KeySet, int]:
    """Key change caused by a T or T-dagger on ``qubit``.

    Returns the new key set and the S-correction bit. The bit is only ever
    set in algebraic mode, where the evaluator applies the gate directly to the
    ciphertext and must follow it with S^a (Sdg^a for T-dagger) to cancel the
    phase error; the frame then becomes (a, a XOR b).
    """
    mode = TGateMode.parse(mode)
    pair = keys[qubit]
    if mode is TGateMode.TRUSTED_FRESH_KEY:
        if rng is None:
            raise ValueError("trusted_fresh_key mode needs a random generator")
        return keys.replace(qubit, random_keyset(1, rng)[0]), 0
    if mode is TGateMode.TRUSTED_SAME_KEY:
        return keys, 0
    return keys.replace(qubit, KeyBitPair(pair.a, pair.a ^ pair.b)), pair.a


def run_ledger(
    circuit: Circuit,
    initial: KeySet,
    mode: TGateMode = DEFAULT_T_MODE,
    rng: np.random.Generator | None = None,
) -> tuple[list[LedgerEntry], KeySet]:
    if len(initial) != circuit.qubit_count:
        raise ValueError(
            f"{len(initial)} key pairs for a {circuit.qubit_count}-qubit circuit"
        )
    mode = TGateMode.parse(mode)
    keys = initial
    entries: list[LedgerEntry] = []
    zero_flags = (0,) * circuit.qubit_count
    for step, gate in enumerate(circuit.ops, start=1):
        flags = zero_flags
        if gate.kind in T_KINDS:
            (q,) = gate.targets
            keys, s_bit = t_update(keys, q, mode, rng)
            if mode is TGateMode.ALGEBRAIC:
                flags = tuple(s_bit if i == q else 0 for i in range(circuit.qubit_count))
        elif gate.kind in CLIFFORD_KINDS:
            keys = clifford_update(keys, gate)
        else:
            raise ValueError(f"{gate.kind} must be decomposed before key tracking")
        entries.append(LedgerEntry(step, gate, keys, flags))
    return entries, keys


def ledger_rows(initial: KeySet, entries: list[LedgerEntry]) -> list[list[str]]:
    """Qubit-per-row grid: first column the qubit, then the initial key, then one column per step."""
    header = ["qubit", "initial"] + [f"{e.step}:{e.gate.label()}" for e in entries]
    rows = [header]
    for q in range(len(initial)):
        rows.append([f"q{q}", str(initial[q])] + [str(e.keys_after[q]) for e in entries])
    return rows


def ledger_to_csv(initial: KeySet, entries: list[LedgerEntry]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(ledger_rows(initial, entries))
    return buf.getvalue()


def ledger_to_dict(
    initial: KeySet, entries: list[LedgerEntry], final: KeySet, mode: TGateMode
) -> dict:
    return {
        "mode": TGateMode.parse(mode).value,
        "initial": initial.to_dict()["pairs"],
        "steps": [
            {
                "step": e.step,
                "gate": e.gate.to_dict(),
                "keys_after": e.keys_after.to_dict()["pairs"],
                "s_correction_flags": list(e.s_correction_flags),
            }
            for e in entries
        ],
        "final": final.to_dict()["pairs"],
    }


def ledger_to_json(
    initial: KeySet, entries: list[LedgerEntry], final: KeySet, mode: TGateMode
) -> str:
    return json.dumps(ledger_to_dict(initial, entries, final, mode), indent=2)
