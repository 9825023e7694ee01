"""Quantum one-time pad: per-qubit X^a Z^b masking."""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .statevector import (
    PureState,
    ShotHistogram,
    apply_op,
    op,
)

MIXING_MAX_QUBITS = 3


@dataclass(frozen=True)
class KeyBitPair:
    a: int
    b: int

    def __post_init__(self) -> None:
        if self.a not in (0, 1) or self.b not in (0, 1):
            raise ValueError(f"key bits must be 0 or 1, got ({self.a}, {self.b})")

    def __str__(self) -> str:
        return f"{{{self.a},{self.b}}}"


@dataclass(frozen=True)
class KeySet:
    """One (a, b) pair per qubit; ``pairs[i]`` masks qubit ``i``."""

    pairs: tuple[KeyBitPair, ...]

    def __post_init__(self) -> None:
        pairs = tuple(p if isinstance(p, KeyBitPair) else KeyBitPair(*p) for p in self.pairs)
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def of(cls, *pairs: Sequence[int]) -> "KeySet":
        return cls(tuple(KeyBitPair(int(a), int(b)) for a, b in pairs))

    @classmethod
    def zeros(cls, n: int) -> "KeySet":
        return cls.of(*([(0, 0)] * n))

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i: int) -> KeyBitPair:
        return self.pairs[i]

    def __iter__(self):
        return iter(self.pairs)

    def replace(self, index: int, pair: KeyBitPair) -> "KeySet":
        pairs = list(self.pairs)
        pairs[index] = pair
        return KeySet(tuple(pairs))

    def concat(self, other: "KeySet") -> "KeySet":
        return KeySet(self.pairs + other.pairs)

    @property
    def a_bits(self) -> tuple[int, ...]:
        return tuple(p.a for p in self.pairs)

    @property
    def b_bits(self) -> tuple[int, ...]:
        return tuple(p.b for p in self.pairs)

    def a_mask(self) -> str:
        return "".join(str(a) for a in self.a_bits)

    def __str__(self) -> str:
        return ",".join(str(p) for p in self.pairs)

    def to_dict(self) -> dict:
        return {"pairs": [[p.a, p.b] for p in self.pairs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "KeySet":
        return cls.of(*d["pairs"])

    @classmethod
    def parse(cls, text: str) -> "KeySet":
        """Accept JSON (``{"pairs": [[1,1],...]}`` or ``[[1,1],...]``) or ``{1,1},{0,1}``."""
        text = text.strip()
        if text.startswith("[") or text.startswith('{"') or text.startswith("{ \""):
            data = json.loads(text)
            if isinstance(data, list):
                return cls.of(*data)
            return cls.from_dict(data)
        found = re.findall(r"\{\s*([01])\s*,\s*([01])\s*\}", text)
        if not found:
            raise ValueError(f"cannot parse key set from {text!r}")
        return cls.of(*[(int(a), int(b)) for a, b in found])


def random_keyset(qubit_count: int, rng: np.random.Generator) -> KeySet:
    if qubit_count < 1:
        raise ValueError("qubit_count must be >= 1")
    bits = rng.integers(0, 2, size=(qubit_count, 2))
    return KeySet.of(*[(int(a), int(b)) for a, b in bits])


def all_keysets(qubit_count: int) -> Iterable[KeySet]:
    for flat in itertools.product((0, 1), repeat=2 * qubit_count):
        yield KeySet.of(*zip(flat[0::2], flat[1::2]))


def _check_len(state: PureState, keys: KeySet) -> None:
    if len(keys) != state.qubit_count:
        raise ValueError(f"{len(keys)} key pairs for a {state.qubit_count}-qubit state")


def apply_mask(state: PureState, keys: KeySet) -> PureState:
    """Apply X^a Z^b to every qubit (Z first, then X)."""
    _check_len(state, keys)
    for q, pair in enumerate(keys):
        if pair.b:
            state = apply_op(state, op("Z", q))
        if pair.a:
            state = apply_op(state, op("X", q))
    return state


def encrypt(state: PureState, keys: KeySet) -> PureState:
    return apply_mask(state, keys)


def decrypt(state: PureState, keys: KeySet) -> PureState:
    # X^a Z^b is its own inverse up to the sign (-1)^{ab}
    return apply_mask(state, keys)


def xor_bits(bits: str, mask: str) -> str:
    if len(bits) != len(mask):
        raise ValueError("bitstring and mask lengths differ")
    return "".join("1" if x != y else "0" for x, y in zip(bits, mask))


def decrypt_bitstring(bits: str, keys: KeySet) -> str:
    return xor_bits(bits, keys.a_mask())


def decrypt_histogram(histogram: ShotHistogram, keys: KeySet) -> ShotHistogram:
    """Basis-outcome decryption: XOR every bitstring with the key's a-bits."""
    mask = keys.a_mask()
    out: dict[str, int] = {}
    for k, c in histogram.counts.items():
        d = xor_bits(k, mask)
        out[d] = out.get(d, 0) + c
    return ShotHistogram(histogram.shots, dict(sorted(out.items())))


def decrypt_distribution(dist: dict[str, float], keys: KeySet) -> dict[str, float]:
    mask = keys.a_mask()
    return {xor_bits(k, mask): v for k, v in dist.items()}


def key_average_density(plaintext: PureState) -> np.ndarray:
    """Average of the encrypted density matrix over every key set."""
    n = plaintext.qubit_count
    if n > MIXING_MAX_QUBITS:
        raise ValueError(f"key averaging is limited to {MIXING_MAX_QUBITS} qubits")
    dim = 2**n
    rho = np.zeros((dim, dim), dtype=complex)
    for keys in all_keysets(n):
        v = encrypt(plaintext, keys).amplitudes
        rho += np.outer(v, v.conj())
    return rho / 4**n
