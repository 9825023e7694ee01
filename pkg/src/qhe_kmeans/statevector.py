"""Dense pure-state simulator for the Clifford+T gate set used by the toolkit.

Qubit 0 is the most significant bit of the basis index, so for three qubits
``|100>`` is index 4.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS_ENV = "QHE_MAX_QUBITS"
DEFAULT_MAX_QUBITS = 20
NORM_TOL = 1e-10

_SQ2 = 1 / math.sqrt(2)

_GATE_MATRICES: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "Sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    "Tdg": np.array([[1, 0], [0, np.exp(-1j * np.pi / 4)]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}


def _toffoli_matrix() -> np.ndarray:
    m = np.eye(8, dtype=complex)
    m[[6, 7]] = m[[7, 6]]
    return m


def _cswap_matrix() -> np.ndarray:
    m = np.eye(8, dtype=complex)
    m[[5, 6]] = m[[6, 5]]
    return m


_GATE_MATRICES["TOFFOLI"] = _toffoli_matrix()
_GATE_MATRICES["CSWAP"] = _cswap_matrix()

GATE_ARITY = {name: int(round(math.log2(m.shape[0]))) for name, m in _GATE_MATRICES.items()}
# RY is a client-side preparation gate (amplitude encoding); never evaluated on ciphertext
PARAM_KINDS = frozenset({"RY"})
GATE_ARITY["RY"] = 1
GATE_KINDS = tuple(GATE_ARITY)
CLIFFORD_KINDS = frozenset({"I", "X", "Y", "Z", "H", "S", "Sdg", "CNOT", "CZ", "SWAP"})
T_KINDS = frozenset({"T", "Tdg"})


def max_qubits() -> int:
    """Simulator qubit cap, overridable through ``QHE_MAX_QUBITS``."""
    raw = os.environ.get(MAX_QUBITS_ENV)
    if raw is None:
        return DEFAULT_MAX_QUBITS
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"{MAX_QUBITS_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError(f"{MAX_QUBITS_ENV} must be >= 1")
    return cap


def _check_qubit_count(n: int) -> None:
    if n < 1:
        raise ValueError("qubit_count must be >= 1")
    cap = max_qubits()
    if n > cap:
        raise ValueError(f"qubit_count {n} exceeds simulator cap {cap}")


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    if kind == "RY":
        if angle is None:
            raise ValueError("RY needs an angle")
        return ry_matrix(angle)
    try:
        return _GATE_MATRICES[kind].copy()
    except KeyError:
        raise ValueError(f"unknown gate kind {kind!r}") from None


@dataclass(frozen=True)
class GateOp:
    """A gate kind plus its qubit indices (controls first, target last)."""

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if (self.angle is not None) != (self.kind in PARAM_KINDS):
            raise ValueError(f"{self.kind} {'needs' if self.kind in PARAM_KINDS else 'takes no'} angle")
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if len(targets) != GATE_ARITY[self.kind]:
            raise ValueError(
                f"{self.kind} takes {GATE_ARITY[self.kind]} qubit(s), got {len(targets)}"
            )
        if len(set(targets)) != len(targets):
            raise ValueError(f"{self.kind} targets must be distinct: {targets}")
        if any(t < 0 for t in targets):
            raise ValueError(f"negative qubit index in {targets}")

    @property
    def arity(self) -> int:
        return len(self.targets)

    def label(self) -> str:
        return f"{self.kind}({','.join(map(str, self.targets))})"

    def matrix(self) -> np.ndarray:
        if self.kind == "RY":
            return ry_matrix(self.angle)
        return _GATE_MATRICES[self.kind]

    def to_dict(self) -> dict:
        d = {"gate": self.kind, "targets": list(self.targets)}
        if self.angle is not None:
            d["angle"] = self.angle
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GateOp":
        return cls(d["gate"], tuple(d["targets"]), d.get("angle"))


def op(kind: str, *targets: int) -> GateOp:
    return GateOp(kind, tuple(targets))


def ry(theta: float, target: int) -> GateOp:
    return GateOp("RY", (target,), float(theta))


@dataclass
class Circuit:
    qubit_count: int
    ops: list[GateOp] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.qubit_count < 1:
            raise ValueError("qubit_count must be >= 1")
        self.ops = list(self.ops)
        for g in self.ops:
            self._check(g)

    def _check(self, g: GateOp) -> None:
        if max(g.targets) >= self.qubit_count:
            raise ValueError(f"{g.label()} out of range for {self.qubit_count} qubits")

    def add(self, kind: str, *targets: int) -> "Circuit":
        g = GateOp(kind, tuple(targets))
        self._check(g)
        self.ops.append(g)
        return self

    def extend(self, ops: Iterable[GateOp]) -> "Circuit":
        for g in ops:
            self._check(g)
            self.ops.append(g)
        return self

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def count(self, kinds: Iterable[str]) -> int:
        kinds = set(kinds)
        return sum(1 for g in self.ops if g.kind in kinds)

    def to_dict(self) -> dict:
        return {"qubits": self.qubit_count, "ops": [g.to_dict() for g in self.ops]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["qubits"]), [GateOp.from_dict(g) for g in d.get("ops", [])])

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over ``2**qubit_count`` basis states."""

    qubit_count: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        _check_qubit_count(self.qubit_count)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.qubit_count:
            raise ValueError(
                f"expected {2 ** self.qubit_count} amplitudes, got {amps.shape[0]}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, vec: Sequence[complex], normalize: bool = True) -> "PureState":
        v = np.asarray(vec, dtype=complex).reshape(-1)
        n = int(round(math.log2(v.shape[0]))) if v.shape[0] > 0 else 0
        if v.shape[0] != 2**n:
            raise ValueError("vector length must be a power of two")
        if normalize:
            nrm = np.linalg.norm(v)
            if nrm == 0:
                raise ValueError("cannot normalize the zero vector")
            v = v / nrm
        return cls(n, v)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(
            self.qubit_count + other.qubit_count,
            np.kron(self.amplitudes, other.amplitudes),
        )


@dataclass
class ShotHistogram:
    shots: int
    counts: dict[str, int]

    def __post_init__(self) -> None:
        if self.shots <= 0:
            raise ValueError("shots must be > 0")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def frequency(self, bits: str) -> float:
        return self.counts.get(bits, 0) / self.shots

    def marginal(self, positions: Sequence[int]) -> "ShotHistogram":
        out: dict[str, int] = {}
        for key, c in self.counts.items():
            sub = "".join(key[i] for i in positions)
            out[sub] = out.get(sub, 0) + c
        return ShotHistogram(self.shots, dict(sorted(out.items())))

    def support(self) -> set[str]:
        return {k for k, c in self.counts.items() if c > 0}

    def to_dict(self) -> dict:
        return {"shots": self.shots, "counts": dict(sorted(self.counts.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "ShotHistogram":
        return cls(int(d["shots"]), {str(k): int(v) for k, v in d["counts"].items()})


def index_to_bits(index: int, width: int) -> str:
    return format(index, f"0{width}b")


def init_basis(qubit_count: int, bits: str) -> PureState:
    if len(bits) != qubit_count:
        raise ValueError(f"bitstring {bits!r} does not have length {qubit_count}")
    if set(bits) - {"0", "1"}:
        raise ValueError(f"not a bitstring: {bits!r}")
    _check_qubit_count(qubit_count)
    amps = np.zeros(2**qubit_count, dtype=complex)
    amps[int(bits, 2)] = 1.0
    return PureState(qubit_count, amps)


def apply_matrix(state: PureState, matrix: np.ndarray, targets: Sequence[int]) -> PureState:
    """Apply a ``2**k``-dimensional unitary to the listed qubits."""
    n = state.qubit_count
    k = len(targets)
    if any(t < 0 or t >= n for t in targets) or len(set(targets)) != k:
        raise ValueError(f"invalid targets {tuple(targets)} for {n} qubits")
    psi = state.amplitudes.reshape((2,) * n)
    psi = np.moveaxis(psi, list(targets), list(range(k)))
    shape = psi.shape
    psi = (matrix @ psi.reshape(2**k, -1)).reshape(shape)
    psi = np.moveaxis(psi, list(range(k)), list(targets))
    return PureState(n, psi.reshape(-1))


def apply_op(state: PureState, gate: GateOp) -> PureState:
    return apply_matrix(state, gate.matrix(), gate.targets)


def run_circuit(state: PureState, circuit: Circuit) -> PureState:
    if circuit.qubit_count != state.qubit_count:
        raise ValueError(
            f"circuit has {circuit.qubit_count} qubits, state has {state.qubit_count}"
        )
    for g in circuit.ops:
        state = apply_op(state, g)
    return state


def embed(circuit: Circuit, qubit_count: int, offset: int) -> list[GateOp]:
    """Ops of ``circuit`` relocated to qubits ``offset .. offset+n-1`` of a wider register."""
    if offset < 0 or offset + circuit.qubit_count > qubit_count:
        raise ValueError("embedded circuit does not fit the register")
    return [GateOp(g.kind, tuple(t + offset for t in g.targets), g.angle) for g in circuit.ops]


def prepare(circuit: Circuit) -> PureState:
    """Run ``circuit`` on the all-zero basis state."""
    return run_circuit(init_basis(circuit.qubit_count, "0" * circuit.qubit_count), circuit)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.qubit_count
    dim = 2**n
    cols = []
    for j in range(dim):
        cols.append(run_circuit(init_basis(n, index_to_bits(j, n)), circuit).amplitudes)
    return np.column_stack(cols)


def ops_unitary(ops: Sequence[GateOp], qubit_count: int) -> np.ndarray:
    return circuit_unitary(Circuit(qubit_count, list(ops)))


def phase_aligned_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise |a - e^{i phi} b| with phi chosen from the largest entry of b."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    k = int(np.argmax(np.abs(b)))
    bk = b.flat[k]
    if abs(bk) < 1e-15:
        return float(np.max(np.abs(a)))
    phase = a.flat[k] / bk
    if abs(phase) > 1e-15:
        phase /= abs(phase)
    else:
        phase = 1.0
    return float(np.max(np.abs(a - phase * b)))


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    return phase_aligned_deviation(a, b) <= atol


def _check_bits_on_qubits(n: int, qubits: Sequence[int], bits: str) -> None:
    if len(qubits) != len(bits):
        raise ValueError("qubits and bits must have equal length")
    if len(set(qubits)) != len(qubits):
        raise ValueError("qubits must be distinct")
    if any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"qubit index out of range for {n} qubits")
    if set(bits) - {"0", "1"}:
        raise ValueError(f"not a bitstring: {bits!r}")


def outcome_probability(state: PureState, qubits: Sequence[int], bits: str) -> float:
    """Marginal probability of reading ``bits`` on ``qubits``."""
    n = state.qubit_count
    _check_bits_on_qubits(n, qubits, bits)
    p = state.probabilities().reshape((2,) * n)
    index: list = [slice(None)] * n
    for q, b in zip(qubits, bits):
        index[q] = int(b)
    return float(np.clip(p[tuple(index)].sum(), 0.0, 1.0))


def marginal_distribution(state: PureState, qubits: Sequence[int] | None = None) -> dict[str, float]:
    n = state.qubit_count
    qubits = list(range(n)) if qubits is None else list(qubits)
    p = state.probabilities().reshape((2,) * n)
    rest = tuple(i for i in range(n) if i not in qubits)
    p = p.sum(axis=rest) if rest else p
    # remaining axes are in ascending qubit order; reorder to the requested order
    order = sorted(qubits)
    p = np.moveaxis(p, [order.index(q) for q in qubits], list(range(len(qubits))))
    flat = p.reshape(-1)
    width = len(qubits)
    return {index_to_bits(i, width): float(v) for i, v in enumerate(flat)}


def sample_shots(
    state: PureState,
    shots: int,
    rng: np.random.Generator,
    qubits: Sequence[int] | None = None,
) -> ShotHistogram:
    if shots <= 0:
        raise ValueError("shots must be > 0")
    dist = marginal_distribution(state, qubits)
    keys = list(dist)
    probs = np.array([dist[k] for k in keys])
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    draws = rng.multinomial(shots, probs)
    counts = {k: int(c) for k, c in zip(keys, draws) if c > 0}
    return ShotHistogram(shots, counts)


def overlap_sq(a: PureState, b: PureState) -> float:
    if a.qubit_count != b.qubit_count:
        raise ValueError("states have different qubit counts")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def toffoli_ops(c1: int, c2: int, t: int) -> list[GateOp]:
    """Standard 15-gate Clifford+T Toffoli network (7 T-type gates)."""
    return [
        op("H", t),
        op("CNOT", c2, t),
        op("Tdg", t),
        op("CNOT", c1, t),
        op("T", t),
        op("CNOT", c2, t),
        op("Tdg", t),
        op("CNOT", c1, t),
        op("T", c2),
        op("T", t),
        op("H", t),
        op("CNOT", c1, c2),
        op("T", c1),
        op("Tdg", c2),
        op("CNOT", c1, c2),
    ]


def decompose(gate: GateOp) -> list[GateOp]:
    """Rewrite TOFFOLI or CSWAP over {H, S, Sdg, T, Tdg, CNOT}."""
    if gate.kind == "TOFFOLI":
        return toffoli_ops(*gate.targets)
    if gate.kind == "CSWAP":
        c, a, b = gate.targets
        return [op("CNOT", b, a), *toffoli_ops(c, a, b), op("CNOT", b, a)]
    raise ValueError(f"decompose supports TOFFOLI and CSWAP, not {gate.kind}")


def decompose_circuit(circuit: Circuit) -> Circuit:
    out = Circuit(circuit.qubit_count)
    for g in circuit.ops:
        out.extend(decompose(g) if g.kind in ("TOFFOLI", "CSWAP") else [g])
    return out


def apply_bitflip_noise(
    histogram: ShotHistogram, p: float, rng: np.random.Generator
) -> ShotHistogram:
    """Flip each measured bit of each shot independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {p}")
    if p == 0.0:
        return ShotHistogram(histogram.shots, dict(histogram.counts))
    keys = sorted(histogram.counts)
    width = len(keys[0])
    rows = np.repeat(
        np.array([[c == "1" for c in k] for k in keys], dtype=bool),
        [histogram.counts[k] for k in keys],
        axis=0,
    )
    flips = rng.random(rows.shape) < p
    noisy = rows ^ flips
    weights = 1 << np.arange(width - 1, -1, -1)
    idx = noisy.astype(np.int64) @ weights
    values, counts = np.unique(idx, return_counts=True)
    out = {index_to_bits(int(v), width): int(c) for v, c in zip(values, counts)}
    return ShotHistogram(histogram.shots, out)
