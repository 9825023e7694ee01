"""Grover search over a marked set and Durr-Hoyer minimum finding.

Oracles are synthesized from a classical value table: for a threshold ``b``
the marked set is ``{a : f(a) < b}`` and the oracle flips the phase of
exactly those basis states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from . import protocol
from .keyledger import DEFAULT_T_MODE, TGateMode
from .qotp import KeySet
from .statevector import (
    Circuit,
    GateOp,
    ShotHistogram,
    decompose_circuit,
    index_to_bits,
    init_basis,
    marginal_distribution,
    op,
    prepare,
    run_circuit,
    sample_shots,
)

FILL_KEYS = ("default", "...")


@dataclass(frozen=True)
class ValueTable:
    index_bits: int
    values: Mapping[str, int]
    max_value: int | None = None

    def __post_init__(self) -> None:
        m = self.index_bits
        if m < 1:
            raise ValueError("index_bits must be >= 1")
        vals = {str(k): int(v) for k, v in self.values.items()}
        expected = {index_to_bits(i, m) for i in range(2**m)}
        if set(vals) != expected:
            missing = sorted(expected - set(vals))
            extra = sorted(set(vals) - expected)
            raise ValueError(f"table is not total: missing {missing}, unexpected {extra}")
        if any(v < 0 for v in vals.values()):
            raise ValueError("table values must be non-negative")
        if self.max_value is not None and any(v > self.max_value for v in vals.values()):
            raise ValueError(f"table value exceeds declared max {self.max_value}")
        object.__setattr__(self, "values", dict(sorted(vals.items())))

    @property
    def size(self) -> int:
        return 2**self.index_bits

    def __call__(self, a: str) -> int:
        return self.values[a]

    def argmin(self) -> tuple[str, int]:
        """Exhaustive minimum; ties go to the lowest index."""
        a = min(self.values, key=lambda k: (self.values[k], k))
        return a, self.values[a]

    @classmethod
    def from_list(cls, values: Iterable[int], max_value: int | None = None) -> "ValueTable":
        vals = list(values)
        m = max(1, math.ceil(math.log2(len(vals)))) if vals else 0
        if len(vals) != 2**m:
            raise ValueError("value list length must be a power of two")
        return cls(m, {index_to_bits(i, m): v for i, v in enumerate(vals)}, max_value)

    def to_dict(self) -> dict:
        d = {"index_bits": self.index_bits, "values": dict(self.values)}
        if self.max_value is not None:
            d["max_value"] = self.max_value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ValueTable":
        m = int(d["index_bits"])
        raw = dict(d["values"])
        fill = None
        for k in FILL_KEYS:
            if k in raw:
                fill = raw.pop(k)
        if "default" in d:
            fill = d["default"]
        vals = {}
        for i in range(2**m):
            key = index_to_bits(i, m)
            if key in raw:
                vals[key] = raw.pop(key)
            elif fill is not None:
                vals[key] = fill
        if raw:
            raise ValueError(f"unexpected table keys {sorted(raw)}")
        return cls(m, vals, d.get("max_value"))

    @classmethod
    def from_json(cls, text: str) -> "ValueTable":
        return cls.from_dict(json.loads(text))


def reference_table() -> ValueTable:
    """Eight-entry example table: f(000)=1, f(001)=3, f(111)=2, every other entry 7."""
    return ValueTable.from_dict(
        {"index_bits": 3, "values": {"000": 1, "001": 3, "111": 2, "default": 7}}
    )


@dataclass
class MinResult:
    a_min: str
    b_min: int
    iterations_used: int
    trace: list[tuple[int, str]] = field(default_factory=list)
    terminated_early: bool = False

    def to_dict(self) -> dict:
        return {
            "a_min": self.a_min,
            "b_min": self.b_min,
            "iterations_used": self.iterations_used,
            "trace": [{"threshold": b, "sampled": a} for b, a in self.trace],
            "terminated_early": self.terminated_early,
        }


def marked_set(table: ValueTable, threshold: int) -> set[str]:
    return {a for a, v in table.values.items() if v < threshold}


def ancilla_count(m: int) -> int:
    return max(0, m - 3)


def mcz_ops(qubits: list[int], ancillas: list[int]) -> list[GateOp]:
    """Phase flip on the all-ones state of ``qubits``.

    Up to three qubits this is Z, CZ or H-Toffoli-H on the last qubit. Larger
    registers compute the AND of the leading qubits into clean ancillas with a
    Toffoli ladder, apply a three-qubit CCZ and uncompute the ladder.
    """
    k = len(qubits)
    if k == 1:
        return [op("Z", qubits[0])]
    if k == 2:
        return [op("CZ", *qubits)]
    if k == 3:
        a, b, t = qubits
        return [op("H", t), op("TOFFOLI", a, b, t), op("H", t)]
    need = k - 3
    if len(ancillas) < need:
        raise ValueError(f"{k}-qubit phase flip needs {need} ancillas")
    anc = ancillas[:need]
    ladder = [op("TOFFOLI", qubits[0], qubits[1], anc[0])]
    for i in range(1, need):
        ladder.append(op("TOFFOLI", anc[i - 1], qubits[i + 1], anc[i]))
    core = mcz_ops([anc[-1], qubits[-2], qubits[-1]], [])
    return ladder + core + ladder[::-1]


def _check_marked(marked: Iterable[str], m: int) -> set[str]:
    marked = set(marked)
    for s in marked:
        if len(s) != m or set(s) - {"0", "1"}:
            raise ValueError(f"marked entry {s!r} is not a {m}-bit string")
    return marked


def oracle_ops(marked: Iterable[str], m: int) -> list[GateOp]:
    marked = _check_marked(marked, m)
    if not marked:
        raise ValueError("empty marked set: the oracle would be the identity")
    qubits = list(range(m))
    ancillas = list(range(m, m + ancilla_count(m)))
    ops: list[GateOp] = []
    for s in sorted(marked):
        flips = [op("X", i) for i, c in enumerate(s) if c == "0"]
        ops += flips + mcz_ops(qubits, ancillas) + flips
    return ops


def build_phase_oracle(marked: Iterable[str], m: int, decomposed: bool = False) -> Circuit:
    c = Circuit(m + ancilla_count(m), oracle_ops(marked, m))
    return decompose_circuit(c) if decomposed else c


def diffusion_ops(m: int) -> list[GateOp]:
    qubits = list(range(m))
    ancillas = list(range(m, m + ancilla_count(m)))
    hs = [op("H", q) for q in qubits]
    xs = [op("X", q) for q in qubits]
    return hs + xs + mcz_ops(qubits, ancillas) + xs + hs


def oracle_diagonal(circuit: Circuit, m: int) -> np.ndarray:
    """Diagonal of the oracle on the data register, ancillas held at |0>.

    Raises if the circuit is not diagonal there.
    """
    n = circuit.qubit_count
    pad = "0" * (n - m)
    diag = np.zeros(2**m, dtype=complex)
    for i in range(2**m):
        bits = index_to_bits(i, m)
        out = run_circuit(init_basis(n, bits + pad), circuit).amplitudes
        j = int(bits + pad, 2)
        diag[i] = out[j]
        rest = np.delete(out, j)
        if np.max(np.abs(rest), initial=0.0) > 1e-10:
            raise ValueError("oracle is not diagonal on the data register")
    return diag


def grover_iteration_ops(marked: Iterable[str], m: int) -> list[GateOp]:
    return oracle_ops(marked, m) + diffusion_ops(m)


def grover_circuits(
    marked: Iterable[str], m: int, iterations: int, decomposed: bool = False
) -> tuple[Circuit, Circuit]:
    """(preparation, evaluation) pair: H on every data qubit, then the iterations."""
    marked = _check_marked(marked, m)
    _check_grover_marked(marked, m)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    n = m + ancilla_count(m)
    prep = Circuit(n, [op("H", q) for q in range(m)])
    body = grover_iteration_ops(marked, m)
    ev = Circuit(n, body * iterations)
    return prep, (decompose_circuit(ev) if decomposed else ev)


def grover_circuit(marked: Iterable[str], m: int, iterations: int, decomposed: bool = False) -> Circuit:
    prep, ev = grover_circuits(marked, m, iterations, decomposed)
    return prep.extend(ev.ops)


def _check_grover_marked(marked: set[str], m: int) -> None:
    if not marked:
        raise ValueError("marked set is empty")
    if len(marked) >= 2**m:
        raise ValueError("every index is marked; Grover search is undefined")


def grover_distribution(marked: Iterable[str], m: int, iterations: int) -> dict[str, float]:
    state = prepare(grover_circuit(marked, m, iterations))
    return marginal_distribution(state, list(range(m)))


def marked_probability(marked: Iterable[str], m: int, iterations: int) -> float:
    marked = set(marked)
    return sum(p for k, p in grover_distribution(marked, m, iterations).items() if k in marked)


def success_formula(N: int, M: int, iterations: int) -> float:
    theta = math.asin(math.sqrt(M / N))
    return math.sin((2 * iterations + 1) * theta) ** 2


def grover_search(
    marked: Iterable[str],
    m: int,
    iterations: int,
    shots: int,
    rng: np.random.Generator,
) -> ShotHistogram:
    state = prepare(grover_circuit(marked, m, iterations))
    return sample_shots(state, shots, rng, list(range(m)))


def optimal_iterations(N: int, M: int) -> int:
    if not 1 <= M < N:
        raise ValueError(f"need 1 <= M < N, got M={M}, N={N}")
    return max(1, math.floor(math.pi / 4 * math.sqrt(N / M)))


def best_iterations(N: int, M: int) -> int:
    """Iteration count in ``[0, optimal_iterations]`` with the highest success probability."""
    upper = optimal_iterations(N, M)
    return max(range(upper + 1), key=lambda j: (success_formula(N, M, j), -j))


@dataclass
class EncryptedGroverResult:
    ciphertext: ShotHistogram
    decrypted: ShotHistogram
    final_keys: KeySet
    session: protocol.SessionResult


def encrypted_grover(
    marked: Iterable[str],
    m: int,
    initial_keys: KeySet,
    shots: int,
    mode: TGateMode | str = DEFAULT_T_MODE,
    rng: np.random.Generator | None = None,
    iterations: int | None = None,
    noise_p: float = 0.0,
) -> EncryptedGroverResult:
    """Grover search evaluated on an encrypted register.

    The client prepares the uniform superposition and encrypts it; the
    evaluator runs oracle and diffusion with Toffolis in Clifford+T form;
    outcomes are XOR-decrypted with the final key from the trusted server.
    """
    marked = _check_marked(marked, m)
    _check_grover_marked(marked, m)
    if len(initial_keys) != m:
        raise ValueError(f"expected {m} key pairs, got {len(initial_keys)}")
    if iterations is None:
        iterations = optimal_iterations(2**m, len(marked))
    prep, ev = grover_circuits(marked, m, iterations, decomposed=True)
    keys = initial_keys.concat(KeySet.zeros(ancilla_count(m))) if ancilla_count(m) else initial_keys
    session = protocol.run_delegated(prep, ev, keys, shots, mode, rng, noise_p)
    data = list(range(m))
    final = KeySet(session.final_keys.pairs[:m])
    return EncryptedGroverResult(
        session.ciphertext.marginal(data),
        session.decrypted.marginal(data),
        final,
        session,
    )


def grover_000_111_circuits() -> tuple[Circuit, Circuit]:
    """Hand-built three-qubit search for {000, 111}, Toffoli in Clifford+T form.

    The oracle Z0 Z1 Z2 CZ01 CZ02 CZ12 equals diag(-1,1,1,1,1,1,1,-1) up to a
    global sign; the diffusion wraps a CCZ (H-Toffoli-H on qubit 2).
    """
    prep = Circuit(3, [op("H", q) for q in range(3)])
    ev = Circuit(3)
    ev.extend([op("Z", 0), op("Z", 1), op("Z", 2), op("CZ", 0, 1), op("CZ", 0, 2), op("CZ", 1, 2)])
    ev.extend(diffusion_ops(3))
    return prep, decompose_circuit(ev)


SearchFn = Callable[[set, int, int, int, np.random.Generator], ShotHistogram]


def _pick_candidate(hist: ShotHistogram, table: ValueTable) -> str:
    return min(hist.support(), key=lambda a: (table(a), a))


def durr_hoyer_min(
    table: ValueTable,
    budget_rounds: int | None = None,
    shots_per_round: int = 8,
    rng: np.random.Generator | None = None,
    start: str | None = None,
    iteration_rule: str = "best",
    search: SearchFn | None = None,
) -> MinResult:
    """Threshold-descent minimum search.

    Each round marks every index below the current threshold and runs Grover
    on that set; the client reads ``shots_per_round`` outcomes, evaluates the
    table on them and keeps the smallest value if it beats the threshold.
    An empty marked set means the threshold is already the minimum.

    ``iteration_rule``: ``"best"`` picks the Grover iteration count with the
    highest success probability for the known marked-set size, ``"optimal"``
    uses :func:`optimal_iterations` as is, ``"random"`` draws it uniformly
    from ``[0, ceil(sqrt(N)))`` for when the marked-set size is unknown.
    """
    rng = np.random.default_rng() if rng is None else rng
    N = table.size
    m = table.index_bits
    if budget_rounds is None:
        budget_rounds = math.ceil(math.sqrt(N))
    if budget_rounds < 1:
        raise ValueError("budget_rounds must be >= 1")
    if shots_per_round < 1:
        raise ValueError("shots_per_round must be >= 1")
    search = grover_search if search is None else search

    a = start if start is not None else index_to_bits(int(rng.integers(N)), m)
    b = table(a)
    trace: list[tuple[int, str]] = []
    rounds = 0
    early = False
    while rounds < budget_rounds:
        marked = marked_set(table, b)
        if not marked:
            early = True
            break
        M = len(marked)
        if iteration_rule == "best":
            j = best_iterations(N, M)
        elif iteration_rule == "optimal":
            j = optimal_iterations(N, M)
        elif iteration_rule == "random":
            j = int(rng.integers(math.ceil(math.sqrt(N))))
        else:
            raise ValueError(f"unknown iteration rule {iteration_rule!r}")
        hist = search(marked, m, j, shots_per_round, rng)
        a_j = _pick_candidate(hist, table)
        trace.append((b, a_j))
        rounds += 1
        if table(a_j) < b:
            a, b = a_j, table(a_j)
    else:
        early = not marked_set(table, b)
    return MinResult(a, b, rounds, trace, early)


def encrypted_search(
    keys_rng: np.random.Generator, mode: TGateMode | str = DEFAULT_T_MODE
) -> SearchFn:
    """Search callable for :func:`durr_hoyer_min` that runs every round encrypted."""

    def run(marked, m, iterations, shots, rng):
        keys = KeySet.of(*keys_rng.integers(0, 2, size=(m, 2)).tolist())
        return encrypted_grover(marked, m, keys, shots, mode, rng, iterations).decrypted

    return run
