"""Three-party delegated evaluation: client, semi-trusted evaluator, trusted key server.

The evaluator owns the simulated register and runs the circuit on ciphertext.
At every T or T-dagger it hands the qubit to the trusted server, which holds
the key ledger, strips that qubit's mask, applies the gate on plaintext and
re-masks it. Classical traffic between parties is recorded as :class:`Message`
values so the evaluator's view can be audited for key material.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from . import qotp
from .keyledger import (
    DEFAULT_T_MODE,
    LedgerEntry,
    TGateMode,
    clifford_update,
    t_update,
)
from .qotp import KeySet
from .statevector import (
    CLIFFORD_KINDS,
    T_KINDS,
    Circuit,
    PureState,
    ShotHistogram,
    apply_bitflip_noise,
    apply_op,
    marginal_distribution,
    op,
    prepare,
    sample_shots,
)

CLIENT = "client"
EVALUATOR = "evaluator"
TRUSTED = "trusted"
PARTIES = (CLIENT, EVALUATOR, TRUSTED)

SUPPORTED_EVAL_KINDS = frozenset(CLIFFORD_KINDS | T_KINDS)


class ProtocolError(RuntimeError):
    """Raised when a session is driven out of order."""


@dataclass(frozen=True)
class CiphertextUpload:
    qubit_count: int
    descriptor: str = "register-0"


@dataclass(frozen=True)
class KeyDeposit:
    keys: KeySet


@dataclass(frozen=True)
class TAssistRequest:
    qubit: int
    step: int
    gate: str = "T"


@dataclass(frozen=True)
class TAssistDone:
    step: int


@dataclass(frozen=True)
class EvalResult:
    histogram: ShotHistogram | None
    distribution: dict[str, float] | None = None


@dataclass(frozen=True)
class FinalKeyDelivery:
    keys: KeySet


Payload = Union[
    CiphertextUpload, KeyDeposit, TAssistRequest, TAssistDone, EvalResult, FinalKeyDelivery
]

# payload type -> (legal sender, legal recipient)
ROUTES: dict[type, tuple[str, str]] = {
    CiphertextUpload: (CLIENT, EVALUATOR),
    KeyDeposit: (CLIENT, TRUSTED),
    TAssistRequest: (EVALUATOR, TRUSTED),
    TAssistDone: (TRUSTED, EVALUATOR),
    EvalResult: (EVALUATOR, CLIENT),
    FinalKeyDelivery: (TRUSTED, CLIENT),
}
KEY_PAYLOADS = (KeyDeposit, FinalKeyDelivery)
_BY_NAME = {cls.__name__: cls for cls in ROUTES}


@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    payload: Payload

    @property
    def kind(self) -> str:
        return type(self.payload).__name__

    def to_dict(self) -> dict:
        p = self.payload
        if isinstance(p, (KeyDeposit, FinalKeyDelivery)):
            body = {"keys": p.keys.to_dict()["pairs"]}
        elif isinstance(p, EvalResult):
            body = {
                "histogram": p.histogram.to_dict() if p.histogram is not None else None,
                "distribution": p.distribution,
            }
        else:
            body = dict(p.__dict__)
        return {"sender": self.sender, "recipient": self.recipient, "type": self.kind, "payload": body}

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        ptype = _BY_NAME.get(d["type"])
        if ptype is None:
            raise ValueError(f"unknown message type {d['type']!r}")
        body = d.get("payload", {})
        if ptype in KEY_PAYLOADS:
            payload = ptype(KeySet.of(*body["keys"]))
        elif ptype is EvalResult:
            h = body.get("histogram")
            payload = EvalResult(
                ShotHistogram.from_dict(h) if h is not None else None, body.get("distribution")
            )
        else:
            payload = ptype(**body)
        return cls(d["sender"], d["recipient"], payload)


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)

    def post(self, sender: str, recipient: str, payload: Payload) -> Message:
        msg = Message(sender, recipient, payload)
        self.messages.append(msg)
        return msg

    def kinds(self) -> list[str]:
        return [m.kind for m in self.messages]

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(m.to_dict(), sort_keys=True) + "\n" for m in self.messages)

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        return cls([Message.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()])


class TrustedServer:
    """Holds the key ledger; performs the plaintext-side T gates."""

    def __init__(self, circuit: Circuit, mode: TGateMode, rng: np.random.Generator):
        self._circuit = circuit
        self._mode = mode
        self._rng = rng
        self._keys: KeySet | None = None
        self._next_step = 1
        self.entries: list[LedgerEntry] = []

    def receive_keys(self, msg: Message) -> None:
        if not isinstance(msg.payload, KeyDeposit) or msg.sender != CLIENT:
            raise ProtocolError("trusted server expects a KeyDeposit from the client")
        if len(msg.payload.keys) != self._circuit.qubit_count:
            raise ProtocolError("deposited key length does not match the circuit")
        self._keys = msg.payload.keys

    def _advance_to(self, step: int) -> None:
        # Clifford frame updates for every gate strictly before ``step``
        if self._keys is None:
            raise ProtocolError("no key deposited before evaluation")
        n = self._circuit.qubit_count
        while self._next_step < step:
            gate = self._circuit.ops[self._next_step - 1]
            if gate.kind in T_KINDS:
                raise ProtocolError(f"step {self._next_step} is a T gate with no assist request")
            self._keys = clifford_update(self._keys, gate)
            self.entries.append(LedgerEntry(self._next_step, gate, self._keys, (0,) * n))
            self._next_step += 1

    def assist(self, msg: Message, register: "Register") -> TAssistDone:
        req = msg.payload
        if not isinstance(req, TAssistRequest) or msg.sender != EVALUATOR:
            raise ProtocolError("trusted server expects a TAssistRequest from the evaluator")
        self._advance_to(req.step)
        if self._next_step != req.step:
            raise ProtocolError(f"assist request for step {req.step} arrived out of order")
        gate = self._circuit.ops[req.step - 1]
        if gate.kind not in T_KINDS or gate.targets != (req.qubit,) or gate.kind != req.gate:
            raise ProtocolError(f"step {req.step} is not {req.gate} on qubit {req.qubit}")
        q = req.qubit
        before = self._keys[q]
        new_keys, s_bit = t_update(self._keys, q, self._mode, self._rng)
        if self._mode is TGateMode.ALGEBRAIC:
            # evaluator already applied the gate to the ciphertext
            if s_bit:
                register.apply(op("S" if gate.kind == "T" else "Sdg", q))
        else:
            register.apply_mask(q, before)
            register.apply(op(gate.kind, q))
            register.apply_mask(q, new_keys[q])
        self._keys = new_keys
        n = self._circuit.qubit_count
        flags = tuple(s_bit if i == q else 0 for i in range(n))
        self.entries.append(LedgerEntry(req.step, gate, self._keys, flags))
        self._next_step += 1
        return TAssistDone(req.step)

    def final_keys(self) -> KeySet:
        self._advance_to(len(self._circuit.ops) + 1)
        assert self._keys is not None
        return self._keys


class Register:
    """The shared simulated register (the quantum channel between servers)."""

    def __init__(self, state: PureState):
        self.state = state

    def apply(self, gate) -> None:
        self.state = apply_op(self.state, gate)

    def apply_mask(self, qubit: int, pair: qotp.KeyBitPair) -> None:
        if pair.b:
            self.apply(op("Z", qubit))
        if pair.a:
            self.apply(op("X", qubit))


@dataclass
class SessionResult:
    decrypted: ShotHistogram | None
    transcript: Transcript
    ciphertext: ShotHistogram | None
    final_keys: KeySet
    ledger: list[LedgerEntry]
    ciphertext_state: PureState
    ciphertext_distribution: dict[str, float]
    decrypted_distribution: dict[str, float]


def _validate_eval_circuit(circuit: Circuit) -> None:
    for g in circuit.ops:
        if g.kind not in SUPPORTED_EVAL_KINDS:
            raise ValueError(
                f"{g.kind} is not supported by the evaluator; decompose it to Clifford+T first"
            )


def run_delegated(
    plaintext_prep: Circuit,
    eval_circuit: Circuit,
    initial_keys: KeySet,
    shots: int | None,
    mode: TGateMode | str = DEFAULT_T_MODE,
    rng: np.random.Generator | None = None,
    noise_p: float = 0.0,
) -> SessionResult:
    """Run one delegated session.

    ``shots=None`` skips sampling; the exact outcome distributions are always
    reported in the result alongside the transcript.
    """
    mode = TGateMode.parse(mode)
    if plaintext_prep.qubit_count != eval_circuit.qubit_count:
        raise ValueError("preparation and evaluation circuits differ in qubit count")
    if len(initial_keys) != eval_circuit.qubit_count:
        raise ValueError("initial key length does not match the circuit")
    if shots is not None and shots <= 0:
        raise ValueError("shots must be > 0")
    _validate_eval_circuit(eval_circuit)
    rng = np.random.default_rng() if rng is None else rng
    trusted_rng, eval_rng = rng.spawn(2)

    transcript = Transcript()
    trusted = TrustedServer(eval_circuit, mode, trusted_rng)

    # client: prepare, encrypt, upload; keys go to the trusted server only
    ciphertext = qotp.encrypt(prepare(plaintext_prep), initial_keys)
    register = Register(ciphertext)
    transcript.post(CLIENT, EVALUATOR, CiphertextUpload(eval_circuit.qubit_count))
    trusted.receive_keys(transcript.post(CLIENT, TRUSTED, KeyDeposit(initial_keys)))

    # evaluator
    for step, gate in enumerate(eval_circuit.ops, start=1):
        if gate.kind in T_KINDS:
            if mode is TGateMode.ALGEBRAIC:
                register.apply(gate)
            req = transcript.post(
                EVALUATOR, TRUSTED, TAssistRequest(gate.targets[0], step, gate.kind)
            )
            done = trusted.assist(req, register)
            transcript.post(TRUSTED, EVALUATOR, done)
        else:
            register.apply(gate)

    final_state = register.state
    cipher_dist = marginal_distribution(final_state)
    cipher_hist = None
    if shots is not None:
        cipher_hist = sample_shots(final_state, shots, eval_rng)
        if noise_p:
            cipher_hist = apply_bitflip_noise(cipher_hist, noise_p, eval_rng)
    transcript.post(
        EVALUATOR,
        CLIENT,
        EvalResult(cipher_hist, None if shots is not None else cipher_dist),
    )
    final_keys = trusted.final_keys()
    transcript.post(TRUSTED, CLIENT, FinalKeyDelivery(final_keys))

    # client: XOR-decrypt the measured outcomes
    decrypted = None if cipher_hist is None else qotp.decrypt_histogram(cipher_hist, final_keys)
    return SessionResult(
        decrypted=decrypted,
        transcript=transcript,
        ciphertext=cipher_hist,
        final_keys=final_keys,
        ledger=trusted.entries,
        ciphertext_state=final_state,
        ciphertext_distribution=cipher_dist,
        decrypted_distribution=qotp.decrypt_distribution(cipher_dist, final_keys),
    )


def evaluator_view(transcript: Transcript) -> list[dict]:
    """Messages the evaluator sends or receives, stripped to visible fields."""
    view = []
    for m in transcript:
        if EVALUATOR not in (m.sender, m.recipient):
            continue
        if isinstance(m.payload, KEY_PAYLOADS):
            raise ProtocolError(f"key-bearing {m.kind} routed through the evaluator")
        view.append(m.to_dict())
    return view


@dataclass
class AuditReport:
    ok: bool
    violations: list[str]


def audit(transcript: Transcript | Iterable[Message]) -> AuditReport:
    msgs = list(transcript)
    violations: list[str] = []

    for i, m in enumerate(msgs):
        route = ROUTES.get(type(m.payload))
        if route is None:
            violations.append(f"#{i}: unknown payload {m.kind}")
            continue
        if m.sender not in PARTIES or m.recipient not in PARTIES:
            violations.append(f"#{i}: unknown party in {m.sender}->{m.recipient}")
        if (m.sender, m.recipient) != route:
            violations.append(
                f"#{i}: sender legality: {m.kind} must go {route[0]}->{route[1]}, "
                f"got {m.sender}->{m.recipient}"
            )

    kinds = [m.kind for m in msgs]
    for name in ("CiphertextUpload", "KeyDeposit", "EvalResult", "FinalKeyDelivery"):
        c = kinds.count(name)
        if c != 1:
            violations.append(f"expected exactly one {name}, found {c}")

    def first(name: str) -> int | None:
        return kinds.index(name) if name in kinds else None

    setup_end = max((first(n) for n in ("CiphertextUpload", "KeyDeposit") if first(n) is not None), default=-1)
    for i, m in enumerate(msgs):
        if m.sender == EVALUATOR and i < setup_end:
            violations.append(f"#{i}: evaluator acted before upload and key deposit")

    result_at = first("EvalResult")
    last_step = 0
    i = 0
    while i < len(msgs):
        p = msgs[i].payload
        if isinstance(p, TAssistRequest):
            if result_at is not None and i > result_at:
                violations.append(f"#{i}: T assist requested after the result was sent")
            if p.step <= last_step:
                violations.append(f"#{i}: assist step {p.step} not increasing")
            last_step = p.step
            nxt = msgs[i + 1].payload if i + 1 < len(msgs) else None
            if not isinstance(nxt, TAssistDone) or nxt.step != p.step:
                violations.append(f"#{i}: assist request for step {p.step} not answered immediately")
            else:
                i += 1
        elif isinstance(p, TAssistDone):
            violations.append(f"#{i}: unsolicited TAssistDone for step {p.step}")
        i += 1

    key_at = first("FinalKeyDelivery")
    if key_at is not None and first("KeyDeposit") is not None and key_at < first("KeyDeposit"):
        violations.append("final key delivered before the key deposit")
    return AuditReport(ok=not violations, violations=violations)
