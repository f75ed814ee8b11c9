"""The Verifier: establishes trust in the Auditor, asks signed questions and
checks every attestation before accepting a verdict."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .auditor import end_signing_bytes, question_signing_bytes
from .crypto import KeyPair, sign
from .errors import AttestationError, BudgetError, EstablishError, ParseError, ProtocolAbort
from .messages import (
    VERDICTS,
    AuditorToken,
    FinalRecord,
    PublicAttestation,
    attestation_problem,
    dumps,
    loads,
    ticket_problem,
    token_problem,
)

log = logging.getLogger(__name__)

Link = Callable[[str], str]


def leakage_bound(k_max: int, alphabet_size: int = len(VERDICTS)) -> float:
    """Upper bound in bits on what ``k_max`` answers over the alphabet can reveal."""
    if alphabet_size < 2:
        raise ValueError("alphabet_size must be at least 2")
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    bits = k_max * math.log2(alphabet_size)
    return int(bits) if bits.is_integer() else bits


@dataclass
class AskedQuestion:
    text: str
    verdict: str
    attestation: PublicAttestation | None
    attested: bool


@dataclass
class VerifierSession:
    keys: KeyPair
    token: AuditorToken
    auditor_public: bytes
    prover_public: bytes
    hw_root_public: bytes
    expected_measurement: bytes
    link: Link | None = None
    asked: list[AskedQuestion] = field(default_factory=list)
    question_counter: int = 0
    answered: int = 0
    inbound: list[str] = field(default_factory=list)
    final_record: FinalRecord | None = None
    closed: bool = False

    @property
    def k_max(self) -> int:
        return self.token.quote.ticket.k_max

    @property
    def nonce(self) -> bytes:
        return self.token.quote.ticket.nonce

    def _send(self, line: str) -> dict:
        if self.link is None:
            raise ProtocolAbort("unexpected_message", "no auditor channel")
        reply = self.link(line)
        self.inbound.append(reply)
        try:
            return loads(reply)
        except ParseError as exc:
            raise ProtocolAbort("malformed_message", str(exc)) from None


def leakage_consumed(session: VerifierSession) -> int:
    return 2 * session.answered


def establish(
    keys: KeyPair,
    token: AuditorToken,
    hw_root_public: bytes,
    prover_public: bytes,
    expected_measurement: bytes,
    link: Link | None = None,
) -> VerifierSession:
    """Check the token's nesting chain and, given a link, present it to the Auditor."""
    layer = token_problem(token, prover_public, hw_root_public, expected_measurement)
    if layer:
        raise EstablishError(layer)
    if bytes(token.verifier_public) != bytes(keys.public_key):
        raise EstablishError("token")
    session = VerifierSession(
        keys,
        token,
        bytes(token.quote.auditor_public),
        bytes(prover_public),
        bytes(hw_root_public),
        bytes(expected_measurement),
        link,
    )
    if link is not None:
        reply = session._send(dumps(token.to_wire()))
        if reply.get("type") != "ready":
            raise EstablishError("channel")
    return session


def _check_verdict_message(session: VerifierSession, text: str, msg: dict) -> tuple[str, PublicAttestation]:
    if set(msg) != {"type", "verdict", "attestation"} or msg["verdict"] not in VERDICTS:
        raise AttestationError("verdict message does not match the schema")
    if msg["attestation"] is None:
        raise AttestationError("verdict arrived without an attestation")
    try:
        att = PublicAttestation.from_wire(msg["attestation"])
    except ParseError as exc:
        raise AttestationError(str(exc)) from None
    layer = attestation_problem(
        att, session.prover_public, session.hw_root_public, session.expected_measurement
    )
    if layer:
        raise AttestationError(f"attestation fails at layer {layer}")
    r = att.receipt
    if (
        r.token != session.token
        or r.question_count != session.question_counter
        or r.verdict != msg["verdict"]
        or att.question_text != text
    ):
        raise AttestationError("attestation does not bind this question")
    return msg["verdict"], att


def ask(session: VerifierSession, question_text: str) -> str:
    """Ask one question; return the verdict only once its attestation verifies."""
    if session.closed:
        raise ProtocolAbort("session_closed")
    if session.question_counter >= session.k_max:
        raise BudgetError(f"question budget of {session.k_max} is spent")
    session.question_counter += 1
    c_q = session.question_counter
    sig = sign(session.keys, question_signing_bytes(session.nonce, c_q, question_text))
    msg = session._send(
        dumps({"type": "question", "text": question_text, "c_q": c_q, "signature": sig.hex()})
    )
    if msg.get("type") == "abort":
        session.closed = True
        raise ProtocolAbort("session_closed", "auditor ended the session")
    if msg.get("type") != "verdict":
        raise ProtocolAbort("unexpected_message", str(msg.get("type")))
    session.answered += 1
    try:
        verdict, att = _check_verdict_message(session, question_text, msg)
    except AttestationError:
        session.asked.append(AskedQuestion(question_text, str(msg.get("verdict")), None, False))
        raise
    session.asked.append(AskedQuestion(question_text, verdict, att, True))
    return verdict


def end_audit(session: VerifierSession) -> FinalRecord | None:
    """Send the signed end-of-audit message and check the dual-signed head."""
    if session.closed:
        return None
    session.closed = True
    sig = sign(session.keys, end_signing_bytes(session.nonce, session.question_counter))
    msg = session._send(dumps({"type": "end", "c_q": session.question_counter, "signature": sig.hex()}))
    if msg.get("type") != "final":
        return None
    try:
        record = FinalRecord.from_wire(msg["record"])
    except (ParseError, KeyError, TypeError):
        return None
    if not record.verify(session.prover_public, session.auditor_public):
        return None
    session.final_record = record
    return record


class QuestionPlan(Protocol):
    def next_question(self, verdicts_so_far: Sequence[str]) -> str | None: ...


@dataclass
class ScriptedPlan:
    questions: list[str]

    def next_question(self, verdicts_so_far: Sequence[str]) -> str | None:
        i = len(verdicts_so_far)
        return self.questions[i] if i < len(self.questions) else None


@dataclass
class PlanReport:
    asked: list[AskedQuestion]
    consumed: int
    bound: float
    notes: list[str]
    final_record: FinalRecord | None
    aborted: bool = False

    def lines(self) -> list[str]:
        out = [
            f"Q{i} {q.verdict} {'pass' if q.attested else 'fail'} {q.text}"
            for i, q in enumerate(self.asked, 1)
        ]
        out.extend(f"# {n}" for n in self.notes)
        out.append(f"leakage {self.consumed}/{self.bound} bits")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def run_plan(session: VerifierSession, plan: QuestionPlan) -> PlanReport:
    notes: list[str] = []
    aborted = False
    while True:
        question = plan.next_question([q.verdict for q in session.asked])
        if question is None:
            break
        try:
            ask(session, question)
        except BudgetError:
            notes.append(f"budget exhausted after {session.question_counter} questions")
            break
        except AttestationError as exc:
            notes.append(f"Q{session.question_counter} verdict discarded: {exc}")
        except ProtocolAbort as exc:
            notes.append(f"session aborted during Q{session.question_counter}: {exc.cause}")
            aborted = True
            break
    record = None if aborted else end_audit(session)
    if not aborted and record is None:
        notes.append("final dual-signed head missing or invalid")
    return PlanReport(
        list(session.asked),
        leakage_consumed(session),
        leakage_bound(session.k_max),
        notes,
        record,
        aborted,
    )


@dataclass(frozen=True)
class BundleItem:
    index: int
    ok: bool
    layer: str | None


@dataclass(frozen=True)
class BundleReport:
    items: tuple[BundleItem, ...]

    @property
    def ok(self) -> bool:
        return all(i.ok for i in self.items)


def verify_attestation_bundle(
    bundle: Sequence[PublicAttestation],
    prover_public: bytes,
    hw_root_public: bytes,
    expected_measurement: bytes,
    expected_nonce: bytes | None = None,
) -> BundleReport:
    """Re-check received attestations offline; all must belong to one session.

    The session nonce defaults to the one carried by the first item.
    """
    items = []
    for i, att in enumerate(bundle):
        ticket = att.receipt.token.quote.ticket
        if ticket is None:
            items.append(BundleItem(i, False, "quote"))
            continue
        if expected_nonce is None:
            expected_nonce = ticket.nonce
        layer = ticket_problem(ticket, prover_public)
        if layer is None and bytes(ticket.nonce) != bytes(expected_nonce):
            layer = "nonce"
        if layer is None:
            layer = attestation_problem(att, prover_public, hw_root_public, expected_measurement)
        items.append(BundleItem(i, layer is None, layer))
    return BundleReport(tuple(items))
