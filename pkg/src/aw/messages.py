"""Signed session artifacts and the ``aw/1`` wire format.

Each artifact signs ``canonical_encode`` of a ``type`` tag followed by its
fields in schema order; nested artifacts contribute their full encoding,
signature included. On the wire every record is a single line:
``aw/1 <compact JSON>`` with binary fields in lowercase hex.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Callable, Iterable

from .crypto import (
    Digest256,
    KeyPair,
    SealedBox,
    Signature,
    canonical_encode,
    digest,
    encode_int,
    seal,
    sign,
    unseal,
    verify,
)
from .errors import EncodingError, IssueError, ParameterError, ParseError
from .transcript import ChainEntry

SCHEMA = "aw/1"
VERDICTS = ("true", "false", "unsure", "error")
DEFAULT_K_MAX = 40
DEFAULT_N_QUERIES = 50


def dumps(obj: dict) -> str:
    return f"{SCHEMA} " + json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def loads(line: str) -> dict:
    line = line.rstrip("\n")
    prefix = SCHEMA + " "
    if not line.startswith(prefix):
        raise ParseError("record does not carry the aw/1 schema tag")
    try:
        obj = json.loads(line[len(prefix) :])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}") from exc
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParseError("record has no type")
    return obj


def _hex(b: bytes) -> str:
    return bytes(b).hex()


def _unhex(s: object) -> bytes:
    if not isinstance(s, str):
        raise ParseError("expected hex string")
    try:
        return bytes.fromhex(s)
    except ValueError as exc:
        raise ParseError("bad hex") from exc


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


# -- ticket -----------------------------------------------------------------


@dataclass(frozen=True)
class SessionTicket:
    nonce: bytes
    timestamp: str
    k_max: int
    n_queries: int
    prover_public: bytes
    signature: Signature

    def signing_bytes(self) -> bytes:
        return canonical_encode(
            [
                ("type", b"ticket"),
                ("nonce", self.nonce),
                ("timestamp", self.timestamp.encode("utf-8")),
                ("k_max", encode_int(self.k_max)),
                ("n_queries", encode_int(self.n_queries)),
                ("prover_pk", self.prover_public),
            ]
        )

    def encode(self) -> bytes:
        return canonical_encode([("body", self.signing_bytes()), ("sig", self.signature.value)])

    def to_wire(self) -> dict:
        return {
            "type": "ticket",
            "nonce": _hex(self.nonce),
            "timestamp": self.timestamp,
            "k_max": self.k_max,
            "n_queries": self.n_queries,
            "prover_public": _hex(self.prover_public),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "SessionTicket":
        try:
            return cls(
                _unhex(o["nonce"]),
                str(o["timestamp"]),
                int(o["k_max"]),
                int(o["n_queries"]),
                _unhex(o["prover_public"]),
                Signature(_unhex(o["signature"]), "prover"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad ticket: {exc}") from exc


def issue_ticket(
    prover_keys: KeyPair,
    k_max: int = DEFAULT_K_MAX,
    n_queries: int = DEFAULT_N_QUERIES,
    clock: Callable[[], datetime] = utc_now,
    rng: random.Random | None = None,
) -> SessionTicket:
    if k_max < 1 or n_queries < 1:
        raise ParameterError("k_max and n_queries must be positive")
    nonce = rng.randbytes(32) if rng is not None else os.urandom(32)
    ts = clock().astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    unsigned = SessionTicket(nonce, ts, k_max, n_queries, prover_keys.public_key, Signature(b""))
    return _with_sig(unsigned, sign(prover_keys, unsigned.signing_bytes()))


def ticket_problem(ticket: SessionTicket, prover_public: bytes) -> str | None:
    if (
        len(ticket.nonce) != 32
        or ticket.k_max < 1
        or ticket.n_queries < 1
        or bytes(ticket.prover_public) != bytes(prover_public)
    ):
        return "ticket"
    try:
        body = ticket.signing_bytes()
    except (EncodingError, OverflowError, UnicodeEncodeError):
        return "ticket"
    if not verify(prover_public, body, ticket.signature):
        return "ticket"
    return None


def verify_ticket(ticket: SessionTicket, prover_public: bytes) -> bool:
    return ticket_problem(ticket, prover_public) is None


# -- enclave quote ----------------------------------------------------------


@dataclass(frozen=True)
class EnclaveQuote:
    measurement: Digest256
    auditor_public: bytes
    ticket: SessionTicket | None
    address: str
    hw_signature: Signature

    @property
    def form(self) -> str:
        return "boot" if self.ticket is None else "session"

    def signing_bytes(self) -> bytes:
        fields = [
            ("type", b"quote"),
            ("form", self.form.encode()),
            ("measurement", bytes(self.measurement)),
            ("auditor_pk", self.auditor_public),
        ]
        if self.ticket is not None:
            fields.append(("ticket", self.ticket.encode()))
        fields.append(("address", self.address.encode("utf-8")))
        return canonical_encode(fields)

    def encode(self) -> bytes:
        return canonical_encode([("body", self.signing_bytes()), ("sig", self.hw_signature.value)])

    def to_wire(self) -> dict:
        return {
            "type": "quote",
            "measurement": _hex(self.measurement),
            "auditor_public": _hex(self.auditor_public),
            "ticket": self.ticket.to_wire() if self.ticket is not None else None,
            "address": self.address,
            "hw_signature": self.hw_signature.hex(),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "EnclaveQuote":
        try:
            t = o["ticket"]
            return cls(
                Digest256(_unhex(o["measurement"])),
                _unhex(o["auditor_public"]),
                SessionTicket.from_wire(t) if t is not None else None,
                str(o["address"]),
                Signature(_unhex(o["hw_signature"]), "hardware_root"),
            )
        except (KeyError, TypeError, EncodingError) as exc:
            raise ParseError(f"bad quote: {exc}") from exc


def issue_quote(
    hw_keys: KeyPair,
    measurement: Digest256,
    auditor_public: bytes,
    ticket: SessionTicket | None = None,
    address: str = "",
) -> EnclaveQuote:
    unsigned = EnclaveQuote(measurement, auditor_public, ticket, address, Signature(b""))
    return _with_sig(unsigned, sign(hw_keys, unsigned.signing_bytes()), "hw_signature")


def quote_problem(
    hw_root_public: bytes,
    quote: EnclaveQuote,
    expected_measurement: bytes,
    form: str | None = None,
) -> str | None:
    if form is not None and quote.form != form:
        return "quote"
    try:
        body = quote.signing_bytes()
    except (EncodingError, OverflowError, UnicodeEncodeError):
        return "quote"
    if len(quote.auditor_public) != 32 or not verify(hw_root_public, body, quote.hw_signature):
        return "quote"
    if bytes(quote.measurement) != bytes(expected_measurement):
        return "measurement"
    return None


def verify_quote(
    hw_root_public: bytes,
    quote: EnclaveQuote,
    expected_measurement: bytes,
    form: str | None = None,
) -> bool:
    return quote_problem(hw_root_public, quote, expected_measurement, form) is None


# -- verifier token ---------------------------------------------------------


@dataclass(frozen=True)
class AuditorToken:
    quote: EnclaveQuote
    verifier_public: bytes
    prover_public: bytes
    signature: Signature

    def signing_bytes(self) -> bytes:
        return canonical_encode(
            [
                ("type", b"token"),
                ("quote", self.quote.encode()),
                ("verifier_pk", self.verifier_public),
                ("prover_pk", self.prover_public),
            ]
        )

    def encode(self) -> bytes:
        return canonical_encode([("body", self.signing_bytes()), ("sig", self.signature.value)])

    def to_wire(self) -> dict:
        return {
            "type": "token",
            "quote": self.quote.to_wire(),
            "verifier_public": _hex(self.verifier_public),
            "prover_public": _hex(self.prover_public),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "AuditorToken":
        try:
            return cls(
                EnclaveQuote.from_wire(o["quote"]),
                _unhex(o["verifier_public"]),
                _unhex(o["prover_public"]),
                Signature(_unhex(o["signature"]), "prover"),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad token: {exc}") from exc


def token_problem(
    token: AuditorToken,
    prover_public: bytes,
    hw_root_public: bytes,
    expected_measurement: bytes,
) -> str | None:
    """Name the innermost failing layer, or None if the token is sound."""
    q = token.quote
    if q.ticket is None:
        return "quote"
    layer = ticket_problem(q.ticket, prover_public)
    if layer:
        return layer
    layer = quote_problem(hw_root_public, q, expected_measurement, "session")
    if layer:
        return layer
    if bytes(token.prover_public) != bytes(prover_public):
        return "token"
    try:
        body = token.signing_bytes()
    except EncodingError:
        return "token"
    if not verify(prover_public, body, token.signature):
        return "token"
    return None


def verify_token(
    token: AuditorToken,
    prover_public: bytes,
    hw_root_public: bytes,
    expected_measurement: bytes,
) -> bool:
    return token_problem(token, prover_public, hw_root_public, expected_measurement) is None


def issue_token(
    prover_keys: KeyPair,
    session_quote: EnclaveQuote,
    verifier_public: bytes,
    hw_root_public: bytes,
    expected_measurement: bytes,
) -> AuditorToken:
    if session_quote.ticket is None:
        raise IssueError("token requires a session quote")
    layer = ticket_problem(session_quote.ticket, prover_keys.public_key) or quote_problem(
        hw_root_public, session_quote, expected_measurement, "session"
    )
    if layer:
        raise IssueError(f"nested quote invalid at layer {layer}")
    unsigned = AuditorToken(session_quote, verifier_public, prover_keys.public_key, Signature(b""))
    return _with_sig(unsigned, sign(prover_keys, unsigned.signing_bytes()))


# -- verdict receipt and public attestation ---------------------------------


@dataclass(frozen=True)
class VerdictReceipt:
    head: Digest256
    verdict: str
    token: AuditorToken
    question_count: int
    signature: Signature

    def signing_bytes(self) -> bytes:
        return canonical_encode(
            [
                ("type", b"receipt"),
                ("head", bytes(self.head)),
                ("verdict", self.verdict.encode("utf-8")),
                ("token", self.token.encode()),
                ("c_q", encode_int(self.question_count)),
            ]
        )

    def encode(self) -> bytes:
        return canonical_encode([("body", self.signing_bytes()), ("sig", self.signature.value)])

    def to_wire(self) -> dict:
        return {
            "type": "receipt",
            "head": _hex(self.head),
            "verdict": self.verdict,
            "token": self.token.to_wire(),
            "question_count": self.question_count,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "VerdictReceipt":
        try:
            return cls(
                Digest256(_unhex(o["head"])),
                str(o["verdict"]),
                AuditorToken.from_wire(o["token"]),
                int(o["question_count"]),
                Signature(_unhex(o["signature"]), "prover"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad receipt: {exc}") from exc


def issue_verdict_receipt(
    prover_keys: KeyPair,
    head: Digest256,
    verdict: str,
    token: AuditorToken,
    question_count: int,
) -> VerdictReceipt:
    if verdict not in VERDICTS:
        raise ParameterError(f"verdict {verdict!r} is not one of {VERDICTS}")
    ticket = token.quote.ticket
    if ticket is None or not 1 <= question_count <= ticket.k_max:
        raise ParameterError("question_count outside the ticket's question budget")
    unsigned = VerdictReceipt(head, verdict, token, question_count, Signature(b""))
    return _with_sig(unsigned, sign(prover_keys, unsigned.signing_bytes()))


def receipt_problem(receipt: VerdictReceipt, prover_public: bytes) -> str | None:
    ticket = receipt.token.quote.ticket
    if (
        receipt.verdict not in VERDICTS
        or ticket is None
        or not 1 <= receipt.question_count <= ticket.k_max
    ):
        return "receipt"
    try:
        body = receipt.signing_bytes()
    except (EncodingError, OverflowError):
        return "receipt"
    if not verify(prover_public, body, receipt.signature):
        return "receipt"
    return None


@dataclass(frozen=True)
class PublicAttestation:
    receipt: VerdictReceipt
    question_text: str
    signature: Signature

    def signing_bytes(self) -> bytes:
        return canonical_encode(
            [
                ("type", b"attestation"),
                ("receipt", self.receipt.encode()),
                ("question", self.question_text.encode("utf-8")),
            ]
        )

    def encode(self) -> bytes:
        return canonical_encode([("body", self.signing_bytes()), ("sig", self.signature.value)])

    def to_wire(self) -> dict:
        return {
            "type": "attestation",
            "receipt": self.receipt.to_wire(),
            "question_text": self.question_text,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "PublicAttestation":
        if set(o) != {"type", "receipt", "question_text", "signature"}:
            raise ParseError("attestation carries unexpected fields")
        try:
            return cls(
                VerdictReceipt.from_wire(o["receipt"]),
                str(o["question_text"]),
                Signature(_unhex(o["signature"]), "auditor"),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad attestation: {exc}") from exc


def issue_public_attestation(
    auditor_keys: KeyPair, receipt: VerdictReceipt, question_text: str
) -> PublicAttestation:
    unsigned = PublicAttestation(receipt, question_text, Signature(b""))
    return _with_sig(unsigned, sign(auditor_keys, unsigned.signing_bytes()))


def attestation_problem(
    att: PublicAttestation,
    prover_public: bytes,
    hw_root_public: bytes,
    expected_measurement: bytes,
) -> str | None:
    """Check every nested layer, innermost first, and name the first failure.

    Layers: ticket, quote, measurement, token, receipt, attestation.
    """
    layer = token_problem(att.receipt.token, prover_public, hw_root_public, expected_measurement)
    if layer:
        return layer
    layer = receipt_problem(att.receipt, prover_public)
    if layer:
        return layer
    try:
        body = att.signing_bytes()
    except (EncodingError, UnicodeEncodeError):
        return "attestation"
    if not verify(att.receipt.token.quote.auditor_public, body, att.signature):
        return "attestation"
    return None


def verify_public_attestation(
    att: PublicAttestation,
    prover_public: bytes,
    hw_root_public: bytes,
    expected_measurement: bytes,
) -> bool:
    return attestation_problem(att, prover_public, hw_root_public, expected_measurement) is None


def attestation_set_digest(attestations: Iterable[PublicAttestation]) -> Digest256:
    return digest(canonical_encode((f"g{i}", a.encode()) for i, a in enumerate(attestations)))


# -- final record -----------------------------------------------------------


@dataclass(frozen=True)
class FinalRecord:
    """The end-of-session head, signed by both Prover and Auditor."""

    head: Digest256
    prover_sig: Signature
    auditor_sig: Signature

    @staticmethod
    def signing_bytes_for(head: bytes) -> bytes:
        return canonical_encode([("type", b"final"), ("head", bytes(head))])

    def verify(self, prover_public: bytes, auditor_public: bytes) -> bool:
        body = self.signing_bytes_for(self.head)
        return verify(prover_public, body, self.prover_sig) and verify(
            auditor_public, body, self.auditor_sig
        )

    def to_wire(self) -> dict:
        return {
            "type": "final",
            "head": _hex(self.head),
            "prover_sig": self.prover_sig.hex(),
            "auditor_sig": self.auditor_sig.hex(),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "FinalRecord":
        try:
            return cls(
                Digest256(_unhex(o["head"])),
                Signature(_unhex(o["prover_sig"]), "prover"),
                Signature(_unhex(o["auditor_sig"]), "auditor"),
            )
        except (KeyError, EncodingError) as exc:
            raise ParseError(f"bad final record: {exc}") from exc


# -- audit log and private proof --------------------------------------------


@dataclass(frozen=True)
class QuestionRecord:
    question_text: str
    verdict: str
    narrative: str
    summary: str


@dataclass(frozen=True)
class AuditLog:
    questions: tuple[QuestionRecord, ...]
    entries: tuple[ChainEntry, ...]
    final_head: Digest256

    def to_json(self) -> str:
        return json.dumps(
            {
                "questions": [
                    {
                        "question": q.question_text,
                        "verdict": q.verdict,
                        "narrative": q.narrative,
                        "summary": q.summary,
                    }
                    for q in self.questions
                ],
                "entries": [e.export_line() for e in self.entries],
                "final_head": self.final_head.hex(),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "AuditLog":
        try:
            o = json.loads(text)
            return cls(
                tuple(
                    QuestionRecord(q["question"], q["verdict"], q["narrative"], q["summary"])
                    for q in o["questions"]
                ),
                tuple(ChainEntry.from_line(line) for line in o["entries"]),
                Digest256.fromhex(o["final_head"]),
            )
        except (KeyError, TypeError, ValueError, EncodingError) as exc:
            raise ParseError(f"sealed payload is not an audit log: {exc}") from exc


@dataclass(frozen=True)
class PrivateProof:
    sealed: SealedBox
    binding: Digest256

    def to_wire(self) -> dict:
        return {
            "type": "private_proof",
            "ephemeral_key": _hex(self.sealed.ephemeral_key),
            "nonce": _hex(self.sealed.nonce),
            "ciphertext": _hex(self.sealed.ciphertext),
            "binding": _hex(self.binding),
        }

    @classmethod
    def from_wire(cls, o: dict) -> "PrivateProof":
        try:
            binding = Digest256(_unhex(o["binding"]))
            box = SealedBox(_unhex(o["ephemeral_key"]), _unhex(o["nonce"]), _unhex(o["ciphertext"]), binding)
            return cls(box, binding)
        except (KeyError, EncodingError) as exc:
            raise ParseError(f"bad private proof: {exc}") from exc


def seal_private_proof(
    auditor_keys: KeyPair,
    prover_public: bytes,
    log: AuditLog,
    attestation_set_digest: Digest256,
) -> PrivateProof:
    """Seal the audit log to the Prover, signed inside the box by the Auditor."""
    body = log.to_json()
    payload = json.dumps(
        {
            "log": body,
            "auditor_public": _hex(auditor_keys.public_key),
            "signature": sign(auditor_keys, body.encode("utf-8")).hex(),
        },
        separators=(",", ":"),
    ).encode("utf-8")
    box = seal(prover_public, payload, attestation_set_digest)
    return PrivateProof(box, attestation_set_digest)


def open_private_proof(
    prover_keys: KeyPair,
    proof: PrivateProof,
    attestation_set_digest: Digest256,
    auditor_public: bytes | None = None,
) -> AuditLog:
    raw = unseal(prover_keys, proof.sealed, attestation_set_digest)
    try:
        outer = json.loads(raw)
        body = outer["log"]
        sig = Signature(_unhex(outer["signature"]), "auditor")
        signer = _unhex(outer["auditor_public"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"sealed payload malformed: {exc}") from exc
    if auditor_public is not None and bytes(signer) != bytes(auditor_public):
        raise ParseError("audit log was signed by an unexpected auditor key")
    if not verify(signer, body.encode("utf-8"), sig):
        raise ParseError("audit log signature invalid")
    return AuditLog.from_json(body)


# -- helpers ----------------------------------------------------------------


def _with_sig(obj, sig: Signature, name: str = "signature"):
    return replace(obj, **{name: sig})


ARTIFACT_TYPES = {
    "ticket": SessionTicket,
    "quote": EnclaveQuote,
    "token": AuditorToken,
    "receipt": VerdictReceipt,
    "attestation": PublicAttestation,
    "final": FinalRecord,
    "private_proof": PrivateProof,
}


def parse_artifact(line: str):
    obj = loads(line)
    cls = ARTIFACT_TYPES.get(obj["type"])
    if cls is None:
        raise ParseError(f"unknown artifact type {obj['type']!r}")
    return cls.from_wire(obj)


def artifact_line(artifact) -> str:
    return dumps(artifact.to_wire())

