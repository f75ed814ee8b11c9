"""The Prover: owns the corpus, serves tool calls and countersigns verdicts.

This module is honest-only. Misbehaving provers used by the adversary
scenarios are built in ``aw.harness.adversary`` by wrapping a session.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .corpus import (
    TOOL_KINDS,
    CorpusManifest,
    SearchIndex,
    ToolCall,
    ToolResult,
    build_manifest,
    build_search_index,
    run_tool,
)
from .crypto import Digest256, KeyPair, Signature, canonical_encode, digest, sign, verify
from .errors import (
    LockerError,
    ParameterError,
    ParseError,
    ProtocolAbort,
    SessionClosed,
)
from .messages import (
    AuditorToken,
    EnclaveQuote,
    FinalRecord,
    SessionTicket,
    VerdictReceipt,
    artifact_line,
    dumps,
    issue_ticket,
    issue_token,
    issue_verdict_receipt,
    loads,
    quote_problem,
)
from .transcript import ChainState, chain_append, chain_init, check_peer_head

log = logging.getLogger(__name__)

HANDSHAKING, SERVING, FINALIZING, COMPLETE, ABORTED = (
    "handshaking",
    "serving",
    "finalizing",
    "complete",
    "aborted",
)


# -- evidence locker --------------------------------------------------------


@dataclass(frozen=True)
class LockerRecord:
    index: int
    direction: str
    raw: bytes
    digest: Digest256
    timestamp: str

    def line(self) -> str:
        return f"{self.index} {self.direction} {self.timestamp} {self.digest.hex()} {self.raw.hex()}"


class EvidenceLocker:
    """Append-only archive of every message the Prover sends or receives."""

    def __init__(self) -> None:
        self._records: list[LockerRecord] = []

    @property
    def records(self) -> tuple[LockerRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def append(self, direction: str, raw: bytes | str) -> LockerRecord:
        if direction not in ("sent", "received"):
            raise ValueError(f"bad direction {direction!r}")
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
        rec = LockerRecord(
            len(self._records) + 1,
            direction,
            bytes(raw),
            digest(raw),
            datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
        )
        self._records.append(rec)
        return rec

    def export(self) -> bytes:
        return "".join(r.line() + "\n" for r in self._records).encode("ascii")

    @classmethod
    def load(cls, dump: bytes) -> "EvidenceLocker":
        locker = cls()
        for n, line in enumerate(dump.decode("ascii").split("\n"), 1):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 5:
                raise LockerError(f"record {n}: expected 5 fields")
            idx, direction, ts, hexdigest, hexraw = parts
            try:
                raw = bytes.fromhex(hexraw)
                rec = LockerRecord(int(idx), direction, raw, Digest256.fromhex(hexdigest), ts)
            except ValueError as exc:
                raise LockerError(f"record {n}: {exc}") from exc
            if rec.index != len(locker._records) + 1:
                raise LockerError(f"record {n}: index {rec.index} breaks contiguity")
            if digest(raw) != rec.digest:
                raise LockerError(f"record {rec.index}: digest does not match bytes")
            if direction not in ("sent", "received"):
                raise LockerError(f"record {rec.index}: bad direction")
            locker._records.append(rec)
        return locker


# -- session ----------------------------------------------------------------


def manifest_signing_bytes(manifest: CorpusManifest) -> bytes:
    return canonical_encode(
        [
            ("type", b"manifest"),
            ("corpus", bytes(manifest.corpus_digest)),
            ("entries", manifest.to_text().encode("utf-8")),
            ("obfuscated", b"\x01" if manifest.obfuscated else b"\x00"),
        ]
    )


@dataclass
class ProverSession:
    keys: KeyPair
    corpus_root: Path
    ticket: SessionTicket
    manifest: CorpusManifest
    index: SearchIndex
    chain: ChainState
    locker: EvidenceLocker = field(default_factory=EvidenceLocker)
    peer_auditor_public: bytes | None = None
    status: str = HANDSHAKING
    abort_cause: str | None = None
    session_quote: EnclaveQuote | None = None
    token: AuditorToken | None = None
    hw_root_public: bytes | None = None
    expected_measurement: bytes | None = None
    questions_seen: int = 0
    tool_calls_this_question: int = 0
    question_open: bool = False
    final_record: FinalRecord | None = None
    private_proof_line: str | None = None

    # -- bring-up --

    def _abort(self, cause: str, detail: str = "") -> ProtocolAbort:
        self.status = ABORTED
        self.abort_cause = cause
        log.info("prover abort: %s %s", cause, detail)
        return ProtocolAbort(cause, detail)

    def manifest_message(self) -> str:
        sig = sign(self.keys, manifest_signing_bytes(self.manifest))
        return dumps(
            {
                "type": "manifest",
                "entries": self.manifest.to_text(),
                "corpus_digest": self.manifest.corpus_digest.hex(),
                "obfuscated": self.manifest.obfuscated,
                "signature": sig.hex(),
            }
        )

    def accept_auditor(
        self, boot_quote: EnclaveQuote, expected_measurement: bytes, hw_root_public: bytes
    ) -> bool:
        """Check the boot quote; on success the ticket may be sent to the Auditor."""
        self.locker.append("received", artifact_line(boot_quote))
        if self.status != HANDSHAKING:
            self._abort("unexpected_message", "boot quote outside handshake")
            return False
        layer = quote_problem(hw_root_public, boot_quote, expected_measurement, "boot")
        if layer:
            self._abort("measurement_mismatch" if layer == "measurement" else "quote_invalid")
            return False
        self.peer_auditor_public = bytes(boot_quote.auditor_public)
        self.hw_root_public = bytes(hw_root_public)
        self.expected_measurement = bytes(expected_measurement)
        self.locker.append("sent", artifact_line(self.ticket))
        return True

    def accept_session_quote(self, quote: EnclaveQuote) -> bool:
        self.locker.append("received", artifact_line(quote))
        if self.status != HANDSHAKING or self.peer_auditor_public is None:
            self._abort("unexpected_message", "session quote before boot quote")
            return False
        layer = quote_problem(self.hw_root_public, quote, self.expected_measurement, "session")
        if layer:
            self._abort("measurement_mismatch" if layer == "measurement" else "quote_invalid")
            return False
        if quote.ticket != self.ticket:
            self._abort("ticket_mismatch", "session quote embeds a different ticket")
            return False
        if bytes(quote.auditor_public) != self.peer_auditor_public:
            self._abort("quote_invalid", "session quote names a different auditor key")
            return False
        self.session_quote = quote
        self.chain = chain_init(self.manifest.corpus_digest, self.ticket, self.peer_auditor_public)
        self.status = SERVING
        return True

    def issue_token(self, verifier_public: bytes) -> AuditorToken:
        if self.status != SERVING:
            raise ProtocolAbort("unexpected_message", "token requested before attestation")
        self.token = issue_token(
            self.keys,
            self.session_quote,
            verifier_public,
            self.hw_root_public,
            self.expected_measurement,
        )
        self.locker.append("sent", artifact_line(self.token))
        return self.token

    # -- serving --

    def handle_tool_call(self, message: dict) -> dict:
        """Serve one chained exchange (tool call, question arrival or verdict)."""
        self.locker.append("received", dumps(message))
        if self.status in (COMPLETE, FINALIZING):
            raise SessionClosed("session has ended")
        if self.status != SERVING:
            raise self._abort(self.abort_cause or "unexpected_message")
        try:
            call = ToolCall.from_wire(message["call"])
            claimed = bytes.fromhex(message["head"])
            auditor_sig = Signature.fromhex(message["head_sig"], "auditor")
        except (KeyError, TypeError, ValueError) as exc:
            raise self._abort("malformed_message", str(exc)) from None
        try:
            check_peer_head(self.chain.head, claimed, auditor_sig, self.peer_auditor_public)
        except ProtocolAbort as exc:
            raise self._abort(exc.cause, "auditor head check failed") from None

        if call.kind in TOOL_KINDS:
            self.tool_calls_this_question += 1
            if self.tool_calls_this_question > self.ticket.n_queries:
                raise self._abort("budget_exceeded", f"tool call {self.tool_calls_this_question}")
            result = run_tool(self.corpus_root, self.index, call)
        elif call.kind == "question":
            self.questions_seen += 1
            if self.questions_seen > self.ticket.k_max:
                raise self._abort("budget_exceeded", f"question {self.questions_seen}")
            self.tool_calls_this_question = 0
            self.question_open = True
            result = ToolResult("question", b"")
        elif call.kind == "verdict":
            receipt = self.acknowledge_verdict(self.chain.head, call.argument, call.sequence_number)
            result = ToolResult("verdict", artifact_line(receipt).encode("utf-8"))
        else:
            raise self._abort("malformed_message", f"unknown call kind {call.kind!r}")

        prover_sig = sign(self.keys, self.chain.head)
        reply = {
            "type": "reply",
            "result": result.to_wire(),
            "head": self.chain.head.hex(),
            "head_sig": prover_sig.hex(),
        }
        self.chain = chain_append(self.chain, call, result, prover_sig, auditor_sig)
        self.locker.append("sent", dumps(reply))
        return reply

    def acknowledge_verdict(self, head: Digest256, verdict: str, question_count: int) -> VerdictReceipt:
        if bytes(head) != bytes(self.chain.head):
            raise self._abort("chain_divergence", "verdict names a different head")
        if self.token is None:
            raise self._abort("unexpected_message", "verdict before a verifier token exists")
        if question_count != self.questions_seen or not self.question_open:
            raise self._abort("question_counter_mismatch")
        try:
            receipt = issue_verdict_receipt(self.keys, head, verdict, self.token, question_count)
        except ParameterError as exc:
            raise self._abort("malformed_message", str(exc)) from None
        self.question_open = False
        return receipt

    def finalize(self, end_message: dict) -> FinalRecord:
        self.locker.append("received", dumps(end_message))
        if self.status in (COMPLETE, FINALIZING):
            raise SessionClosed("session already finalized")
        if self.status != SERVING:
            raise self._abort(self.abort_cause or "unexpected_message")
        self.status = FINALIZING
        try:
            claimed = bytes.fromhex(end_message["head"])
            auditor_final = Signature.fromhex(end_message["final_sig"], "auditor")
        except (KeyError, TypeError, ValueError) as exc:
            raise self._abort("malformed_message", str(exc)) from None
        if claimed != bytes(self.chain.head):
            raise self._abort("final_head_mismatch")
        body = FinalRecord.signing_bytes_for(self.chain.head)
        if not verify(self.peer_auditor_public, body, auditor_final):
            raise self._abort("head_signature_invalid", "auditor final signature")
        # An end arriving while a question is open closes it; the Auditor logs it as "error".
        self.question_open = False
        record = FinalRecord(self.chain.head, sign(self.keys, body), auditor_final)
        self.final_record = record
        self.status = COMPLETE
        self.locker.append("sent", artifact_line(record))
        return record

    def receive_private_proof(self, message: dict) -> None:
        self.locker.append("received", dumps(message))
        self.private_proof_line = dumps(message["proof"])

    def handle(self, line: str) -> str:
        """Wire entry point for the Auditor-facing channel."""
        try:
            message = loads(line)
        except ParseError:
            self._abort("malformed_message")
            return dumps({"type": "error", "cause": "malformed_message"})
        kind = message["type"]
        try:
            if kind == "exchange":
                return dumps(self.handle_tool_call(message))
            if kind == "end":
                return artifact_line(self.finalize(message))
            if kind == "deliver":
                self.receive_private_proof(message)
                return dumps({"type": "ack"})
            raise self._abort("unexpected_message", kind)
        except SessionClosed:
            return dumps({"type": "error", "cause": "session_closed"})
        except ProtocolAbort as exc:
            return dumps({"type": "error", "cause": exc.cause})

    def locker_export(self) -> bytes:
        return self.locker.export()


def start_session(
    keys: KeyPair,
    corpus_root: str | os.PathLike,
    k_max: int = 40,
    n_queries: int = 50,
    *,
    rng=None,
    clock=None,
    obfuscate: bool = False,
) -> tuple[ProverSession, SessionTicket, CorpusManifest]:
    root = Path(corpus_root)
    manifest = build_manifest(root, obfuscate=obfuscate)
    kwargs = {"rng": rng}
    if clock is not None:
        kwargs["clock"] = clock
    ticket = issue_ticket(keys, k_max, n_queries, **kwargs)
    session = ProverSession(
        keys=keys,
        corpus_root=root,
        ticket=ticket,
        manifest=manifest,
        index=build_search_index(root),
        chain=chain_init(manifest.corpus_digest, ticket),
    )
    session.locker.append("sent", session.manifest_message())
    return session, ticket, manifest
