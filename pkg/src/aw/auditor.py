"""The enclave-emulated Auditor.

The Auditor mirrors the Prover's transcript chain, validates every tool
result against the pre-committed manifest, drives a reasoning oracle within
the ticket's budgets and only ever releases one of four lowercase verdict
tokens (plus the signed public attestation) to the Verifier.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .corpus import CorpusManifest, ToolCall, ToolResult, tokenize
from .crypto import (
    Digest256,
    KeyPair,
    Signature,
    canonical_encode,
    digest,
    encode_int,
    keypair_generate,
    sign,
    verify,
)
from .errors import EncodingError, ParseError, ProtocolAbort, SessionClosed
from .messages import (
    VERDICTS,
    AuditLog,
    AuditorToken,
    EnclaveQuote,
    FinalRecord,
    PrivateProof,
    PublicAttestation,
    QuestionRecord,
    SessionTicket,
    VerdictReceipt,
    attestation_set_digest,
    dumps,
    issue_public_attestation,
    issue_quote,
    loads,
    parse_artifact,
    receipt_problem,
    seal_private_proof,
    ticket_problem,
    token_problem,
)
from .oracles import OracleFactory, OracleOutcome, ReasoningOracle, RuleOracle, ToolBudgetExhausted
from .prover import ABORTED, COMPLETE, FINALIZING, HANDSHAKING, SERVING, manifest_signing_bytes
from .transcript import ChainState, chain_append, chain_init, check_peer_head

log = logging.getLogger(__name__)

Link = Callable[[str], str]

DEFAULT_NARRATIVE_CAP = 64 * 1024


class Verdict(str, Enum):
    TRUE = "true"
    FALSE = "false"
    UNSURE = "unsure"
    ERROR = "error"


def filter_output(raw_oracle_verdict: object) -> Verdict:
    """Coerce oracle output to the verdict alphabet; anything else is ``error``."""
    if not isinstance(raw_oracle_verdict, str):
        return Verdict.ERROR
    text = raw_oracle_verdict.strip()
    if text in VERDICTS:
        return Verdict(text)
    return Verdict.ERROR


def code_measurement() -> Digest256:
    """Emulated enclave measurement: a digest of the Auditor's own source files."""
    here = Path(__file__).parent
    names = ["auditor.py", "oracles.py", "corpus.py", "crypto.py", "messages.py", "transcript.py"]
    return digest(
        canonical_encode(
            (f"f{i}", hashlib.sha256((here / n).read_bytes()).digest()) for i, n in enumerate(names)
        )
    )


def question_signing_bytes(nonce: bytes, question_count: int, text: str) -> bytes:
    return canonical_encode(
        [
            ("type", b"question"),
            ("nonce", nonce),
            ("c_q", encode_int(question_count)),
            ("text", text.encode("utf-8")),
        ]
    )


def end_signing_bytes(nonce: bytes, question_count: int) -> bytes:
    return canonical_encode([("type", b"end"), ("nonce", nonce), ("c_q", encode_int(question_count))])


# -- checks shared with the state-space explorer -----------------------------


def validate_tool_result(manifest: CorpusManifest, call: ToolCall, result: ToolResult) -> None:
    """Integrity checks on a received tool result; raises ProtocolAbort."""
    if result.kind != call.kind:
        raise ProtocolAbort("malformed_message", "result kind does not echo the call")
    if call.kind != "read_file" or not result.ok:
        return
    if result.file_digest is None:
        raise ProtocolAbort("content_hash_mismatch", "read result carries no file digest")
    if digest(result.payload) != result.file_digest:
        raise ProtocolAbort("content_hash_mismatch", call.argument)
    entry = manifest.lookup(call.argument)
    if entry is None:
        raise ProtocolAbort("unmanifested_file", call.argument)
    if entry.file_digest != result.file_digest:
        raise ProtocolAbort("file_digest_mismatch", call.argument)


def check_search_omission(
    seen_search_results: dict[str, frozenset[str]], path: str, content: bytes
) -> None:
    """Abort if ``path`` matches an earlier query whose results did not list it."""
    tokens = tokenize(content)
    for query, paths in seen_search_results.items():
        if tokens & tokenize(query) and path not in paths:
            raise ProtocolAbort("search_omission", f"{path} missing from search {query!r}")


def receipt_matches(
    receipt: object,
    head: bytes,
    verdict: str,
    question_count: int,
    token: AuditorToken,
    prover_public: bytes,
) -> bool:
    """A Prover receipt is acceptable only if it signs exactly what the Auditor saw."""
    return (
        isinstance(receipt, VerdictReceipt)
        and receipt_problem(receipt, prover_public) is None
        and bytes(receipt.head) == bytes(head)
        and receipt.verdict == verdict
        and receipt.question_count == question_count
        and receipt.token == token
    )


# -- session ----------------------------------------------------------------


@dataclass
class BudgetState:
    k_max: int
    n_queries: int
    questions_asked: int = 0
    tool_calls_this_question: int = 0
    answered: int = 0
    refused_calls: int = 0

    @property
    def leakage_bits_emitted(self) -> int:
        return 2 * self.answered


@dataclass
class PendingQuestion:
    text: str
    question_count: int
    mcp_calls: int = 0


@dataclass
class VerdictResponse:
    verdict: Verdict
    attestation: PublicAttestation | None
    cause: str | None = None

    def to_wire(self) -> dict:
        return {
            "type": "verdict",
            "verdict": self.verdict.value,
            "attestation": self.attestation.to_wire() if self.attestation else None,
        }


class _SessionTools:
    """Tool handle given to an oracle for one question."""

    def __init__(self, session: "AuditorSession") -> None:
        self._session = session

    @property
    def remaining(self) -> int:
        b = self._session.budgets
        return b.n_queries - b.tool_calls_this_question

    def _call(self, kind: str, argument: str) -> ToolResult:
        return self._session.issue_tool_call(kind, argument)

    def read_file(self, path: str) -> ToolResult:
        return self._call("read_file", path)

    def list_files(self, path: str) -> ToolResult:
        return self._call("list_files", path)

    def search_repository(self, query: str) -> ToolResult:
        return self._call("search_repository", query)


@dataclass
class AuditorSession:
    keys: KeyPair | None
    measurement: Digest256
    hw_keys: KeyPair = field(repr=False)
    address: str = ""
    narrative_cap: int = DEFAULT_NARRATIVE_CAP
    enforce_integrity: bool = True
    oracle_factory: OracleFactory = RuleOracle
    status: str = HANDSHAKING
    abort_cause: str | None = None
    ticket: SessionTicket | None = None
    session_quote: EnclaveQuote | None = None
    manifest: CorpusManifest | None = None
    chain: ChainState | None = None
    budgets: BudgetState | None = None
    token: AuditorToken | None = None
    prover_link: Link | None = None
    seen_search_results: dict[str, frozenset[str]] = field(default_factory=dict)
    pending_question: PendingQuestion | None = None
    records: list[QuestionRecord] = field(default_factory=list)
    attestations: list[PublicAttestation] = field(default_factory=list)
    ingested: list[tuple[str, Digest256]] = field(default_factory=list)
    mcp_counts: list[int] = field(default_factory=list)

    @property
    def public_key(self) -> bytes:
        if self.keys is None:
            raise SessionClosed("ephemeral keys were discarded")
        return self.keys.public_key

    def _abort(self, cause: str, detail: str = "") -> ProtocolAbort:
        self.status = ABORTED
        self.abort_cause = cause
        log.info("auditor abort: %s %s", cause, detail)
        return ProtocolAbort(cause, detail)

    # -- bring-up --

    def receive_ticket(self, ticket: SessionTicket, prover_public: bytes) -> EnclaveQuote:
        if self.status != HANDSHAKING:
            raise self._abort("unexpected_message", "ticket outside handshake")
        if ticket_problem(ticket, prover_public):
            raise self._abort("ticket_invalid")
        self.ticket = ticket
        self.budgets = BudgetState(ticket.k_max, ticket.n_queries)
        self.session_quote = issue_quote(
            self.hw_keys, self.measurement, self.public_key, ticket, self.address
        )
        return self.session_quote

    def receive_manifest(self, line: str) -> ChainState:
        if self.ticket is None or self.status != HANDSHAKING:
            raise self._abort("unexpected_message", "manifest before ticket")
        try:
            msg = loads(line)
            manifest = CorpusManifest.from_text(msg["entries"], bool(msg.get("obfuscated")))
            claimed = Digest256.fromhex(msg["corpus_digest"])
            sig = Signature.fromhex(msg["signature"], "prover")
        except (ParseError, KeyError, TypeError, EncodingError) as exc:
            raise self._abort("manifest_invalid", str(exc)) from None
        if manifest.corpus_digest != claimed or not verify(
            self.ticket.prover_public, manifest_signing_bytes(manifest), sig
        ):
            raise self._abort("manifest_invalid", "signature")
        if not manifest.is_well_formed():
            raise self._abort("manifest_invalid", "entries do not generate the corpus digest")
        self.manifest = manifest
        self.chain = chain_init(manifest.corpus_digest, self.ticket, self.public_key)
        self.status = SERVING
        return self.chain

    def accept_verifier(self, token: AuditorToken) -> None:
        if self.status != SERVING or self.ticket is None:
            raise self._abort("unexpected_message", "token before session is serving")
        if token.quote != self.session_quote or token_problem(
            token, self.ticket.prover_public, self.hw_keys.public_key, self.measurement
        ):
            raise self._abort("token_invalid")
        self.token = token

    def connect(self, prover_link: Link) -> None:
        self.prover_link = prover_link

    # -- chained exchanges with the Prover --

    def _exchange(self, call: ToolCall) -> ToolResult:
        if self.prover_link is None:
            raise self._abort("unexpected_message", "no prover channel")
        head_sig = sign(self.keys, self.chain.head)
        reply_line = self.prover_link(
            dumps(
                {
                    "type": "exchange",
                    "call": call.to_wire(),
                    "head": self.chain.head.hex(),
                    "head_sig": head_sig.hex(),
                }
            )
        )
        try:
            reply = loads(reply_line)
            if reply["type"] == "error":
                raise self._abort(str(reply.get("cause", "unexpected_message")), "reported by prover")
            if reply["type"] != "reply":
                raise self._abort("unexpected_message", reply["type"])
            result = ToolResult.from_wire(reply["result"])
            claimed = bytes.fromhex(reply["head"])
            prover_sig = Signature.fromhex(reply["head_sig"], "prover")
        except (ParseError, KeyError, TypeError, ValueError, EncodingError) as exc:
            raise self._abort("malformed_message", str(exc)) from None
        if self.enforce_integrity:
            try:
                check_peer_head(self.chain.head, claimed, prover_sig, self.ticket.prover_public)
            except ProtocolAbort as exc:
                raise self._abort(exc.cause, "prover head check failed") from None
            try:
                validate_tool_result(self.manifest, call, result)
                if call.kind == "read_file" and result.ok:
                    check_search_omission(self.seen_search_results, call.argument, result.payload)
            except ProtocolAbort as exc:
                raise self._abort(exc.cause, exc.detail) from None
        self.chain = chain_append(
            self.chain,
            call,
            result,
            prover_sig,
            head_sig,
            verify_signatures=self.enforce_integrity,
        )
        return result

    def issue_tool_call(self, kind: str, argument: str) -> ToolResult:
        b = self.budgets
        if self.status != SERVING or self.pending_question is None:
            raise self._abort("unexpected_message", "tool call outside a question")
        if b.tool_calls_this_question >= b.n_queries:
            b.refused_calls += 1
            raise ToolBudgetExhausted(f"n_queries={b.n_queries} reached")
        b.tool_calls_this_question += 1
        self.pending_question.mcp_calls += 1
        call = ToolCall(kind, argument, b.tool_calls_this_question)
        result = self._exchange(call)
        if kind == "search_repository" and result.ok:
            self.seen_search_results[argument] = frozenset(result.paths())
        if kind == "read_file" and result.ok:
            self.ingested.append((argument, result.file_digest))
        return result

    # -- questions --

    def _check_question(self, message: dict) -> tuple[str, int]:
        try:
            text = str(message["text"])
            c_q = int(message["c_q"])
            sig = Signature.fromhex(message["signature"], "verifier")
        except (KeyError, TypeError, ValueError, EncodingError) as exc:
            raise self._abort("malformed_message", str(exc)) from None
        if self.token is None or not verify(
            self.token.verifier_public, question_signing_bytes(self.ticket.nonce, c_q, text), sig
        ):
            raise self._abort("question_signature_invalid")
        return text, c_q

    def begin_question(self, text: str, question_count: int) -> None:
        b = self.budgets
        if self.status != SERVING or self.pending_question is not None:
            raise self._abort("unexpected_message", "question while another is open")
        if question_count != b.questions_asked + 1:
            raise self._abort("question_counter_mismatch")
        b.questions_asked += 1
        b.tool_calls_this_question = 0
        self.pending_question = PendingQuestion(text, question_count)
        self._exchange(ToolCall("question", text, question_count))

    def conclude_question(self, outcome: OracleOutcome) -> VerdictResponse:
        pending = self.pending_question
        verdict = filter_output(outcome.raw_verdict)
        head_before = self.chain.head
        result = self._exchange(ToolCall("verdict", verdict.value, pending.question_count))
        try:
            receipt = parse_artifact(result.payload.decode("utf-8"))
        except (ParseError, UnicodeDecodeError) as exc:
            raise self._abort("malformed_message", f"verdict receipt: {exc}") from None
        if self.enforce_integrity and not receipt_matches(
            receipt,
            head_before,
            verdict.value,
            pending.question_count,
            self.token,
            self.ticket.prover_public,
        ):
            raise self._abort("chain_divergence", "receipt does not match the auditor's view")
        attestation = issue_public_attestation(self.keys, receipt, pending.text)
        narrative = outcome.narrative.encode("utf-8")[: self.narrative_cap].decode("utf-8", "ignore")
        self.records.append(QuestionRecord(pending.text, verdict.value, narrative, outcome.summary))
        self.attestations.append(attestation)
        self.mcp_counts.append(pending.mcp_calls)
        self.budgets.answered += 1
        self.pending_question = None
        return VerdictResponse(verdict, attestation)

    def answer_question(
        self, message: dict, oracle: ReasoningOracle | None = None
    ) -> VerdictResponse:
        """Handle one signed Verifier question end to end."""
        text, c_q = self._check_question(message)
        if c_q > self.budgets.k_max:
            return VerdictResponse(Verdict.ERROR, None, "k_max_exhausted")
        self.begin_question(text, c_q)
        oracle = oracle if oracle is not None else self.oracle_factory()
        try:
            outcome = oracle.run(text, _SessionTools(self))
        except ToolBudgetExhausted:
            outcome = OracleOutcome("error", "oracle could not conclude within the tool budget")
        return self.conclude_question(outcome)

    # -- end of session --

    def finalize(self) -> tuple[AuditLog, PrivateProof, FinalRecord]:
        if self.status in (COMPLETE, FINALIZING):
            raise SessionClosed("auditor session already finalized")
        if self.status != SERVING:
            raise self._abort(self.abort_cause or "unexpected_message")
        self.status = FINALIZING
        if self.pending_question is not None:
            p = self.pending_question
            self.records.append(
                QuestionRecord(p.text, "error", "session ended before a verdict", "ended mid-question")
            )
            self.mcp_counts.append(p.mcp_calls)
            self.pending_question = None
        head = self.chain.head
        body = FinalRecord.signing_bytes_for(head)
        reply_line = self.prover_link(
            dumps(
                {
                    "type": "end",
                    "head": head.hex(),
                    "head_sig": sign(self.keys, head).hex(),
                    "final_sig": sign(self.keys, body).hex(),
                }
            )
        )
        try:
            reply = loads(reply_line)
            if reply["type"] == "error":
                raise self._abort(str(reply.get("cause")), "reported by prover at final handshake")
            record = FinalRecord.from_wire(reply)
        except (ParseError, KeyError) as exc:
            raise self._abort("malformed_message", str(exc)) from None
        if self.enforce_integrity:
            if record.head != head:
                raise self._abort("final_head_mismatch")
            if not record.verify(self.ticket.prover_public, self.public_key):
                raise self._abort("head_signature_invalid", "prover final signature")
        final_log = AuditLog(tuple(self.records), self.chain.entries, head)
        binding = attestation_set_digest(self.attestations)
        proof = seal_private_proof(self.keys, self.ticket.prover_public, final_log, binding)
        self.prover_link(
            dumps(
                {
                    "type": "deliver",
                    "proof": proof.to_wire(),
                    "attestations": [a.to_wire() for a in self.attestations],
                }
            )
        )
        self.status = COMPLETE
        # Ephemeral key material does not outlive the session.
        self.keys = None
        return final_log, proof, record

    # -- Verifier-facing wire entry point --

    def handle_verifier(self, line: str) -> str:
        try:
            message = loads(line)
        except ParseError:
            return dumps({"type": "abort"})
        kind = message["type"]
        try:
            if kind == "token":
                self.accept_verifier(AuditorToken.from_wire(message))
                return dumps({"type": "ready"})
            if kind == "question":
                return dumps(self.answer_question(message).to_wire())
            if kind == "end":
                self._check_end(message)
                _, _, record = self.finalize()
                return dumps({"type": "final", "record": record.to_wire()})
        except (ProtocolAbort, SessionClosed, ParseError):
            return dumps({"type": "abort"})
        return dumps({"type": "abort"})

    def _check_end(self, message: dict) -> None:
        try:
            c_q = int(message["c_q"])
            sig = Signature.fromhex(message["signature"], "verifier")
        except (KeyError, TypeError, ValueError, EncodingError) as exc:
            raise self._abort("malformed_message", str(exc)) from None
        if self.token is None or not verify(
            self.token.verifier_public, end_signing_bytes(self.ticket.nonce, c_q), sig
        ):
            raise self._abort("question_signature_invalid", "end of audit")


def boot(
    measurement: Digest256,
    hw_keys: KeyPair,
    *,
    address: str = "",
    seed: bytes | None = None,
    **options,
) -> tuple[AuditorSession, EnclaveQuote]:
    """Start an Auditor with a fresh ephemeral key and return its boot quote."""
    keys = keypair_generate(seed, "auditor")
    session = AuditorSession(keys, measurement, hw_keys, address, **options)
    quote = issue_quote(hw_keys, measurement, keys.public_key, None, address)
    return session, quote


__all__ = [
    "AuditorSession",
    "BudgetState",
    "Verdict",
    "VerdictResponse",
    "boot",
    "check_search_omission",
    "code_measurement",
    "filter_output",
    "receipt_matches",
    "validate_tool_result",
]
