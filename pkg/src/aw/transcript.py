"""Transcript hash chain shared by the Prover and the Auditor.

``H_0 = H(corpus_digest, ticket)`` and ``H_i = H(H_{i-1}, q_i, a_i)``, where
each entry also carries both parties' signatures over ``H_{i-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .corpus import ToolCall, ToolResult
from .crypto import Digest256, Signature, canonical_decode, canonical_encode, digest, verify
from .errors import ChainDivergence, EncodingError, ParseError


class _Ticket(Protocol):
    prover_public: bytes

    def encode(self) -> bytes: ...


@dataclass(frozen=True)
class ChainEntry:
    index: int
    call: ToolCall
    result: ToolResult
    head_after: Digest256
    prover_head_sig: Signature
    auditor_head_sig: Signature

    def body(self) -> bytes:
        return canonical_encode([("q", self.call.encode()), ("a", self.result.encode())])

    def export_line(self) -> str:
        return " ".join(
            [
                str(self.index),
                self.body().hex(),
                self.head_after.hex(),
                self.prover_head_sig.hex(),
                self.auditor_head_sig.hex(),
            ]
        )

    @classmethod
    def from_line(cls, line: str) -> "ChainEntry":
        parts = line.split(" ")
        if len(parts) != 5:
            raise ParseError("transcript record must have 5 fields")
        try:
            body = dict(canonical_decode(bytes.fromhex(parts[1])))
            if set(body) != {"q", "a"}:
                raise ParseError("transcript body must hold q and a")
            return cls(
                int(parts[0]),
                ToolCall.decode(body["q"]),
                ToolResult.decode(body["a"]),
                Digest256.fromhex(parts[2]),
                Signature.fromhex(parts[3], "prover"),
                Signature.fromhex(parts[4], "auditor"),
            )
        except (ValueError, EncodingError) as exc:
            raise ParseError(f"bad transcript record: {exc}") from exc


def genesis_head(corpus_digest: Digest256, ticket: _Ticket) -> Digest256:
    return digest(canonical_encode([("corpus", bytes(corpus_digest)), ("ticket", ticket.encode())]))


def next_head(prev: Digest256, call: ToolCall, result: ToolResult) -> Digest256:
    return digest(
        canonical_encode([("prev", bytes(prev)), ("q", call.encode()), ("a", result.encode())])
    )


@dataclass(frozen=True)
class ChainState:
    genesis: Digest256
    head: Digest256
    prover_public: bytes
    auditor_public: bytes | None = None
    entries: tuple[ChainEntry, ...] = field(default=(), repr=False)

    @property
    def length(self) -> int:
        return len(self.entries)

    def heads(self) -> list[Digest256]:
        return [self.genesis] + [e.head_after for e in self.entries]


def chain_init(
    corpus_digest: Digest256, ticket: _Ticket, auditor_public: bytes | None = None
) -> ChainState:
    g = genesis_head(corpus_digest, ticket)
    return ChainState(g, g, ticket.prover_public, auditor_public)


def chain_append(
    state: ChainState,
    call: ToolCall,
    result: ToolResult,
    prover_sig: Signature,
    auditor_sig: Signature,
    *,
    verify_signatures: bool = True,
) -> ChainState:
    """Return a new state with one more entry; the old state is untouched."""
    if verify_signatures:
        if not verify(state.prover_public, state.head, prover_sig):
            raise ChainDivergence(detail=f"prover signature not over head {state.length}")
        if state.auditor_public is None or not verify(
            state.auditor_public, state.head, auditor_sig
        ):
            raise ChainDivergence(detail=f"auditor signature not over head {state.length}")
    new_head = next_head(state.head, call, result)
    entry = ChainEntry(state.length + 1, call, result, new_head, prover_sig, auditor_sig)
    return ChainState(
        state.genesis, new_head, state.prover_public, state.auditor_public, state.entries + (entry,)
    )


def heads_consistent(prover_head: bytes, auditor_head: bytes) -> bool:
    return bytes(prover_head) == bytes(auditor_head)


def check_peer_head(
    own_head: Digest256, claimed_head: bytes, sig: Signature, peer_public: bytes
) -> None:
    """Authenticate a peer's head claim, then require it to match ours."""
    if not verify(peer_public, claimed_head, sig):
        raise ChainDivergence("head_signature_invalid")
    if not heads_consistent(claimed_head, own_head):
        raise ChainDivergence("chain_divergence")


@dataclass(frozen=True)
class VerificationReport:
    valid: bool
    head: Digest256
    bad_index: int | None = None
    cause: str | None = None


def chain_verify(
    corpus_digest: Digest256,
    ticket: _Ticket,
    entries: Sequence[ChainEntry],
    claimed_head: bytes,
    prover_pk: bytes,
    auditor_pk: bytes,
) -> VerificationReport:
    head = genesis_head(corpus_digest, ticket)
    for pos, e in enumerate(entries, 1):
        if e.index != pos:
            return VerificationReport(False, head, pos, "index-mismatch")
        if not verify(prover_pk, head, e.prover_head_sig):
            return VerificationReport(False, head, pos, "bad-prover-sig")
        if not verify(auditor_pk, head, e.auditor_head_sig):
            return VerificationReport(False, head, pos, "bad-auditor-sig")
        head = next_head(head, e.call, e.result)
        if head != e.head_after:
            return VerificationReport(False, head, pos, "hash-mismatch")
    if bytes(head) != bytes(claimed_head):
        return VerificationReport(False, head, None, "claimed-head-mismatch")
    return VerificationReport(True, head)


def export_transcript(entries: Iterable[ChainEntry]) -> str:
    return "".join(e.export_line() + "\n" for e in entries)


def import_transcript(text: str) -> list[ChainEntry]:
    return [ChainEntry.from_line(line) for line in text.split("\n") if line]


def ingested_digests(entries: Iterable[ChainEntry]) -> list[Digest256]:
    """File digests committed by successful read_file results, in order."""
    return [
        e.result.file_digest
        for e in entries
        if e.call.kind == "read_file" and e.result.ok and e.result.file_digest is not None
    ]
