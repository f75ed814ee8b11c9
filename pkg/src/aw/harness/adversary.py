"""Misbehaving provers, built as wrappers around the honest implementation.

Each factory returns a middleware ``(prover, handler) -> handler`` that sits
on the Auditor-to-Prover channel. The honest ``ProverSession`` underneath
is never modified; the wrappers only touch the disk, the search index or
the bytes on the wire.
"""

from __future__ import annotations

from pathlib import Path

from ..corpus import SearchIndex
from ..crypto import digest
from ..messages import dumps, loads
from ..prover import ProverSession
from ..transport import Handler


def _is_read(message: dict, path: str) -> bool:
    call = message.get("call") or {}
    return message.get("type") == "exchange" and call.get("kind") == "read_file" and call.get("argument") == path


def toctou(path: str, replacement: bytes, after_reads: int = 1):
    """Rewrite ``path`` on disk once it has been served ``after_reads`` times."""

    def middleware(prover: ProverSession, inner: Handler) -> Handler:
        served = [0]

        def handler(line: str) -> str:
            reply = inner(line)
            if _is_read(loads(line), path):
                served[0] += 1
                if served[0] == after_reads:
                    (Path(prover.corpus_root) / path).write_bytes(replacement)
            return reply

        return handler

    return middleware


def forked_history(path: str, clean: bytes):
    """Show the Auditor the committed bytes while recording ``clean`` for itself.

    The manifest commits to the on-disk (injected) version, so the Auditor's
    integrity checks pass; the Prover's own chain, however, records a
    different result and the two heads fork.
    """

    def middleware(prover: ProverSession, inner: Handler) -> Handler:
        def handler(line: str) -> str:
            msg = loads(line)
            if not _is_read(msg, path):
                return inner(line)
            target = Path(prover.corpus_root) / path
            shown = target.read_bytes()
            target.write_bytes(clean)
            try:
                reply = loads(inner(line))
            finally:
                target.write_bytes(shown)
            if reply.get("type") == "reply":
                reply["result"]["payload"] = shown.hex()
                reply["result"]["file_digest"] = digest(shown).hex()
            return dumps(reply)

        return handler

    return middleware


def replay(old_head_sig: str, at_exchange: int = 2):
    """Substitute a historical head signature into the ``at_exchange``-th reply."""

    def middleware(prover: ProverSession, inner: Handler) -> Handler:
        count = [0]

        def handler(line: str) -> str:
            reply_line = inner(line)
            if loads(line).get("type") != "exchange":
                return reply_line
            count[0] += 1
            if count[0] != at_exchange:
                return reply_line
            reply = loads(reply_line)
            reply["head_sig"] = old_head_sig
            return dumps(reply)

        return handler

    return middleware


def harvest_head_sig(old_session: ProverSession) -> str:
    """Pull one Prover head signature out of an old session's evidence locker."""
    for rec in old_session.locker.records:
        if rec.direction != "sent":
            continue
        msg = loads(rec.raw.decode("utf-8"))
        if msg.get("type") == "reply":
            return msg["head_sig"]
    raise ValueError("no reply in the locker")


def hide_from_search(prover: ProverSession, path: str) -> None:
    """Swap the Prover's search index for one that never returns ``path``."""
    prover.index = SearchIndex(
        {tok: frozenset(p for p in paths if p != path) for tok, paths in prover.index.token_map.items()}
    )
