"""Interface-level secrecy checks on everything the Verifier receives."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from ..errors import ParseError
from ..messages import VERDICTS, PublicAttestation, loads, parse_artifact

WINDOW = 8

_INBOUND_TYPES = {"token", "ready", "verdict", "abort", "final"}


@dataclass(frozen=True)
class Leak:
    message_index: int
    offset: int
    window: bytes


def corpus_windows(files: Iterable[bytes], n: int = WINDOW) -> set[bytes]:
    out: set[bytes] = set()
    for data in files:
        out.update(data[i : i + n] for i in range(len(data) - n + 1))
    return out


def _strip_own_texts(line: str, own_texts: Iterable[str]) -> str:
    # The Verifier's own questions come back inside attestations; they are
    # not corpus disclosures.
    for text in sorted(own_texts, key=len, reverse=True):
        line = line.replace(json.dumps(text, ensure_ascii=False)[1:-1], "")
    return line


def scan_for_corpus_bytes(
    inbound: Iterable[str],
    corpus_files: Iterable[bytes],
    own_texts: Iterable[str] = (),
    n: int = WINDOW,
) -> list[Leak]:
    windows = corpus_windows(corpus_files, n)
    own = list(own_texts)
    leaks = []
    for k, line in enumerate(inbound):
        data = _strip_own_texts(line, own).encode("utf-8")
        for i in range(len(data) - n + 1):
            if data[i : i + n] in windows:
                leaks.append(Leak(k, i, data[i : i + n]))
    return leaks


def schema_problems(inbound: Iterable[str]) -> list[str]:
    """Every Verifier-bound message must be a verdict token, an artifact or a control message."""
    problems = []
    for k, line in enumerate(inbound):
        try:
            msg = loads(line)
        except ParseError as exc:
            problems.append(f"{k}: {exc}")
            continue
        kind = msg["type"]
        if kind not in _INBOUND_TYPES:
            problems.append(f"{k}: unexpected type {kind!r}")
        elif kind == "verdict":
            if set(msg) != {"type", "verdict", "attestation"} or msg["verdict"] not in VERDICTS:
                problems.append(f"{k}: verdict message outside the schema")
            elif msg["attestation"] is not None:
                try:
                    PublicAttestation.from_wire(msg["attestation"])
                except ParseError as exc:
                    problems.append(f"{k}: {exc}")
        elif kind == "token":
            try:
                parse_artifact(line)
            except ParseError as exc:
                problems.append(f"{k}: {exc}")
        elif kind == "final" and set(msg) != {"type", "record"}:
            problems.append(f"{k}: final message outside the schema")
        elif kind in ("ready", "abort") and set(msg) != {"type"}:
            problems.append(f"{k}: control message carries extra fields")
    return problems
