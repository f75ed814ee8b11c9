"""The Prover's corpus: file manifest, corpus hash, and the three tool functions.

Tool functions never raise on bad arguments; they return a ``ToolResult``
whose ``status`` names the problem (``not_found``, ``forbidden``,
``empty_query``).
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .crypto import (
    Digest256,
    canonical_decode,
    canonical_encode,
    decode_int,
    digest,
    encode_int,
)
from .errors import EncodingError, ManifestError, ParseError

log = logging.getLogger(__name__)

TOOL_KINDS = ("read_file", "list_files", "search_repository")
# Synthetic kinds used for question arrivals and verdict exchanges in the chain.
ENTRY_KINDS = TOOL_KINDS + ("question", "verdict")

_TOKEN_RE = re.compile(rb"[0-9A-Za-z]+")


def tokenize(data: bytes | str) -> set[str]:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return {t.decode("ascii").lower() for t in _TOKEN_RE.findall(data) if len(t) >= 2}


@dataclass(frozen=True)
class ToolCall:
    kind: str
    argument: str
    sequence_number: int

    def encode(self) -> bytes:
        return canonical_encode(
            [
                ("type", b"call"),
                ("kind", self.kind.encode()),
                ("arg", self.argument.encode("utf-8")),
                ("seq", encode_int(self.sequence_number)),
            ]
        )

    @classmethod
    def decode(cls, data: bytes) -> "ToolCall":
        try:
            f = dict(canonical_decode(data))
            if f.get("type") != b"call" or set(f) != {"type", "kind", "arg", "seq"}:
                raise ParseError("not a tool call encoding")
            return cls(f["kind"].decode(), f["arg"].decode("utf-8"), decode_int(f["seq"]))
        except (EncodingError, UnicodeDecodeError) as exc:
            raise ParseError(str(exc)) from exc

    def to_wire(self) -> dict:
        return {"kind": self.kind, "argument": self.argument, "seq": self.sequence_number}

    @classmethod
    def from_wire(cls, obj: dict) -> "ToolCall":
        return cls(str(obj["kind"]), str(obj["argument"]), int(obj["seq"]))


@dataclass(frozen=True)
class ToolResult:
    kind: str
    payload: bytes
    file_digest: Digest256 | None = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def paths(self) -> list[str]:
        """Path list carried by list_files / search_repository results."""
        if not self.payload:
            return []
        return self.payload.decode("utf-8").split("\n")

    def encode(self) -> bytes:
        fields = [
            ("type", b"result"),
            ("kind", self.kind.encode()),
            ("payload", self.payload),
        ]
        if self.file_digest is not None:
            fields.append(("digest", bytes(self.file_digest)))
        fields.append(("status", self.status.encode()))
        return canonical_encode(fields)

    @classmethod
    def decode(cls, data: bytes) -> "ToolResult":
        try:
            f = dict(canonical_decode(data))
            if f.get("type") != b"result" or not {"kind", "payload", "status"} <= set(f):
                raise ParseError("not a tool result encoding")
            d = Digest256(f["digest"]) if "digest" in f else None
            return cls(f["kind"].decode(), f["payload"], d, f["status"].decode())
        except (EncodingError, UnicodeDecodeError) as exc:
            raise ParseError(str(exc)) from exc

    def to_wire(self) -> dict:
        return {
            "kind": self.kind,
            "payload": self.payload.hex(),
            "file_digest": self.file_digest.hex() if self.file_digest is not None else None,
            "status": self.status,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ToolResult":
        fd = obj.get("file_digest")
        return cls(
            str(obj["kind"]),
            bytes.fromhex(obj["payload"]),
            Digest256.fromhex(fd) if fd is not None else None,
            str(obj["status"]),
        )


# -- manifest ---------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    file_digest: Digest256
    byte_length: int

    def line(self) -> str:
        return f"{self.file_digest.hex()} {self.byte_length} {self.path}"


def _sort_key(path: str) -> bytes:
    return path.encode("utf-8")


def _entries_hash(entries: tuple[ManifestEntry, ...] | list[ManifestEntry]) -> Digest256:
    return digest(
        canonical_encode((f"e{i}", e.line().encode("utf-8")) for i, e in enumerate(entries))
    )


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    corpus_digest: Digest256
    obfuscated: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def key_for(self, path: str) -> str:
        return digest(path.encode("utf-8")).hex() if self.obfuscated else path

    def lookup(self, path: str) -> ManifestEntry | None:
        key = self.key_for(path)
        for e in self.entries:
            if e.path == key:
                return e
        return None

    def is_well_formed(self) -> bool:
        paths = [_sort_key(e.path) for e in self.entries]
        return paths == sorted(set(paths)) and corpus_hash(self) == self.corpus_digest

    def to_text(self) -> str:
        lines = [e.line() for e in self.entries]
        lines.append(f"#corpus {self.corpus_digest.hex()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, obfuscated: bool = False) -> "CorpusManifest":
        entries = []
        corpus = None
        for n, line in enumerate(text.split("\n"), 1):
            if not line:
                continue
            if line.startswith("#corpus "):
                corpus = Digest256.fromhex(line[8:])
                continue
            parts = line.split(" ", 2)
            if len(parts) != 3:
                raise ParseError(f"manifest line {n} malformed")
            try:
                entries.append(ManifestEntry(parts[2], Digest256.fromhex(parts[0]), int(parts[1])))
            except (EncodingError, ValueError) as exc:
                raise ParseError(f"manifest line {n}: {exc}") from exc
        if corpus is None:
            raise ParseError("manifest has no #corpus line")
        return cls(tuple(entries), corpus, obfuscated)


def corpus_hash(manifest: CorpusManifest) -> Digest256:
    return _entries_hash(manifest.entries)


def _walk_files(root: Path, warnings: list[str]) -> list[str]:
    found = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        base = Path(dirpath)
        for d in list(dirnames):
            if (base / d).is_symlink():
                warnings.append(f"skipped symlink {(base / d).relative_to(root).as_posix()}")
                dirnames.remove(d)
        for name in filenames:
            p = base / name
            rel = p.relative_to(root).as_posix()
            if p.is_symlink():
                warnings.append(f"skipped symlink {rel}")
                continue
            if "\n" in rel:
                warnings.append(f"skipped unrepresentable name {rel!r}")
                continue
            if p.is_file():
                found.append(rel)
    return found


def build_manifest(root: str | os.PathLike, obfuscate: bool = False) -> CorpusManifest:
    """Hash every regular file under ``root``; symlinks are skipped."""
    root = Path(root)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise ManifestError(str(root), "corpus root is not a readable directory")
    warnings: list[str] = []
    entries = []
    for rel in _walk_files(root, warnings):
        try:
            data = (root / rel).read_bytes()
        except OSError as exc:
            raise ManifestError(rel, f"unreadable: {exc.strerror}") from exc
        path = digest(rel.encode("utf-8")).hex() if obfuscate else rel
        entries.append(ManifestEntry(path, digest(data), len(data)))
    entries.sort(key=lambda e: _sort_key(e.path))
    for w in warnings:
        log.warning("manifest: %s", w)
    return CorpusManifest(tuple(entries), _entries_hash(entries), obfuscate, tuple(warnings))


# -- tool functions ---------------------------------------------------------


def _confine(root: Path, path: str) -> Path | None:
    """Resolve ``path`` under ``root``; None if it escapes or crosses a symlink."""
    if path.startswith("/") or "\x00" in path:
        return None
    parts = [p for p in path.split("/") if p not in ("", ".")]
    if ".." in parts:
        return None
    target = root.joinpath(*parts)
    probe = root
    for p in parts:
        probe = probe / p
        if probe.is_symlink():
            return None
    return target


def read_file(root: str | os.PathLike, path: str) -> ToolResult:
    target = _confine(Path(root), path)
    if target is None:
        return ToolResult("read_file", b"", None, "forbidden")
    try:
        data = target.read_bytes()
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError):
        return ToolResult("read_file", b"", None, "not_found")
    except OSError:
        return ToolResult("read_file", b"", None, "not_found")
    return ToolResult("read_file", data, digest(data))


def list_files(root: str | os.PathLike, path: str) -> ToolResult:
    target = _confine(Path(root), path)
    if target is None:
        return ToolResult("list_files", b"", None, "forbidden")
    if not target.is_dir():
        return ToolResult("list_files", b"", None, "not_found")
    names = []
    for child in target.iterdir():
        if child.is_symlink():
            continue
        names.append(child.name + "/" if child.is_dir() else child.name)
    names.sort(key=_sort_key)
    return ToolResult("list_files", "\n".join(names).encode("utf-8"))


@dataclass(frozen=True)
class SearchIndex:
    token_map: dict[str, frozenset[str]]

    def paths_for(self, tokens: set[str]) -> list[str]:
        hits: set[str] = set()
        for t in tokens:
            hits |= self.token_map.get(t, frozenset())
        return sorted(hits, key=_sort_key)


def build_search_index(root: str | os.PathLike) -> SearchIndex:
    root = Path(root)
    acc: dict[str, set[str]] = {}
    for rel in _walk_files(root, []):
        for tok in tokenize((root / rel).read_bytes()):
            acc.setdefault(tok, set()).add(rel)
    return SearchIndex({t: frozenset(p) for t, p in sorted(acc.items())})


def search_repository(index: SearchIndex, query: str) -> ToolResult:
    tokens = tokenize(query)
    if not tokens:
        return ToolResult("search_repository", b"", None, "empty_query")
    return ToolResult("search_repository", "\n".join(index.paths_for(tokens)).encode("utf-8"))


def run_tool(root: str | os.PathLike, index: SearchIndex, call: ToolCall) -> ToolResult:
    if call.kind == "read_file":
        return read_file(root, call.argument)
    if call.kind == "list_files":
        return list_files(root, call.argument)
    if call.kind == "search_repository":
        return search_repository(index, call.argument)
    return ToolResult(call.kind, b"", None, "unknown_tool")
