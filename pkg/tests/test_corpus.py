import hashlib
import os

import pytest

from aw.corpus import (
    CorpusManifest,
    ToolCall,
    ToolResult,
    build_manifest,
    build_search_index,
    corpus_hash,
    list_files,
    read_file,
    run_tool,
    search_repository,
    tokenize,
)
from aw.errors import ManifestError, ParseError


def _independent_corpus_hash(root):
    """Recompute the corpus digest with hashlib only, straight from the encoding rule."""
    lines = []
    for dirpath, _, names in os.walk(root):
        for n in names:
            p = os.path.join(dirpath, n)
            rel = os.path.relpath(p, root).replace(os.sep, "/")
            data = open(p, "rb").read()
            lines.append((rel.encode(), f"{hashlib.sha256(data).hexdigest()} {len(data)} {rel}".encode()))
    lines.sort()
    enc = b""
    for i, (_, line) in enumerate(lines):
        tag = f"e{i}".encode()
        enc += bytes([len(tag)]) + tag + len(line).to_bytes(8, "big") + line
    return hashlib.sha256(enc).hexdigest()


def test_manifest_matches_independent_hash(basic_corpus):
    m = build_manifest(basic_corpus)
    assert m.corpus_digest.hex() == _independent_corpus_hash(basic_corpus)
    assert m.is_well_formed()
    assert [e.path for e in m.entries] == sorted(e.path for e in m.entries)


def test_empty_manifest_hash(tmp_path):
    m = build_manifest(tmp_path)
    assert m.entries == ()
    assert m.corpus_digest.hex() == hashlib.sha256(b"").hexdigest()


def test_manifest_text_roundtrip(basic_corpus):
    m = build_manifest(basic_corpus)
    back = CorpusManifest.from_text(m.to_text())
    assert back == m
    assert m.to_text().splitlines()[-1] == f"#corpus {m.corpus_digest.hex()}"


def test_manifest_from_text_errors():
    with pytest.raises(ParseError):
        CorpusManifest.from_text("abc 1 x\n")
    with pytest.raises(ParseError):
        CorpusManifest.from_text("00 1 x\n#corpus " + "00" * 32)


def test_manifest_changes_with_content(basic_corpus):
    before = build_manifest(basic_corpus).corpus_digest
    (basic_corpus / "README.md").write_bytes(b"changed")
    assert build_manifest(basic_corpus).corpus_digest != before


def test_manifest_skips_symlinks(basic_corpus):
    os.symlink(basic_corpus / "README.md", basic_corpus / "link.md")
    m = build_manifest(basic_corpus)
    assert "link.md" not in [e.path for e in m.entries]
    assert any("link.md" in w for w in m.warnings)


def test_manifest_missing_root(tmp_path):
    with pytest.raises(ManifestError):
        build_manifest(tmp_path / "nope")


def test_obfuscated_manifest_lookup(basic_corpus):
    m = build_manifest(basic_corpus, obfuscate=True)
    assert all("/" not in e.path and len(e.path) == 64 for e in m.entries)
    entry = m.lookup("auditor/agent.py")
    assert entry is not None
    assert entry.file_digest == read_file(basic_corpus, "auditor/agent.py").file_digest


def test_manifest_reordered_is_not_well_formed(basic_corpus):
    m = build_manifest(basic_corpus)
    shuffled = CorpusManifest(tuple(reversed(m.entries)), m.corpus_digest)
    assert not shuffled.is_well_formed()
    assert corpus_hash(shuffled) != m.corpus_digest


def test_read_file(basic_corpus):
    r = read_file(basic_corpus, "prover/chain.py")
    assert r.ok and r.file_digest.hex() == hashlib.sha256(r.payload).hexdigest()
    assert read_file(basic_corpus, "missing.txt").status == "not_found"
    assert read_file(basic_corpus, "auditor").status == "not_found"
    for bad in ("../etc/passwd", "/etc/passwd", "a/../../x", "x\x00y"):
        assert read_file(basic_corpus, bad).status == "forbidden"


def test_read_refuses_symlink(basic_corpus, tmp_path):
    outside = tmp_path / "outside.txt"
    outside.write_text("secret")
    os.symlink(outside, basic_corpus / "escape.txt")
    assert read_file(basic_corpus, "escape.txt").status == "forbidden"


def test_list_files(basic_corpus):
    root = list_files(basic_corpus, "")
    assert root.paths() == ["README.md", "auditor/", "docs/", "prover/", "tests/"]
    assert list_files(basic_corpus, "prover").paths() == ["chain.py", "server.py"]
    assert list_files(basic_corpus, "nope").status == "not_found"
    assert list_files(basic_corpus, "..").status == "forbidden"


def test_tokenize():
    assert tokenize("Hash-chained transcript, v2 a") == {"hash", "chained", "transcript", "v2"}
    assert tokenize(b"\xff\xfeAB") == {"ab"}


def test_search(basic_corpus):
    idx = build_search_index(basic_corpus)
    assert search_repository(idx, "hashlib").paths() == ["prover/chain.py"]
    assert search_repository(idx, "Socket").paths() == ["prover/server.py"]
    assert search_repository(idx, "prover agent").paths() == [
        "README.md",
        "auditor/__init__.py",
        "auditor/agent.py",
        "tests/test_chain.py",
    ]
    assert search_repository(idx, "zzzz").paths() == []
    assert search_repository(idx, "!").status == "empty_query"


def test_run_tool_dispatch(basic_corpus):
    idx = build_search_index(basic_corpus)
    assert run_tool(basic_corpus, idx, ToolCall("read_file", "README.md", 1)).ok
    assert run_tool(basic_corpus, idx, ToolCall("delete", "README.md", 1)).status == "unknown_tool"


def test_tool_wire_roundtrips():
    call = ToolCall("search_repository", "ünïcode query", 7)
    assert ToolCall.from_wire(call.to_wire()) == call
    assert ToolCall.decode(call.encode()) == call
    res = ToolResult("read_file", b"\x00\x01", None, "ok")
    assert ToolResult.from_wire(res.to_wire()) == res
    assert ToolResult.decode(res.encode()) == res
    with pytest.raises(ParseError):
        ToolResult.decode(call.encode())
