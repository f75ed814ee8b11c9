import pytest

from aw.corpus import ToolCall
from aw.crypto import sign
from aw.errors import LockerError
from aw.messages import FinalRecord, dumps, loads
from aw.prover import ABORTED, COMPLETE, SERVING, EvidenceLocker

from conftest import keys


def _exchange(w, call, head=None, signer=None):
    head = w.prover.chain.head if head is None else head
    signer = signer or w.auditor.keys
    line = dumps(
        {"type": "exchange", "call": call.to_wire(), "head": bytes(head).hex(), "head_sig": sign(signer, head).hex()}
    )
    return loads(w.prover.handle(line))


def test_locker_roundtrip_and_errors():
    locker = EvidenceLocker()
    locker.append("sent", "hello")
    locker.append("received", b"\x00\xff")
    dump = locker.export()
    assert EvidenceLocker.load(dump).records == locker.records
    with pytest.raises(ValueError):
        locker.append("sideways", "x")

    lines = dump.decode().splitlines()
    with pytest.raises(LockerError, match="5 fields"):
        EvidenceLocker.load(b"1 sent x\n")
    with pytest.raises(LockerError, match="contiguity"):
        EvidenceLocker.load((lines[1] + "\n").encode())
    bad_digest = lines[0].split(" ")
    bad_digest[4] = "00"
    with pytest.raises(LockerError, match="digest"):
        EvidenceLocker.load((" ".join(bad_digest) + "\n").encode())
    bad_dir = lines[0].replace(" sent ", " kept ")
    with pytest.raises(LockerError, match="direction"):
        EvidenceLocker.load((bad_dir + "\n").encode())
    with pytest.raises(LockerError):
        EvidenceLocker.load(b"1 sent ts zz 00\n")


def test_serves_and_chains(wired):
    w = wired()
    assert w.prover.status == SERVING
    before = w.prover.chain.head
    reply = _exchange(w, ToolCall("question", "q", 1))
    assert reply["type"] == "reply" and reply["head"] == before.hex()
    reply = _exchange(w, ToolCall("read_file", "README.md", 1))
    assert reply["result"]["status"] == "ok"
    assert w.prover.chain.length == 2


def test_rejects_forged_head_signature(wired):
    w = wired()
    reply = _exchange(w, ToolCall("question", "q", 1), signer=keys("auditor", "mallory"))
    assert reply == {"type": "error", "cause": "head_signature_invalid"}
    assert w.prover.status == ABORTED


def test_rejects_divergent_head(wired):
    w = wired()
    reply = _exchange(w, ToolCall("question", "q", 1), head=b"\x07" * 32)
    assert reply["cause"] == "chain_divergence"


def test_tool_budget_abort(wired):
    w = wired(n_queries=2)
    _exchange(w, ToolCall("question", "q", 1))
    for i in (1, 2):
        assert _exchange(w, ToolCall("list_files", "", i))["type"] == "reply"
    assert _exchange(w, ToolCall("list_files", "", 3)) == {"type": "error", "cause": "budget_exceeded"}


def test_question_budget_abort(wired):
    w = wired(k_max=1)
    _exchange(w, ToolCall("question", "q", 1))
    _exchange(w, ToolCall("verdict", "true", 1))
    assert _exchange(w, ToolCall("question", "q", 2))["cause"] == "budget_exceeded"


def test_verdict_counter_mismatch(wired):
    w = wired()
    _exchange(w, ToolCall("question", "q", 1))
    assert _exchange(w, ToolCall("verdict", "true", 2))["cause"] == "question_counter_mismatch"


def test_verdict_outside_alphabet(wired):
    w = wired()
    _exchange(w, ToolCall("question", "q", 1))
    assert _exchange(w, ToolCall("verdict", "True", 1))["cause"] == "malformed_message"


def test_malformed_and_unexpected(wired):
    w = wired()
    assert loads(w.prover.handle("not a record")) == {"type": "error", "cause": "malformed_message"}
    w = wired()
    assert loads(w.prover.handle(dumps({"type": "gossip"})))["cause"] == "unexpected_message"
    w = wired()
    assert loads(w.prover.handle(dumps({"type": "exchange", "call": {}})))["cause"] == "malformed_message"


def _end(w, head):
    body = FinalRecord.signing_bytes_for(head)
    msg = {"type": "end", "head": bytes(head).hex(), "final_sig": sign(w.auditor.keys, body).hex()}
    return loads(w.prover.handle(dumps(msg)))


def test_finalize_head_mismatch(wired):
    w = wired()
    assert _end(w, b"\x01" * 32) == {"type": "error", "cause": "final_head_mismatch"}


def test_finalize_and_close(wired):
    w = wired()
    rec = FinalRecord.from_wire(_end(w, w.prover.chain.head))
    assert rec.verify(w.prover_keys.public_key, w.auditor.public_key)
    assert w.prover.status == COMPLETE
    assert _exchange(w, ToolCall("question", "q", 1)) == {"type": "error", "cause": "session_closed"}
    assert _end(w, w.prover.chain.head)["cause"] == "session_closed"


def test_locker_records_every_message(wired):
    w = wired()
    n = len(w.prover.locker)
    _exchange(w, ToolCall("question", "q", 1))
    assert len(w.prover.locker) == n + 2
    dirs = [r.direction for r in w.prover.locker.records]
    assert dirs[0] == "sent" and dirs[-2:] == ["received", "sent"]
    EvidenceLocker.load(w.prover.locker_export())
