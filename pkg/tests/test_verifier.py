import math
from dataclasses import replace

import pytest

from aw.errors import AttestationError, BudgetError, EstablishError, ProtocolAbort
from aw.harness.fixtures import BASIC_PLAN
from aw.messages import dumps, loads
from aw.verifier import (
    ScriptedPlan,
    ask,
    end_audit,
    establish,
    leakage_bound,
    leakage_consumed,
    run_plan,
    verify_attestation_bundle,
)

from conftest import keys

QUESTIONS = [q for q, _ in BASIC_PLAN]


def test_leakage_bound_values():
    # 40 questions over four verdicts is the 80-bit session cap.
    assert leakage_bound(40, 4) == 80
    assert leakage_bound(40) == 80
    assert leakage_bound(1, 2) == 1
    assert leakage_bound(52, 4) == 104
    assert leakage_bound(0) == 0
    assert leakage_bound(40, 3) == pytest.approx(40 * math.log2(3))
    with pytest.raises(ValueError):
        leakage_bound(4, 1)
    with pytest.raises(ValueError):
        leakage_bound(-1)


def test_establish_errors(wired):
    w = wired()
    pk, hw, m = w.prover_keys.public_key, w.hw.public_key, w.measurement
    cases = [
        ((keys("verifier", "other"), w.token, hw, pk, m), "token"),
        ((w.verifier_keys, w.token, keys("hardware_root", "x").public_key, pk, m), "quote"),
        ((w.verifier_keys, w.token, hw, pk, b"\x00" * 32), "measurement"),
        ((w.verifier_keys, w.token, hw, w.verifier_keys.public_key, m), "ticket"),
    ]
    for args, layer in cases:
        with pytest.raises(EstablishError) as info:
            establish(*args)
        assert info.value.layer == layer
    with pytest.raises(EstablishError) as info:
        establish(w.verifier_keys, w.token, hw, pk, m, lambda line: dumps({"type": "abort"}))
    assert info.value.layer == "channel"


def test_ask_and_end(wired):
    w = wired()
    v = w.verifier()
    assert ask(v, QUESTIONS[0]) == "true"
    assert ask(v, QUESTIONS[1]) == "false"
    assert v.asked[0].attested and v.question_counter == 2
    rec = end_audit(v)
    assert rec is not None and rec.head == w.prover.chain.head
    assert end_audit(v) is None
    with pytest.raises(ProtocolAbort):
        ask(v, QUESTIONS[0])


def _mutating(field_fn):
    def wrap(inner):
        def link(line):
            reply = loads(inner(line))
            if reply["type"] == "verdict":
                field_fn(reply)
            return dumps(reply)

        return link

    return wrap


def test_tampered_verdict_is_refused(wired):
    def flip(reply):
        reply["verdict"] = "false" if reply["verdict"] == "true" else "true"

    w = wired()
    v = w.verifier(_mutating(flip))
    with pytest.raises(AttestationError):
        ask(v, QUESTIONS[0])
    assert v.asked[-1].attested is False
    # the question still counts against the budget and the leakage tally
    assert v.question_counter == 1 and leakage_consumed(v) == 2


def test_tampered_attestation_layers(wired):
    def retext(reply):
        reply["attestation"]["question_text"] = "something else"

    def drop(reply):
        reply["attestation"] = None

    def extra(reply):
        reply["narrative"] = "private reasoning"

    for fn, match in ((retext, "layer attestation"), (drop, "without"), (extra, "schema")):
        v = wired().verifier(_mutating(fn))
        with pytest.raises(AttestationError, match=match):
            ask(v, QUESTIONS[0])


def test_plan_consumes_two_bits_per_question(wired):
    v = wired().verifier()
    report = run_plan(v, ScriptedPlan(QUESTIONS[:3]))
    assert report.consumed == 6 and report.bound == 80
    assert [q.verdict for q in report.asked] == ["true", "false", "true"]
    assert report.final_record is not None
    assert report.lines()[-1] == "leakage 6/80 bits"
    assert report.lines()[0].startswith("Q1 true pass ")


def test_plan_beyond_k_max_is_truncated(wired):
    w = wired(k_max=2)
    v = w.verifier()
    report = run_plan(v, ScriptedPlan(QUESTIONS[:4]))
    assert len(report.asked) == 2
    assert report.notes == ["budget exhausted after 2 questions"]
    # ready, two verdicts, final: the third question never hit the wire
    assert [loads(x)["type"] for x in v.inbound] == ["ready", "verdict", "verdict", "final"]


def test_spent_budget_sends_nothing(wired):
    v = wired(k_max=1).verifier()
    ask(v, QUESTIONS[0])
    n = len(v.inbound)
    with pytest.raises(BudgetError):
        ask(v, QUESTIONS[1])
    assert len(v.inbound) == n and v.question_counter == 1


def test_empty_plan_still_ends(wired):
    w = wired()
    v = w.verifier()
    report = run_plan(v, ScriptedPlan([]))
    assert report.asked == [] and report.consumed == 0
    assert report.final_record is not None
    assert w.prover.final_record == report.final_record


def test_bundle_checks(wired):
    w = wired()
    v = w.verifier()
    run_plan(v, ScriptedPlan(QUESTIONS[:2]))
    atts = [q.attestation for q in v.asked]
    pk, hw, m = w.prover_keys.public_key, w.hw.public_key, w.measurement
    assert verify_attestation_bundle(atts, pk, hw, m).ok

    r = atts[1].receipt
    moved = replace(atts[1], receipt=replace(r, head=atts[0].receipt.head))
    rep = verify_attestation_bundle([atts[0], moved], pk, hw, m)
    assert [(i.ok, i.layer) for i in rep.items] == [(True, None), (False, "receipt")]

    other = wired(rng_seed=6)
    ov = other.verifier()
    run_plan(ov, ScriptedPlan(QUESTIONS[:1]))
    spliced = atts + [ov.asked[0].attestation]
    rep = verify_attestation_bundle(spliced, pk, hw, m)
    assert [i.layer for i in rep.items] == [None, None, "nonce"]
    rep = verify_attestation_bundle(atts, pk, hw, m, expected_nonce=other.ticket.nonce)
    assert [i.layer for i in rep.items] == ["nonce", "nonce"]
