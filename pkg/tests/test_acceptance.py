"""Acceptance criteria 1-9.

Each test records a one-line PASS/FAIL summary; conftest prints them at the
end of the run, and they are also printed inline when run with ``-s``.
"""

import copy
import random
import time

import pytest

from aw.errors import BudgetError, DecryptError, ParseError
from aw.harness.artifacts import verify_artifacts
from aw.harness.explorer import explore_states
from aw.harness.extraction import oracle_extraction_demo
from aw.harness.fixtures import BASIC_FILES, BASIC_PLAN, write_basic_corpus
from aw.harness.orchestrate import SessionSetup, run_session, write_artifacts
from aw.harness.scenarios import SCENARIOS, run_scenario
from aw.harness.secrecy import scan_for_corpus_bytes, schema_problems
from aw.messages import (
    AuditorToken,
    EnclaveQuote,
    PrivateProof,
    PublicAttestation,
    SessionTicket,
    VerdictReceipt,
    attestation_problem,
    attestation_set_digest,
    loads,
    open_private_proof,
    quote_problem,
    receipt_problem,
    ticket_problem,
    token_problem,
)
from aw.transcript import ChainEntry, chain_verify
from aw.verifier import ask, leakage_bound, leakage_consumed

from conftest import keys, record_criterion

QUESTIONS = [q for q, _ in BASIC_PLAN]
TRUTH = [t for _, t in BASIC_PLAN]


def report(n, ok, detail, elapsed=None):
    timing = f" ({elapsed:.2f}s)" if elapsed is not None else ""
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}{timing}"
    record_criterion(line)
    print(line)
    return ok


# -- 1 -----------------------------------------------------------------------


def test_criterion_1_leakage_bound(basic_corpus):
    t0 = time.perf_counter()
    bound = leakage_bound(40, 4)
    o = run_session(SessionSetup(basic_corpus, [QUESTIONS[0]] * 40, k_max=40, n_queries=50, seed=1))
    consumed = leakage_consumed(o.verifier)
    elapsed = time.perf_counter() - t0
    ok = bound == 80 and consumed == 80 and o.report.consumed == 80 and o.completed and elapsed < 1.0
    assert report(1, ok, f"bound={bound} consumed={consumed} after {len(o.report.asked)} questions", elapsed)


# -- 2 -----------------------------------------------------------------------


def test_criterion_2_budgets(wired):
    t0 = time.perf_counter()
    # Scenario run: a 41-question plan under (40, 50) whose first question wants 51 tool calls.
    r = run_scenario("budget_overflow", seed=0)
    refused = r.checks["tool_call_refused"]
    # Direct run on an open session: 40 answers, then the 41st ask must fail locally.
    v = wired(k_max=40, n_queries=50).verifier()
    for _ in range(40):
        ask(v, QUESTIONS[0])
    before = len(v.inbound)
    with pytest.raises(BudgetError):
        ask(v, QUESTIONS[0])
    no_traffic = len(v.inbound) == before and v.question_counter == 40
    elapsed = time.perf_counter() - t0
    ok = r.passed and refused and no_traffic and elapsed < 5.0
    assert report(2, ok, f"question 41 -> BudgetError without traffic={no_traffic}; tool call 51 refused={refused}", elapsed)


# -- 3 -----------------------------------------------------------------------


def test_criterion_3_extraction_cap():
    t0 = time.perf_counter()
    big = oracle_extraction_demo(256, 40)
    small = oracle_extraction_demo(16, 40)
    elapsed = time.perf_counter() - t0
    ok = big <= 40 and small == 16 and elapsed < 10.0
    assert report(3, ok, f"demo(256,40)={big} demo(16,40)={small}", elapsed)


# -- 4 -----------------------------------------------------------------------

MUTATIONS = 1200
HEX_FIELDS = {
    "nonce",
    "prover_public",
    "signature",
    "measurement",
    "auditor_public",
    "hw_signature",
    "verifier_public",
    "head",
}
INT_FIELDS = {"k_max", "n_queries", "question_count"}
STR_FIELDS = {"timestamp", "address", "verdict", "question_text"}
ARTIFACTS = {
    "ticket": SessionTicket,
    "quote": EnclaveQuote,
    "token": AuditorToken,
    "receipt": VerdictReceipt,
    "attestation": PublicAttestation,
}


def _leaves(obj, path=(), layer=None):
    """Yield (path, owning layer, kind) for every mutable leaf of a wire dict."""
    layer = obj.get("type", layer)
    for k, v in obj.items():
        if isinstance(v, dict):
            yield from _leaves(v, path + (k,), layer)
        elif k in HEX_FIELDS:
            yield path + (k,), layer, "hex"
        elif k in INT_FIELDS:
            yield path + (k,), layer, "int"
        elif k in STR_FIELDS and v:
            yield path + (k,), layer, "str"


def _mutate_leaf(wire, path, kind, rng):
    out = copy.deepcopy(wire)
    node = out
    for k in path[:-1]:
        node = node[k]
    key = path[-1]
    if kind == "hex":
        raw = bytearray(bytes.fromhex(node[key]))
        raw[rng.randrange(len(raw))] ^= rng.randrange(1, 256)
        node[key] = raw.hex()
    elif kind == "int":
        raw = bytearray(node[key].to_bytes(8, "big"))
        raw[rng.randrange(8)] ^= rng.randrange(1, 256)
        node[key] = int.from_bytes(raw, "big")
    else:
        s = node[key]
        i = rng.randrange(len(s))
        c = rng.choice([ch for ch in "abcdefghijklmnopqrstuvwxyz0123456789 ?'" if ch != s[i]])
        node[key] = s[:i] + c + s[i + 1 :]
    return out


def _layer_problem(kind, obj, ppk, hw, meas):
    """The verifier that corresponds to each artifact type, innermost layer first."""
    if kind == "ticket":
        return ticket_problem(obj, ppk)
    if kind == "quote":
        return (ticket_problem(obj.ticket, ppk) if obj.ticket else None) or quote_problem(hw, obj, meas)
    if kind == "token":
        return token_problem(obj, ppk, hw, meas)
    if kind == "receipt":
        return token_problem(obj.token, ppk, hw, meas) or receipt_problem(obj, ppk)
    return attestation_problem(obj, ppk, hw, meas)


def _mutate_transcript_entry(entry, rng):
    parts = entry.export_line().split(" ")
    field = rng.randrange(1, 5)  # body, head_after, prover sig, auditor sig
    raw = bytearray(bytes.fromhex(parts[field]))
    raw[rng.randrange(len(raw))] ^= rng.randrange(1, 256)
    parts[field] = raw.hex()
    return " ".join(parts)


@pytest.fixture(scope="module")
def reference_session(tmp_path_factory):
    root = write_basic_corpus(tmp_path_factory.mktemp("ref") / "corpus")
    o = run_session(SessionSetup(root, QUESTIONS, seed=21))
    assert o.completed
    return o


def test_criterion_4_tamper_evidence(reference_session):
    o = reference_session
    ppk, hw, meas = o.prover.keys.public_key, o.hw_root_public, o.measurement
    apk = bytes(o.token.quote.auditor_public)
    entries = list(o.prover.chain.entries)
    final_head = o.prover.final_record.head
    attestations = [q.attestation for q in o.verifier.asked]
    sources = {
        "ticket": [o.ticket],
        "quote": [o.token.quote],
        "token": [o.token],
        "receipt": [a.receipt for a in attestations],
        "attestation": attestations,
    }
    # Every untouched artifact must verify, or rejection below would mean nothing.
    assert all(_layer_problem(k, a, ppk, hw, meas) is None for k, objs in sources.items() for a in objs)
    assert chain_verify(o.prover.manifest.corpus_digest, o.ticket, entries, final_head, ppk, apk).valid

    rng = random.Random(2024)
    kinds = ["transcript"] + list(ARTIFACTS)
    tally = {k: [0, 0] for k in kinds}  # kind -> [tried, rejected and localized]
    misses = []
    t0 = time.perf_counter()
    for n in range(MUTATIONS):
        kind = kinds[n % len(kinds)]
        tally[kind][0] += 1
        if kind == "transcript":
            i = rng.randrange(len(entries))
            line = _mutate_transcript_entry(entries[i], rng)
            try:
                mutated = ChainEntry.from_line(line)
            except ParseError:
                tally[kind][1] += 1  # rejected while parsing record i + 1
                continue
            trial = entries[:i] + [mutated] + entries[i + 1 :]
            rep = chain_verify(o.prover.manifest.corpus_digest, o.ticket, trial, final_head, ppk, apk)
            if not rep.valid and rep.bad_index == i + 1:
                tally[kind][1] += 1
            else:
                misses.append((kind, i + 1, rep))
            continue
        target = rng.choice(sources[kind])
        wire = target.to_wire()
        path, layer, leaf_kind = rng.choice(list(_leaves(wire)))
        mutated_wire = _mutate_leaf(wire, path, leaf_kind, rng)
        try:
            obj = ARTIFACTS[kind].from_wire(mutated_wire)
        except ParseError:
            misses.append((kind, path, "unparseable after a value mutation"))
            continue
        got = _layer_problem(kind, obj, ppk, hw, meas)
        if got == layer:
            tally[kind][1] += 1
        else:
            misses.append((kind, path, f"expected {layer} got {got}"))
    elapsed = time.perf_counter() - t0
    detected = sum(r for _, r in tally.values())
    per_kind = " ".join(f"{k}={r}/{t}" for k, (t, r) in tally.items())
    ok = detected == MUTATIONS and not misses and elapsed < 60.0
    assert report(4, ok, f"{detected}/{MUTATIONS} rejected and localized [{per_kind}]", elapsed), misses[:5]


# -- 5 -----------------------------------------------------------------------


def test_criterion_5_toctou_and_search_omission():
    t0 = time.perf_counter()
    bad = []
    for seed in range(100):
        for name, cause in (("toctou_mutation", "file_digest_mismatch"), ("hidden_search", "search_omission")):
            r = run_scenario(name, seed)
            if not (r.passed and r.observed.status == "aborted" and r.observed.cause == cause):
                bad.append((name, seed, str(r.observed)))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60.0
    assert report(5, ok, f"200 runs over 100 seeds, {len(bad)} unexpected outcomes", elapsed), bad[:5]


# -- 6 -----------------------------------------------------------------------


def test_criterion_6_injection_committed():
    t0 = time.perf_counter()
    bad = [s for s in range(100) if not run_scenario("injection_marker", s).checks.get("marker_committed")]
    elapsed = time.perf_counter() - t0
    ok = not bad
    assert report(6, ok, f"injected digest recoverable from the signed transcript in {100 - len(bad)}/100 runs", elapsed), bad


# -- 7 -----------------------------------------------------------------------


def test_criterion_7_state_exploration():
    t0 = time.perf_counter()
    full = explore_states(12)
    control = explore_states(12, self_test=True)
    elapsed = time.perf_counter() - t0
    ok = full.ok and len(control.violations) >= 1 and elapsed < 300.0
    detail = f"depth 12: {full.states} states, {len(full.violations)} violations; self-test: {len(control.violations)} violations"
    assert report(7, ok, detail, elapsed), full.text()


# -- 8 -----------------------------------------------------------------------


def test_criterion_8_honest_audit(tmp_path):
    t0 = time.perf_counter()
    root = write_basic_corpus(tmp_path / "corpus")
    o = run_session(SessionSetup(root, QUESTIONS, seed=8))
    verdicts = [q.verdict for q in o.report.asked]
    out = write_artifacts(o, tmp_path / "artifacts")
    prover = o.prover.keys
    rep = verify_artifacts(out, prover)
    proof = PrivateProof.from_wire(loads((out / "private_proof.aw").read_text()))
    binding = attestation_set_digest([q.attestation for q in o.verifier.asked])
    opened = open_private_proof(prover, proof, binding).final_head == o.prover.final_record.head
    refused = []
    for other in (keys("verifier", "w8"), keys("auditor", "w8"), keys("prover", "impostor")):
        try:
            open_private_proof(other, proof, binding)
            refused.append(False)
        except DecryptError:
            refused.append(True)
    elapsed = time.perf_counter() - t0
    ok = o.completed and verdicts == TRUTH and rep.ok and rep.proof_status == "opened" and opened and all(refused) and elapsed < 30.0
    detail = f"verdicts {'match' if verdicts == TRUTH else 'differ from'} ground truth, artifacts {'pass' if rep.ok else 'fail'}, proof opens for prover only={opened and all(refused)}"
    assert report(8, ok, detail, elapsed), rep.text()


# -- 9 -----------------------------------------------------------------------


def test_criterion_9_secrecy_at_interface():
    t0 = time.perf_counter()
    leaks, problems, messages = [], [], 0
    for name in SCENARIOS:
        for seed in range(3):
            r = run_scenario(name, seed)
            inbound = r.outcome.verifier_inbound if r.outcome else []
            own = [q.text for q in r.outcome.report.asked] if r.outcome and r.outcome.report else []
            files = list(r.corpus_files) or list(BASIC_FILES.values())
            messages += len(inbound)
            leaks += [(name, seed, x) for x in scan_for_corpus_bytes(inbound, files, own)]
            problems += [(name, seed, p) for p in schema_problems(inbound)]
    elapsed = time.perf_counter() - t0
    ok = not leaks and not problems and messages > 0
    assert report(9, ok, f"{messages} inbound messages over {len(SCENARIOS)} scenarios: {len(leaks)} leaks, {len(problems)} schema problems", elapsed), (leaks[:3], problems[:3])
