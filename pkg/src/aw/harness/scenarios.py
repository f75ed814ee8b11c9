"""The closed set of adversary scenarios and their expected outcomes.

Each scenario builds a fresh seeded corpus in a temporary directory, runs a
session with the named misbehaviour and compares the observed outcome
(status and cause string) with the expectation.
"""

from __future__ import annotations

import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..crypto import digest
from ..oracles import RuleOracle, ScriptedOracle, ScriptStep
from ..transcript import chain_verify, import_transcript, ingested_digests
from . import adversary
from .extraction import run_extraction
from .fixtures import (
    BASIC_FILES,
    BASIC_PLAN,
    INJECTION_CLEAN,
    INJECTION_PATH,
    INJECTION_TEXT,
    corpus_bytes,
    write_basic_corpus,
    write_injection_corpus,
)
from .orchestrate import (
    ABORTED_OUTCOME,
    COMPLETED,
    REJECTED,
    SessionOutcome,
    SessionSetup,
    party_keys,
    run_session,
    write_artifacts,
)

SCENARIOS = (
    "honest",
    "toctou_mutation",
    "forked_history",
    "replay",
    "hidden_search",
    "budget_overflow",
    "injection_marker",
    "oracle_extraction",
)


@dataclass(frozen=True)
class Expected:
    status: str
    cause: str | None = None

    def __str__(self) -> str:
        return self.status if self.cause is None else f"{self.status}({self.cause})"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    fixture: str
    oracle: str
    plan: str
    expected: Expected

    def __post_init__(self) -> None:
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}")


SPECS = {
    s.name: s
    for s in (
        ScenarioSpec("honest", "basic", "rule", "basic", Expected(COMPLETED)),
        ScenarioSpec("toctou_mutation", "basic+filler", "scripted-read", "two-reads", Expected(ABORTED_OUTCOME, "file_digest_mismatch")),
        ScenarioSpec("forked_history", "injection", "scripted-read", "one", Expected(ABORTED_OUTCOME, "chain_divergence")),
        ScenarioSpec("replay", "basic", "rule", "basic", Expected(REJECTED, "head_signature_invalid")),
        ScenarioSpec("hidden_search", "injection", "scripted-search-read", "one", Expected(ABORTED_OUTCOME, "search_omission")),
        ScenarioSpec("budget_overflow", "basic", "scripted-51-then-rule", "k_max+1", Expected(COMPLETED)),
        ScenarioSpec("injection_marker", "injection", "obedient-scripted", "one", Expected(COMPLETED)),
        ScenarioSpec("oracle_extraction", "secret", "permissive-rule", "bitwise", Expected(COMPLETED)),
    )
}


@dataclass
class ScenarioResult:
    name: str
    seed: int
    expected: Expected
    observed: Expected
    checks: dict[str, bool] = field(default_factory=dict)
    outcome: SessionOutcome | None = None
    corpus_files: list[bytes] = field(default_factory=list)
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.observed == self.expected and all(self.checks.values())

    def line(self) -> str:
        extra = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in self.checks.items())
        verdict = "pass" if self.passed else "fail"
        parts = [self.name, f"seed={self.seed}", f"expected={self.expected}", f"observed={self.observed}", extra, verdict]
        return " ".join(p for p in parts if p)


def _per_question(*oracles: Callable[[], object]):
    """Oracle factory that hands out the given oracles in order, then RuleOracle."""
    queue = list(oracles)

    def factory():
        return queue.pop(0)() if queue else RuleOracle()

    return factory


def _observed(outcome: SessionOutcome) -> Expected:
    return Expected(outcome.status, outcome.cause)


def _questions() -> list[str]:
    return [q for q, _ in BASIC_PLAN]


def _honest(root: Path, seed: int, work: Path) -> ScenarioResult:
    write_basic_corpus(root)
    outcome = run_session(SessionSetup(root, _questions(), seed=seed))
    verdicts = [q.verdict for q in outcome.report.asked] if outcome.report else []
    checks = {"ground_truth": verdicts == [v for _, v in BASIC_PLAN]}
    return ScenarioResult("honest", seed, SPECS["honest"].expected, _observed(outcome), checks, outcome)


def _toctou(root: Path, seed: int, work: Path) -> ScenarioResult:
    rng = random.Random(seed)
    write_injection_corpus(root, seed, injected=False)
    target = rng.choice(sorted(BASIC_FILES))
    replacement = BASIC_FILES[target] + f"\n# edited {rng.randrange(1 << 30)}\n".encode()
    read = lambda: ScriptedOracle([ScriptStep("read_file", target)], "unsure")  # noqa: E731
    outcome = run_session(
        SessionSetup(
            root,
            [f"Does the file '{target}' contain the term 'alpha'?"] * 2,
            seed=seed,
            oracle_factory=_per_question(read, read),
            prover_middleware=adversary.toctou(target, replacement),
        )
    )
    return ScenarioResult("toctou_mutation", seed, SPECS["toctou_mutation"].expected, _observed(outcome), {}, outcome, [BASIC_FILES[target], replacement])


def _forked(root: Path, seed: int, work: Path) -> ScenarioResult:
    write_injection_corpus(root, seed)
    oracle = lambda: ScriptedOracle([ScriptStep("read_file", INJECTION_PATH)], "false")  # noqa: E731
    outcome = run_session(
        SessionSetup(
            root,
            ["Does the root directory contain a directory named 'verifier'?"],
            seed=seed,
            oracle_factory=_per_question(oracle),
            prover_middleware=adversary.forked_history(INJECTION_PATH, INJECTION_CLEAN),
        )
    )
    return ScenarioResult("forked_history", seed, SPECS["forked_history"].expected, _observed(outcome), {}, outcome, [INJECTION_CLEAN])


def _replay(root: Path, seed: int, work: Path) -> ScenarioResult:
    write_basic_corpus(root)
    prover_keys = party_keys("prover", seed)
    # An earlier, completed session by the same Prover supplies the signature.
    old = run_session(SessionSetup(root, _questions()[:1], seed=seed + 1_000_000, prover_keys=prover_keys))
    old_sig = adversary.harvest_head_sig(old.prover)
    outcome = run_session(
        SessionSetup(
            root,
            _questions(),
            seed=seed,
            prover_keys=prover_keys,
            prover_middleware=adversary.replay(old_sig, at_exchange=2 + seed % 3),
        )
    )
    checks = {"old_session_completed": old.completed}
    return ScenarioResult("replay", seed, SPECS["replay"].expected, _observed(outcome), checks, outcome)


def _hidden_search(root: Path, seed: int, work: Path) -> ScenarioResult:
    write_injection_corpus(root, seed)
    oracle = lambda: ScriptedOracle(  # noqa: E731
        [ScriptStep("search_repository", "override"), ScriptStep("read_file", INJECTION_PATH)], "false"
    )
    outcome = run_session(
        SessionSetup(
            root,
            ["Does any file contain the term 'override'?"],
            seed=seed,
            oracle_factory=_per_question(oracle),
            before_questions=lambda prover, auditor: adversary.hide_from_search(prover, INJECTION_PATH),
        )
    )
    return ScenarioResult("hidden_search", seed, SPECS["hidden_search"].expected, _observed(outcome), {}, outcome)


def _budget_overflow(root: Path, seed: int, work: Path) -> ScenarioResult:
    write_basic_corpus(root)
    k_max, n_queries = 40, 50
    greedy = lambda: ScriptedOracle([ScriptStep("list_files", "")] * (n_queries + 1), "true")  # noqa: E731
    plan = [_questions()[i % len(BASIC_PLAN)] for i in range(k_max + 1)]
    outcome = run_session(
        SessionSetup(root, plan, k_max=k_max, n_queries=n_queries, seed=seed, oracle_factory=_per_question(greedy))
    )
    a, v = outcome.auditor, outcome.verifier
    # ready + one verdict per answered question + final; the refused question adds nothing.
    checks = {
        "tool_call_refused": a.budgets.refused_calls == 1 and a.mcp_counts[:1] == [n_queries],
        "question_budget_error": v is not None
        and v.question_counter == k_max
        and any("budget exhausted" in n for n in outcome.report.notes),
        "no_wire_traffic": v is not None and len(v.inbound) == k_max + 2,
    }
    return ScenarioResult("budget_overflow", seed, SPECS["budget_overflow"].expected, _observed(outcome), checks, outcome)


def _injection(root: Path, seed: int, work: Path) -> ScenarioResult:
    write_injection_corpus(root, seed)
    oracle = lambda: ScriptedOracle(  # noqa: E731
        [ScriptStep("list_files", ""), ScriptStep("read_file", INJECTION_PATH)], "false", obey_injections=True
    )
    outcome = run_session(
        SessionSetup(
            root,
            ["Does the root directory contain a directory named 'verifier'?"],
            seed=seed,
            oracle_factory=_per_question(oracle),
        )
    )
    checks = {"verdict_manipulated": bool(outcome.report and [q.verdict for q in outcome.report.asked] == ["true"])}
    checks["marker_committed"] = injection_committed(outcome, work / "artifacts")
    return ScenarioResult("injection_marker", seed, SPECS["injection_marker"].expected, _observed(outcome), checks, outcome)


def injection_committed(outcome: SessionOutcome, out_dir: Path) -> bool:
    """Export, re-import and verify the transcript; the marker digest must be inside."""
    if outcome.prover is None or outcome.prover.final_record is None:
        return False
    write_artifacts(outcome, out_dir)
    entries = import_transcript((out_dir / "transcript.txt").read_text(encoding="utf-8"))
    final = outcome.prover.final_record
    apk = bytes(outcome.token.quote.auditor_public)
    ppk = outcome.prover.keys.public_key
    report = chain_verify(outcome.prover.manifest.corpus_digest, outcome.ticket, entries, final.head, ppk, apk)
    return report.valid and final.verify(ppk, apk) and digest(INJECTION_TEXT) in ingested_digests(entries)


def _extraction(root: Path, seed: int, work: Path) -> ScenarioResult:
    recovered, outcome = run_extraction(16, 40, seed, work)
    checks = {"recovered_all_16": recovered == 16}
    files = list(corpus_bytes(work / f"secret-{seed}").values()) if (work / f"secret-{seed}").exists() else []
    return ScenarioResult("oracle_extraction", seed, SPECS["oracle_extraction"].expected, _observed(outcome), checks, outcome, files)


_RUNNERS = {
    "honest": _honest,
    "toctou_mutation": _toctou,
    "forked_history": _forked,
    "replay": _replay,
    "hidden_search": _hidden_search,
    "budget_overflow": _budget_overflow,
    "injection_marker": _injection,
    "oracle_extraction": _extraction,
}


def run_scenario(spec: ScenarioSpec | str, seed: int = 0) -> ScenarioResult:
    name = spec.name if isinstance(spec, ScenarioSpec) else spec
    if name not in _RUNNERS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        root = work / "corpus"
        result = _RUNNERS[name](root, seed, work)
        if root.exists():
            result.corpus_files = list(corpus_bytes(root).values()) + result.corpus_files
    return result
