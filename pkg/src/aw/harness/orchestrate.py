"""Wire the three parties together for one session and collect what they emit."""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..auditor import AuditorSession, boot, code_measurement
from ..crypto import Digest256, KeyPair, keypair_generate, seed_from_text
from ..errors import REJECT_CAUSES, EstablishError, ManifestError, ProtocolAbort
from ..messages import AuditorToken, SessionTicket, artifact_line
from ..oracles import OracleFactory, OracleOutcome, RuleOracle, Tools
from ..prover import ABORTED, ProverSession, start_session
from ..transcript import export_transcript
from ..transport import Handler, TcpLink, serve_tcp
from ..verifier import PlanReport, ScriptedPlan, VerifierSession, establish, run_plan

log = logging.getLogger(__name__)

Middleware = Callable[[ProverSession, Handler], Handler]

COMPLETED, ABORTED_OUTCOME, REJECTED = "completed", "aborted", "rejected"


def party_keys(role: str, seed: int | None) -> KeyPair:
    if seed is None:
        return keypair_generate(None, role)
    return keypair_generate(seed_from_text(f"aw/{role}/{seed}"), role)


@dataclass
class SessionSetup:
    corpus_root: Path
    questions: list[str]
    k_max: int = 40
    n_queries: int = 50
    oracle_factory: OracleFactory = RuleOracle
    seed: int | None = None
    transport: str = "inprocess"
    obfuscate: bool = False
    prover_keys: KeyPair | None = None
    prover_middleware: Middleware | None = None
    before_questions: Callable[[ProverSession, AuditorSession], None] | None = None
    auditor_options: dict = field(default_factory=dict)


@dataclass
class SessionOutcome:
    status: str
    cause: str | None
    prover: ProverSession | None = None
    auditor: AuditorSession | None = None
    verifier: VerifierSession | None = None
    report: PlanReport | None = None
    ticket: SessionTicket | None = None
    token: AuditorToken | None = None
    hw_root_public: bytes = b""
    measurement: Digest256 | None = None
    verifier_inbound: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    detail: str = ""

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED


def classify(cause: str | None) -> str:
    if cause is None:
        return COMPLETED
    return REJECTED if cause in REJECT_CAUSES else ABORTED_OUTCOME


class _TimedOracle:
    def __init__(self, inner, acc: list[float]) -> None:
        self._inner = inner
        self._acc = acc

    def run(self, question: str, tools: Tools) -> OracleOutcome:
        t0 = time.perf_counter()
        try:
            return self._inner.run(question, tools)
        finally:
            self._acc[0] += time.perf_counter() - t0


def run_session(setup: SessionSetup) -> SessionOutcome:
    """Run handshake, question plan and final handshake; never raises on protocol aborts."""
    timings: dict[str, float] = {}
    oracle_time = [0.0]
    servers, links = [], []
    out = SessionOutcome(COMPLETED, None)
    t_start = time.perf_counter()

    def finish(cause: str | None, detail: str = "") -> SessionOutcome:
        for link in links:
            link.close()
        for s in servers:
            s.shutdown()
            s.server_close()
        out.status, out.cause, out.detail = classify(cause), cause, detail
        timings["total"] = time.perf_counter() - t_start
        timings["oracle"] = oracle_time[0]
        out.timings = timings
        return out

    seed = setup.seed
    hw = party_keys("hardware_root", seed)
    prover_keys = setup.prover_keys or party_keys("prover", seed)
    verifier_keys = party_keys("verifier", seed)
    measurement = code_measurement()
    out.hw_root_public, out.measurement = hw.public_key, measurement

    t0 = time.perf_counter()
    prover, ticket, _ = start_session(
        prover_keys,
        setup.corpus_root,
        setup.k_max,
        setup.n_queries,
        rng=random.Random(seed) if seed is not None else None,
        obfuscate=setup.obfuscate,
    )
    out.prover, out.ticket = prover, ticket
    factory = setup.oracle_factory
    auditor, boot_quote = boot(
        measurement,
        hw,
        seed=seed_from_text(f"aw/auditor/{seed}") if seed is not None else None,
        oracle_factory=lambda: _TimedOracle(factory(), oracle_time),
        **setup.auditor_options,
    )
    out.auditor = auditor
    try:
        if not prover.accept_auditor(boot_quote, measurement, hw.public_key):
            return finish(prover.abort_cause, "boot quote rejected")
        session_quote = auditor.receive_ticket(ticket, prover_keys.public_key)
        auditor.receive_manifest(prover.manifest_message())
        if not prover.accept_session_quote(session_quote):
            return finish(prover.abort_cause, "session quote rejected")
        token = prover.issue_token(verifier_keys.public_key)
    except ProtocolAbort as exc:
        return finish(exc.cause, str(exc))
    out.token = token
    out.verifier_inbound.append(artifact_line(token))

    handler: Handler = prover.handle
    if setup.prover_middleware is not None:
        handler = setup.prover_middleware(prover, handler)
    verifier_handler: Handler = auditor.handle_verifier
    if setup.transport == "tcp":
        ps, vs = serve_tcp(handler), serve_tcp(verifier_handler)
        servers += [ps, vs]
        prover_link, verifier_link = TcpLink(ps.address), TcpLink(vs.address)
        links += [prover_link, verifier_link]
    else:
        prover_link, verifier_link = handler, verifier_handler
    auditor.connect(prover_link)
    if setup.before_questions is not None:
        setup.before_questions(prover, auditor)
    try:
        verifier = establish(
            verifier_keys, token, hw.public_key, prover_keys.public_key, measurement, verifier_link
        )
    except EstablishError as exc:
        cause = auditor.abort_cause or ("measurement_mismatch" if exc.layer == "measurement" else "token_invalid")
        return finish(cause, str(exc))
    out.verifier = verifier
    timings["handshake"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    report = run_plan(verifier, ScriptedPlan(list(setup.questions)))
    timings["questions"] = time.perf_counter() - t0
    out.report = report
    out.verifier_inbound.extend(verifier.inbound)

    cause = auditor.abort_cause or (prover.abort_cause if prover.status == ABORTED else None)
    if cause is None and report.final_record is None:
        cause = "unexpected_message"
    return finish(cause)


# -- artifacts --------------------------------------------------------------


ARTIFACT_FILES = (
    "manifest.txt",
    "ticket.aw",
    "token.aw",
    "transcript.txt",
    "final_head.aw",
    "attestations.aw",
    "private_proof.aw",
    "locker.txt",
    "trust.txt",
    "report.json",
    "verifier_report.txt",
)


def run_report(outcome: SessionOutcome) -> dict:
    report = outcome.report
    auditor = outcome.auditor
    timings = dict(outcome.timings)
    total = timings.get("total") or 0.0
    timings["oracle_pct"] = round(100.0 * timings.get("oracle", 0.0) / total, 2) if total else 0.0
    mcp = list(auditor.mcp_counts) if auditor else []
    return {
        "status": outcome.status,
        "cause": outcome.cause,
        "questions": len(report.asked) if report else 0,
        "verdicts": [q.verdict for q in report.asked] if report else [],
        "attested": [q.attested for q in report.asked] if report else [],
        "mcp_calls": mcp,
        "mcp_total": sum(mcp),
        "refused_tool_calls": auditor.budgets.refused_calls if auditor and auditor.budgets else 0,
        "leakage_consumed": report.consumed if report else 0,
        "leakage_bound": report.bound if report else 0,
        "notes": report.notes if report else [],
        "timings": timings,
    }


def write_artifacts(outcome: SessionOutcome, out_dir: str | Path) -> Path:
    """Write whatever the session produced; missing pieces are simply absent."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prover = outcome.prover

    def put(name: str, text: str) -> None:
        (out / name).write_text(text, encoding="utf-8")

    if prover is not None:
        put("manifest.txt", prover.manifest.to_text())
        put("ticket.aw", artifact_line(prover.ticket) + "\n")
        put("transcript.txt", export_transcript(prover.chain.entries))
        (out / "locker.txt").write_bytes(prover.locker_export())
        if prover.final_record is not None:
            put("final_head.aw", artifact_line(prover.final_record) + "\n")
        if prover.private_proof_line is not None:
            put("private_proof.aw", prover.private_proof_line + "\n")
    if outcome.token is not None:
        put("token.aw", artifact_line(outcome.token) + "\n")
    if outcome.verifier is not None:
        atts = [q.attestation for q in outcome.verifier.asked if q.attestation is not None]
        put("attestations.aw", "".join(artifact_line(a) + "\n" for a in atts))
    if outcome.report is not None:
        put("verifier_report.txt", outcome.report.text())
    trust = {
        "hw_root_public": outcome.hw_root_public.hex(),
        "prover_public": prover.keys.public_key.hex() if prover else "",
        "measurement": outcome.measurement.hex() if outcome.measurement else "",
    }
    put("trust.txt", "".join(f"{k}={v}\n" for k, v in trust.items()))
    put("report.json", json.dumps(run_report(outcome), indent=2) + "\n")
    return out


@dataclass
class SessionArtifacts:
    directory: Path
    outcome: SessionOutcome

    def path(self, name: str) -> Path:
        return self.directory / name


def run_audit(config) -> SessionArtifacts:
    """Run a configured audit over a real directory and write its artifacts.

    Raises ManifestError if the corpus root cannot be read.
    """
    root = Path(config.corpus)
    if not root.is_dir():
        raise ManifestError(str(root), "corpus root is not a readable directory")
    setup = SessionSetup(
        corpus_root=root,
        questions=list(config.questions),
        k_max=config.k_max,
        n_queries=config.n_queries,
        oracle_factory=config.oracle_factory(),
        seed=config.seed,
        transport=config.transport,
        obfuscate=config.obfuscate,
    )
    outcome = run_session(setup)
    directory = write_artifacts(outcome, config.output)
    # The output directory is the Prover's archive; its key opens the private proof.
    (directory / "prover_key.hex").write_text(outcome.prover.keys.secret_key.hex() + "\n")
    return SessionArtifacts(directory, outcome)
