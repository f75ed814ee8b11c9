"""Offline re-verification of a session's artifact directory."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..corpus import CorpusManifest
from ..crypto import KeyPair
from ..errors import DecryptError, LockerError, ParseError
from ..messages import (
    AuditorToken,
    FinalRecord,
    PrivateProof,
    PublicAttestation,
    SessionTicket,
    attestation_set_digest,
    loads,
    open_private_proof,
    parse_artifact,
    ticket_problem,
    token_problem,
)
from ..prover import EvidenceLocker
from ..transcript import chain_verify, genesis_head, import_transcript
from ..verifier import verify_attestation_bundle


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{self.name:<14} {'ok' if self.ok else 'FAIL'} {self.detail}".rstrip()


@dataclass
class ArtifactReport:
    checks: list[Check] = field(default_factory=list)
    proof_status: str = "absent"

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def text(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"{'proof_status':<14} {self.proof_status}")
        lines.append("result " + ("pass" if self.ok else "fail"))
        return "\n".join(lines) + "\n"


def read_trust(directory: Path) -> dict[str, bytes]:
    out = {}
    for line in (directory / "trust.txt").read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = bytes.fromhex(v.strip())
    return out


def _load(directory: Path, name: str, cls):
    obj = parse_artifact((directory / name).read_text(encoding="utf-8"))
    if not isinstance(obj, cls):
        raise ParseError(f"{name} does not hold a {cls.__name__}")
    return obj


def verify_artifacts(
    directory: str | Path,
    prover_keys: KeyPair | None = None,
    trust: dict[str, bytes] | None = None,
) -> ArtifactReport:
    """Replay the chain and every signature nesting; failures are localized.

    ``trust`` overrides the anchors in trust.txt (hardware root, prover key,
    expected measurement); a real Verifier would pin these out of band.
    """
    d = Path(directory)
    rep = ArtifactReport()
    add = rep.checks.append
    try:
        anchors = trust or read_trust(d)
        hw, ppk, meas = anchors["hw_root_public"], anchors["prover_public"], anchors["measurement"]
    except (OSError, KeyError, ValueError) as exc:
        add(Check("trust", False, f"trust anchors unreadable: {exc}"))
        return rep

    try:
        manifest = CorpusManifest.from_text((d / "manifest.txt").read_text(encoding="utf-8"))
        add(Check("manifest", manifest.is_well_formed(), "" if manifest.is_well_formed() else "entries do not hash to the corpus digest"))
        ticket = _load(d, "ticket.aw", SessionTicket)
        layer = ticket_problem(ticket, ppk)
        add(Check("ticket", layer is None, layer or ""))
        token = _load(d, "token.aw", AuditorToken)
        layer = token_problem(token, ppk, hw, meas)
        if layer is None and token.quote.ticket != ticket:
            layer = "ticket"
        add(Check("token", layer is None, f"layer {layer}" if layer else ""))
        final = _load(d, "final_head.aw", FinalRecord)
        apk = bytes(token.quote.auditor_public)
        ok = final.verify(ppk, apk)
        add(Check("final_head", ok, "" if ok else "dual signature invalid"))
    except (OSError, ParseError) as exc:
        add(Check("load", False, str(exc)))
        return rep

    try:
        entries = import_transcript((d / "transcript.txt").read_text(encoding="utf-8"))
    except ParseError as exc:
        add(Check("transcript", False, f"unparseable: {exc}"))
        entries = None
    if entries is not None:
        v = chain_verify(manifest.corpus_digest, ticket, entries, final.head, ppk, apk)
        where = f"index {v.bad_index}" if v.bad_index is not None else "final head"
        add(Check("transcript", v.valid, "" if v.valid else f"{v.cause} at {where}"))

    atts: list[PublicAttestation] = []
    try:
        for line in (d / "attestations.aw").read_text(encoding="utf-8").splitlines():
            if line:
                atts.append(parse_artifact(line))
        bundle = verify_attestation_bundle(atts, ppk, hw, meas, ticket.nonce)
        bad = [f"#{i.index}:{i.layer}" for i in bundle.items if not i.ok]
        add(Check("attestations", bundle.ok, " ".join(bad)))
        bound = _verdict_points(manifest, ticket, entries or [])
        unbound = [
            str(i)
            for i, a in enumerate(atts)
            if (bytes(a.receipt.head), a.receipt.verdict, a.receipt.question_count) not in bound
        ]
        add(Check("receipt_heads", not unbound, f"not bound to a transcript verdict: {' '.join(unbound)}" if unbound else ""))
    except (OSError, ParseError, AttributeError) as exc:
        add(Check("attestations", False, str(exc)))

    try:
        EvidenceLocker.load((d / "locker.txt").read_bytes())
        add(Check("locker", True))
    except (OSError, LockerError) as exc:
        add(Check("locker", False, str(exc)))

    proof_path = d / "private_proof.aw"
    if not proof_path.exists():
        rep.proof_status = "absent"
    elif prover_keys is None:
        rep.proof_status = "sealed"
    else:
        try:
            proof = PrivateProof.from_wire(loads(proof_path.read_text(encoding="utf-8")))
            log = open_private_proof(prover_keys, proof, attestation_set_digest(atts), apk)
            ok = log.final_head == final.head
            rep.proof_status = "opened" if ok else "opened (head differs)"
            add(Check("private_proof", ok, "" if ok else "audit log head differs from final head"))
        except DecryptError:
            rep.proof_status = "sealed (cannot open)"
        except ParseError as exc:
            add(Check("private_proof", False, str(exc)))
    return rep


def _verdict_points(manifest, ticket, entries) -> set[tuple[bytes, str, int]]:
    """(head before, verdict, C_q) for every verdict entry in the transcript."""
    prev = genesis_head(manifest.corpus_digest, ticket)
    points = set()
    for e in entries:
        if e.call.kind == "verdict":
            points.add((bytes(prev), e.call.argument, e.call.sequence_number))
        prev = e.head_after
    return points
