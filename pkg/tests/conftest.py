import random
from datetime import datetime, timezone

import pytest

from aw.crypto import keypair_generate, seed_from_text
from aw.harness.fixtures import BASIC_PLAN, write_basic_corpus
from aw.harness.orchestrate import SessionSetup, run_session
from aw.messages import issue_quote, issue_ticket, issue_token

FIXED_CLOCK = lambda: datetime(2025, 3, 1, 12, 0, 0, tzinfo=timezone.utc)  # noqa: E731


def keys(role, label="t"):
    return keypair_generate(seed_from_text(f"{label}/{role}"), role)


@pytest.fixture
def prover_keys():
    return keys("prover")


@pytest.fixture
def auditor_keys():
    return keys("auditor")


@pytest.fixture
def verifier_keys():
    return keys("verifier")


@pytest.fixture
def hw_keys():
    return keys("hardware_root")


@pytest.fixture
def measurement():
    from aw.crypto import digest

    return digest(b"test measurement")


@pytest.fixture
def ticket(prover_keys):
    return issue_ticket(prover_keys, 40, 50, clock=FIXED_CLOCK, rng=random.Random(1))


@pytest.fixture
def token(prover_keys, auditor_keys, verifier_keys, hw_keys, measurement, ticket):
    quote = issue_quote(hw_keys, measurement, auditor_keys.public_key, ticket, "enclave://t")
    return issue_token(prover_keys, quote, verifier_keys.public_key, hw_keys.public_key, measurement)


@pytest.fixture
def basic_corpus(tmp_path):
    return write_basic_corpus(tmp_path / "corpus")


@pytest.fixture(scope="session")
def honest_outcome(tmp_path_factory):
    root = write_basic_corpus(tmp_path_factory.mktemp("honest") / "corpus")
    return run_session(SessionSetup(root, [q for q, _ in BASIC_PLAN], seed=11))


class Wired:
    """A Prover and an Auditor brought up to the serving state, no Verifier channel."""

    def __init__(self, root, k_max=40, n_queries=50, middleware=None, rng_seed=5, **auditor_options):
        from aw.auditor import boot
        from aw.crypto import digest
        from aw.prover import start_session

        self.prover_keys, self.hw, self.verifier_keys = keys("prover", "w"), keys("hardware_root", "w"), keys("verifier", "w")
        self.measurement = digest(b"wired measurement")
        self.prover, self.ticket, self.manifest = start_session(
            self.prover_keys, root, k_max, n_queries, rng=random.Random(rng_seed), clock=FIXED_CLOCK
        )
        self.auditor, boot_quote = boot(
            self.measurement, self.hw, seed=seed_from_text("w/auditor"), **auditor_options
        )
        assert self.prover.accept_auditor(boot_quote, self.measurement, self.hw.public_key)
        quote = self.auditor.receive_ticket(self.ticket, self.prover_keys.public_key)
        self.auditor.receive_manifest(self.prover.manifest_message())
        assert self.prover.accept_session_quote(quote)
        self.token = self.prover.issue_token(self.verifier_keys.public_key)
        self.auditor.accept_verifier(self.token)
        handler = self.prover.handle if middleware is None else middleware(self.prover, self.prover.handle)
        self.sent = []

        def link(line):
            self.sent.append(line)
            return handler(line)

        self.auditor.connect(link)

    def question(self, text, c_q, oracle=None):
        from aw.auditor import question_signing_bytes
        from aw.crypto import sign

        sig = sign(self.verifier_keys, question_signing_bytes(self.ticket.nonce, c_q, text))
        msg = {"type": "question", "text": text, "c_q": c_q, "signature": sig.hex()}
        return self.auditor.answer_question(msg, oracle)

    def verifier(self, wrap=None):
        from aw.verifier import establish

        link = self.auditor.handle_verifier if wrap is None else wrap(self.auditor.handle_verifier)
        return establish(
            self.verifier_keys, self.token, self.hw.public_key, self.prover_keys.public_key, self.measurement, link
        )


@pytest.fixture
def wired(basic_corpus):
    return lambda **kw: Wired(basic_corpus, **kw)


_CRITERIA: list[str] = []


def record_criterion(line: str) -> None:
    _CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
