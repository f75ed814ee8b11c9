"""Boolean-oracle extraction: a Verifier asking for a planted secret one bit at a time."""

from __future__ import annotations

import tempfile
from pathlib import Path

from ..oracles import RuleOracle
from .fixtures import SECRET_PATH, write_secret_corpus
from .orchestrate import SessionOutcome, SessionSetup, run_session


def extraction_plan(n: int) -> list[str]:
    return [f"Is bit {i} of the secret in '{SECRET_PATH}' set?" for i in range(n)]


def run_extraction(
    secret_bits: int, k_max: int, seed: int = 0, workdir: Path | None = None
) -> tuple[int, SessionOutcome | None]:
    """Return (bits recovered, session outcome); no session runs when nothing can be asked."""
    if secret_bits <= 0 or k_max <= 0:
        return 0, None
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(workdir or tmp) / f"secret-{seed}"
        _, bits = write_secret_corpus(root, secret_bits, seed)
        outcome = run_session(
            SessionSetup(
                root,
                extraction_plan(secret_bits),
                k_max=k_max,
                n_queries=4,
                oracle_factory=lambda: RuleOracle(permissive=True),
                seed=seed,
            )
        )
    recovered = 0
    if outcome.report is not None:
        for i, q in enumerate(outcome.report.asked):
            if q.attested and q.verdict == ("true" if bits[i] == "Y" else "false"):
                recovered += 1
    return recovered, outcome


def oracle_extraction_demo(secret_bits: int, k_max: int, seed: int = 0) -> int:
    return run_extraction(secret_bits, k_max, seed)[0]
