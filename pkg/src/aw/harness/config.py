"""Run configuration: a UTF-8 file of ``key=value`` lines.

Recognised keys: corpus, output, k_max, n_queries, oracle (rule or
permissive), questions (a file with one question per line), seed,
transport (inprocess or tcp), obfuscate (true/false). Blank lines and
lines starting with ``#`` are ignored. Relative paths resolve against the
config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ParameterError
from ..messages import DEFAULT_K_MAX, DEFAULT_N_QUERIES
from ..oracles import RuleOracle

_SECTION = "aw"
_KEYS = {"corpus", "output", "k_max", "n_queries", "oracle", "questions", "seed", "transport", "obfuscate"}


@dataclass
class AuditConfig:
    corpus: Path
    output: Path
    questions: list[str] = field(default_factory=list)
    k_max: int = DEFAULT_K_MAX
    n_queries: int = DEFAULT_N_QUERIES
    oracle: str = "rule"
    seed: int | None = None
    transport: str = "inprocess"
    obfuscate: bool = False

    def oracle_factory(self):
        if self.oracle == "rule":
            return RuleOracle
        if self.oracle == "permissive":
            return lambda: RuleOracle(permissive=True)
        raise ParameterError(f"unknown oracle {self.oracle!r}")


def parse_config(text: str, base: Path | None = None) -> AuditConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    try:
        cp.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ParameterError(f"config: {exc}") from exc
    values = dict(cp[_SECTION])
    unknown = set(values) - _KEYS
    if unknown:
        raise ParameterError(f"config: unknown keys {sorted(unknown)}")
    for key in ("corpus", "output"):
        if key not in values:
            raise ParameterError(f"config: missing {key}")
    base = base or Path.cwd()

    def path(v: str) -> Path:
        p = Path(v)
        return p if p.is_absolute() else base / p

    try:
        cfg = AuditConfig(
            corpus=path(values["corpus"]),
            output=path(values["output"]),
            k_max=int(values.get("k_max", DEFAULT_K_MAX)),
            n_queries=int(values.get("n_queries", DEFAULT_N_QUERIES)),
            oracle=values.get("oracle", "rule"),
            seed=int(values["seed"]) if "seed" in values else None,
            transport=values.get("transport", "inprocess"),
            obfuscate=cp.getboolean(_SECTION, "obfuscate", fallback=False),
        )
    except ValueError as exc:
        raise ParameterError(f"config: {exc}") from exc
    if cfg.transport not in ("inprocess", "tcp"):
        raise ParameterError(f"config: unknown transport {cfg.transport!r}")
    cfg.oracle_factory()
    if "questions" in values:
        qfile = path(values["questions"])
        cfg.questions = [
            line.strip() for line in qfile.read_text(encoding="utf-8").splitlines() if line.strip()
        ]
    return cfg


def load_config(path: str | Path) -> AuditConfig:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), p.parent)
