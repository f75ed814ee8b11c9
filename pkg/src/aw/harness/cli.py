"""``aw`` command line.

Exit codes: 0 pass/complete, 2 protocol abort, 3 verification failure,
4 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..crypto import keypair_generate
from ..errors import AWError, BadKeyError, ManifestError, ParameterError
from .artifacts import verify_artifacts
from .config import load_config
from .explorer import MAX_DEPTH, explore_states
from .extraction import oracle_extraction_demo
from .orchestrate import COMPLETED, run_audit
from .scenarios import SCENARIOS, run_scenario

EXIT_OK, EXIT_ABORT, EXIT_VERIFY, EXIT_USAGE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which means "abort" here
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    artifacts = run_audit(cfg)
    o = artifacts.outcome
    if o.report is not None:
        sys.stdout.write(o.report.text())
    print(f"status {o.status}" + (f" cause {o.cause}" if o.cause else ""))
    print(f"artifacts {artifacts.directory}")
    return EXIT_OK if o.status == COMPLETED else EXIT_ABORT


def _cmd_scenario(args) -> int:
    result = run_scenario(args.name, args.seed)
    print(result.line())
    return EXIT_OK if result.passed else EXIT_VERIFY


def _cmd_explore(args) -> int:
    report = explore_states(args.depth, self_test=args.self_test)
    sys.stdout.write(report.text())
    if args.self_test:
        # The negative control passes when the crippled checker is caught.
        return EXIT_OK if report.violations else EXIT_VERIFY
    return EXIT_OK if report.ok else EXIT_VERIFY


def _cmd_verify(args) -> int:
    keys = None
    if args.prover_key:
        raw = Path(args.prover_key).read_text(encoding="ascii").strip()
        keys = keypair_generate(bytes.fromhex(raw), "prover")
    report = verify_artifacts(args.directory, keys)
    sys.stdout.write(report.text())
    return EXIT_OK if report.ok else EXIT_VERIFY


def _cmd_extract(args) -> int:
    n = oracle_extraction_demo(args.bits, args.kmax, args.seed)
    print(f"recovered {n} of {args.bits} bits with k_max={args.kmax}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aw", description="Run and check audits over a private corpus.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an audit described by a key=value config file")
    r.add_argument("--config", required=True)
    r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("scenario", help="run one adversary scenario")
    s.add_argument("name", choices=SCENARIOS)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_scenario)

    e = sub.add_parser("explore", help="exhaustively explore the abstract protocol model")
    e.add_argument("--depth", type=int, default=12)
    e.add_argument("--self-test", action="store_true", help="disable the checks; violations expected")
    e.set_defaults(fn=_cmd_explore)

    v = sub.add_parser("verify", help="re-verify an artifact directory offline")
    v.add_argument("directory")
    v.add_argument("--prover-key", help="file holding the prover's 32-byte seed in hex")
    v.set_defaults(fn=_cmd_verify)

    x = sub.add_parser("extract", help="boolean-oracle extraction demo")
    x.add_argument("--bits", type=int, required=True)
    x.add_argument("--kmax", type=int, required=True)
    x.add_argument("--seed", type=int, default=0)
    x.set_defaults(fn=_cmd_extract)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "explore" and not 0 <= args.depth <= MAX_DEPTH:
            parser.error(f"--depth must be within 0..{MAX_DEPTH}")
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ParameterError, BadKeyError, ValueError, OSError, ManifestError) as exc:
        print(f"aw: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AWError as exc:
        print(f"aw: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    raise SystemExit(main())
