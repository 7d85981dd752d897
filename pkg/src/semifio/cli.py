"""
Command line entry point.

    semifio {propagate,converge,ehrenfest,validate,stft-check}
            [--config PATH] [--out DIR] [--threads N] [--seed U64]

Exit status: 0 on success, 1 when a check fails, 2 on a configuration error.
"""

import argparse
import json
import logging
import sys

from .errors import ConfigurationError, SemifioError
from . import harness

COMMANDS = {
    "propagate": harness.cmd_propagate,
    "converge": harness.cmd_converge,
    "ehrenfest": harness.cmd_ehrenfest,
    "validate": harness.cmd_validate,
    "stft-check": harness.cmd_stft_check,
}


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="semifio", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", default=f"semifio-{name}", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=_seed, default=None, help="overrides run.seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _verdict(report):
    # slopes and exponents are soft criteria: reported, never a failing exit
    if "pass" in report:
        return report["pass"], report.get("failed", [])
    return True, []


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.seed is not None:
            overrides["run.seed"] = str(args.seed)
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        cfg = harness.load_config(args.config, overrides)
        report = COMMANDS[args.command](cfg, args.out, threads=args.threads)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SemifioError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    ok, failed = _verdict(report)
    summary = {k: report[k] for k in ("fit", "effective_exponent", "soft_pass", "failed")
               if k in report}
    if args.command == "propagate":
        summary["l2_error"] = report["result"]["l2_error"]
    print(json.dumps(summary, sort_keys=True))
    if not ok:
        print(f"failing checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
