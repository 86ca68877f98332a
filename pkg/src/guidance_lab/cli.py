"""``guidance-lab <verify|toy2d|sweep|trace|heatmap> --config FILE [--out DIR] [--seed S] [--threads N]``."""

from __future__ import annotations

import argparse
import sys

from .config import COMMANDS, default_config, parse_config, with_overrides
from .errors import ConfigError, GuidanceLabError
from .runner import EXIT_USAGE, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidance-lab",
        description="Exact-score experiments on classifier-free guidance schedules.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="YAML config; command defaults are used when omitted")
    parser.add_argument("--out", help="output root (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="first seed; the seed list keeps its length")
    parser.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            with open(args.config, "rb") as fh:
                cfg = parse_config(fh.read(), command=args.command)
        else:
            cfg = default_config(args.command)
        cfg = with_overrides(cfg, out=args.out, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = run(cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GuidanceLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, ok in manifest.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"artifacts: {manifest.output_dir}")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
