"""Command-line entry point: one subcommand per pipeline stage plus ``run-all``
and ``make-fixture``.

Every configuration key can be given in the INI file (``--config``) or as a
flag (``--k 20``, ``--lexicon a.tsv --lexicon b.tsv``); flags win. Errors are
printed to stderr as one JSON object and mapped to exit codes 2 (config),
3 (data) and 4 (numeric).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import AnpError

log = logging.getLogger("anpmatch")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file with an [anpmatch] section")
    g = p.add_argument_group("configuration overrides")
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if f.name == "lexicon":
            g.add_argument(flag, dest=f.name, action="append", help="lexicon TSV (repeatable)")
        elif isinstance(default, bool):
            g.add_argument(flag, dest=f.name, action="store_const", const="true", help=f"enable {f.name}")
        else:
            g.add_argument(flag, dest=f.name, metavar=f.name.upper(), help=f"default: {default}")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anpmatch",
                                     description="Cross-lingual ANP matching and evaluation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in pipeline.STAGES:
        _add_config_flags(sub.add_parser(stage, help=f"run the {stage} stage"))
    _add_config_flags(sub.add_parser("run-all", help="run every stage whose inputs are configured"))
    fx = sub.add_parser("make-fixture", help="write the synthetic fixture to a directory")
    fx.add_argument("directory")
    fx.add_argument("--seed", type=int, default=7)
    return parser


def _overrides(args) -> dict:
    out = {}
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            out[f.name] = value
    return out


def _error(exc: AnpError) -> int:
    payload = dict(exc.to_dict(), exit_code=exc.exit_code)
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
    return exc.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "make-fixture":
            from .synth import write_fixture
            paths = write_fixture(args.directory, args.seed)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2, sort_keys=True))
            return 0
        config = load_config(args.config, _overrides(args))
        if args.command == "run-all":
            done = pipeline.run_all(config)
            print(json.dumps({"stages": done, "output": config.output, "config_hash": config.hash()}))
        else:
            pipeline.run_stage(args.command, config)
            print(json.dumps({"stage": args.command, "output": config.output, "config_hash": config.hash()}))
        return 0
    except AnpError as exc:
        return _error(exc)


if __name__ == "__main__":
    sys.exit(main())
