"""Command-line entry points for the canonical experiments.

Exit codes: 0 success, 2 configuration error, 3 numeric blow-up,
4 assumption-check failure, 5 replay divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config, read_manifest, resolve_config
from .errors import AssumptionError, BlowUpError, ConfigError
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_ASSUMPTION = 4
EXIT_REPLAY = 5

_SUBCOMMANDS = {
    "run-contraction": "contraction",
    "run-decay-fit": "decay_fit",
    "run-invariant": "invariant",
    "verify-weight": "verify_weight",
    "check-assumptions": "check_assumptions",
    "heat-oracle": "heat_oracle",
}


def _error_record(out_dir, kind, message):
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "error.json").write_text(
            json.dumps({"error": kind, "message": str(message)}, indent=2) + "\n")
    except OSError:
        pass


def _run(cfg: RunConfig, output_dir) -> int:
    out_dir = output_dir if output_dir is not None else cfg.output_dir
    try:
        result = run_experiment(cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        _error_record(out_dir, "config", exc)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"numeric blow-up: {exc} (last good time {exc.last_good_time})",
              file=sys.stderr)
        _error_record(out_dir, "blowup", exc)
        return EXIT_BLOWUP
    except AssumptionError as exc:
        print(f"assumption check failed: {exc}", file=sys.stderr)
        _error_record(out_dir, "assumptions", exc)
        return EXIT_ASSUMPTION
    print(json.dumps(result["summary"], sort_keys=True))
    print(f"manifest: {result['manifest']}")
    return EXIT_OK


def replay(manifest_path) -> int:
    """Re-execute a finished run and demand byte-identical primary CSVs."""
    try:
        manifest = read_manifest(manifest_path)
        cfg = resolve_config(manifest["config"])
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    base = Path(manifest_path).parent
    replay_dir = base / "__replay__"
    try:
        run_experiment(cfg, replay_dir)
    except (ConfigError, BlowUpError, AssumptionError) as exc:
        print(f"replay execution failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_BLOWUP

    for name in manifest["outputs"]:
        original = base / name
        fresh = replay_dir / name
        if not original.exists():
            print(f"replay: original artifact {original} is missing", file=sys.stderr)
            return EXIT_CONFIG
        old_lines = original.read_text().splitlines()
        new_lines = fresh.read_text().splitlines()
        for i, (a, b) in enumerate(zip(old_lines, new_lines)):
            if a != b:
                print(f"replay divergence in {name} at row {i}:\n  was: {a}\n  now: {b}",
                      file=sys.stderr)
                return EXIT_REPLAY
        if len(old_lines) != len(new_lines):
            print(f"replay divergence in {name}: row counts differ "
                  f"({len(old_lines)} vs {len(new_lines)})", file=sys.stderr)
            return EXIT_REPLAY
    print(f"replay of {manifest_path}: byte-identical ({len(manifest['outputs'])} files)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dklab",
        description="Monte-Carlo laboratory for conservative SPDEs on an interval")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {_SUBCOMMANDS[name]} experiment")
        p.add_argument("--config", "-c", required=True, help="JSON config file")
        p.add_argument("--output-dir", "-o", default=None,
                       help="override the config's output_dir "
                            "(default: config value or $DKLAB_OUTPUT_DIR)")

    p = sub.add_parser("replay", help="re-run a manifest and compare CSVs byte-wise")
    p.add_argument("manifest", help="path to a run manifest.json")

    args = parser.parse_args(argv)

    if args.command == "replay":
        return replay(args.manifest)

    try:
        cfg = load_config(args.config)
        expected = _SUBCOMMANDS[args.command]
        if cfg.experiment != expected:
            values = dict(cfg.values)
            values["experiment"] = expected
            cfg = resolve_config(values)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    output_dir = args.output_dir or os.environ.get("DKLAB_OUTPUT_DIR")
    return _run(cfg, output_dir)


if __name__ == "__main__":
    sys.exit(main())
