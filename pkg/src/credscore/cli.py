"""Command-line entry point.

Exit codes: 0 success, 1 when any agency failed or had no data, 2 for configuration
errors (unreadable or invalid config, schema, data file or manifest).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._utils import atomic_write_text, write_json
from .runner import (
    ConfigError,
    IncompleteManifestError,
    RunConfig,
    emit_report,
    failed_agencies,
    load_dataset,
    run_experiment,
)

EXIT_OK, EXIT_AGENCY_FAILURE, EXIT_CONFIG = 0, 1, 2

# subcommand -> stages it runs
PIPELINE_COMMANDS = {
    "plan-folds": ("plan",),
    "tune": ("tune",),
    "train": ("train",),
    "evaluate": ("evaluate",),
    "explain": ("explain",),
    "drift": ("drift",),
    "run-all": None,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--agency", action="append", help="restrict to this agency (repeatable)")
    common.add_argument("--target", choices=("binary", "continuous", "both"))
    common.add_argument("--trials", type=int, help="TPE trials per preset and fold")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="credscore", description="Agency credit-rating prediction pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="load and deduplicate the data, write ingest.json")
    sub.add_parser("summarize", parents=[common], help="descriptive statistics (summary.json, summary.txt)")
    for name in PIPELINE_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the pipeline through '{name}'")
    sub.add_parser("report", parents=[common], help="emit tables and plot data from <out>/manifest.json")
    return p


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = RunConfig.from_json(args.config)
    if args.agency:
        cfg.agencies = list(args.agency)
    if args.target:
        cfg.target = args.target
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def _ingest(cfg: RunConfig) -> dict:
    from .preprocess import deduplicate

    obs, content_hash = load_dataset(cfg)
    per_agency = {}
    for agency in sorted(obs.frame["agency"].unique()):
        sub, audit = deduplicate(obs.for_agency(agency))
        per_agency[agency] = {
            "rows": int((obs.frame["agency"] == agency).sum()),
            "rows_after_dedup": len(sub),
            "exact_duplicates_removed": len(audit.exact_duplicates_removed),
            "near_duplicates_resolved": len(audit.near_duplicates_resolved),
        }
    return {"content_hash": content_hash, "n_rows": len(obs), "agencies": per_agency}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            out = Path(args.out) if args.out else Path(_config(args).out_dir)
            try:
                manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read manifest: {exc}") from None
            bundle = emit_report(manifest, out)
            for n in bundle.notices:
                print(f"notice: {n}")
            print(f"wrote {len(bundle.files)} report files under {out / 'report'}")
            return EXIT_AGENCY_FAILURE if failed_agencies(manifest) else EXIT_OK

        cfg = _config(args)
        out = Path(cfg.out_dir)
        if args.command == "ingest":
            doc = _ingest(cfg)
            write_json(out / "ingest.json", doc)
            print(json.dumps(doc, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "summarize":
            from .ingest import summarize

            obs, _ = load_dataset(cfg)
            report = summarize(obs)
            atomic_write_text(out / "summary.json", report.to_json())
            atomic_write_text(out / "summary.txt", report.to_text())
            print(report.to_text())
            return EXIT_OK

        manifest = run_experiment(cfg, PIPELINE_COMMANDS[args.command])
        for agency, rec in manifest["agencies"].items():
            detail = f" ({rec['stage']}: {rec['error']})" if rec.get("status") == "failed" else ""
            print(f"{agency}: {rec['status']}{detail}")
        if args.command == "run-all":
            bundle = emit_report(manifest, out)
            for n in bundle.notices:
                print(f"notice: {n}")
        print(f"manifest {manifest['manifest_hash']} written to {out / 'manifest.json'}")
        return EXIT_AGENCY_FAILURE if failed_agencies(manifest) else EXIT_OK
    except (ConfigError, IncompleteManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
