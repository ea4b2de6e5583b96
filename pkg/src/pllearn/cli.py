"""Command-line front end.

Three subcommands:

* ``run``             execute a replicated experiment grid from a JSON spec
* ``summarize``       regroup an existing results.csv into summary statistics
* ``ingest-validate`` check a dataset directory's canonical files

``run`` reads the spec file first and then applies any flags on top, so a
checked-in config can be re-run with a different method list or output
directory without editing it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataio
from .data import label_coverage
from .experiment import ExperimentSpec, run_experiment, summarize


def _parse_methods(raw: list[str]) -> tuple[str, ...]:
    out: list[str] = []
    for token in raw:
        out.extend(t for t in token.split(",") if t)
    return tuple(out)


def _cmd_run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return 2
    if args.methods:
        payload["methods"] = list(_parse_methods(args.methods))
    if args.replicates is not None:
        payload["replicate_count"] = args.replicates
    if args.drop is not None:
        payload["drop_fractions"] = [float(t) for t in args.drop.split(",") if t]
    if args.out is not None:
        payload["out_dir"] = args.out
    if args.workers is not None:
        payload["workers"] = args.workers
    try:
        spec = ExperimentSpec.from_dict(payload)
    except (TypeError, ValueError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return 2

    try:
        rows, ok = run_experiment(spec)
    except (ValueError, OSError, dataio.DatasetIOError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    n_ok = sum(1 for r in rows if r[-1] == "ok")
    print(f"{n_ok}/{len(rows)} result rows ok; outputs in {spec.out_dir}")
    if not ok:
        bad = sorted({r[0] for r in rows if r[-1] != "ok"})
        print(f"failed runs: {', '.join(bad)}", file=sys.stderr)
        return 1
    return 0


def _cmd_summarize(args) -> int:
    try:
        rows = summarize(args.results, args.out, args.plot_json)
    except (ValueError, OSError) as exc:
        print(f"summarize failed: {exc}", file=sys.stderr)
        return 2
    print(f"{len(rows)} summary groups written to {args.out}")
    return 0


def _cmd_ingest_validate(args) -> int:
    directory = Path(args.dir)
    try:
        dataset = dataio.read_dataset_dir(directory)
    except (dataio.DatasetIOError, OSError, ValueError) as exc:
        print(f"invalid dataset directory: {exc}", file=sys.stderr)
        return 2

    counts = dataset.labels.state_counts()
    print(f"clips:    {dataset.num_clips}")
    print(f"classes:  {dataset.num_classes}")
    print(f"frames:   dim {dataset.embed_dim}")
    print(f"labels:   {counts['positive']} positive, {counts['negative']} negative, "
          f"{counts['missing']} missing")
    print(f"coverage: {label_coverage(dataset.labels):.4f}")
    for tag in ("train", "test"):
        print(f"{tag} clips: {dataset.indices_for_split(tag).size}")

    fixed_path = directory / dataio.FIXED_VALIDATION_FILENAME
    if fixed_path.exists():
        try:
            ids = dataio.read_fixed_validation(fixed_path)
        except dataio.DatasetIOError as exc:
            print(f"invalid fixed validation file: {exc}", file=sys.stderr)
            return 2
        known = set(dataset.clip_ids)
        unknown = [c for c in ids if c not in known]
        if unknown:
            print(f"fixed validation names unknown clip {unknown[0]!r}", file=sys.stderr)
            return 2
        print(f"fixed validation clips: {len(ids)}")
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pllearn",
        description="Train and evaluate multi-label classifiers under partial labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a replicated experiment grid")
    run_p.add_argument("--config", required=True, help="experiment spec JSON file")
    run_p.add_argument("--methods", nargs="+", help="override method list (e.g. B0 B1 MT)")
    run_p.add_argument("--replicates", type=int, help="override replicate count")
    run_p.add_argument("--drop", help="override drop fractions, comma-separated (e.g. 0.1,0.8)")
    run_p.add_argument("--out", help="override output directory")
    run_p.add_argument("--workers", type=int, help="parallel worker processes")
    run_p.set_defaults(func=_cmd_run)

    sum_p = sub.add_parser("summarize", help="summarize an existing results.csv")
    sum_p.add_argument("--in", dest="results", required=True, help="results.csv to read")
    sum_p.add_argument("--out", required=True, help="summary.csv to write")
    sum_p.add_argument("--plot-json", help="also write per-group raw values as JSON")
    sum_p.set_defaults(func=_cmd_summarize)

    val_p = sub.add_parser("ingest-validate", help="check a dataset directory")
    val_p.add_argument("--dir", required=True, help="directory with the canonical files")
    val_p.set_defaults(func=_cmd_ingest_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
