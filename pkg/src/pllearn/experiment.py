"""Replicated experiment runner and results summarizer.

A run grid is methods x drop_fractions x replicates.  Every cell derives its
seed as ``seed_base + replicate``, so replicate r of one method sees exactly
the same validation split and the same surviving labels as replicate r of
every other method: cells are paired, which is what makes mean comparisons
across methods meaningful at small replicate counts.

Label dropping applies to the training split only, after the validation
split is carved out; validation and test labels are never touched.

``results.csv`` is byte-stable: rows are emitted in grid order, floats are
formatted with repr (shortest round-trip form), and nothing time- or
host-dependent goes into the file.  Timestamps and wall-clock live in
``manifest.json`` next to it, together with content hashes of the inputs
and the full spec, so a results file can always be traced back to what
produced it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .data import Dataset, drop_labels, split_train_val
from .enhance import LEConfig, run_label_enhancing
from .trainers import (
    TrainConfig,
    VALID_METHODS,
    evaluate,
    train_baseline,
    train_mean_teacher,
)

RESULTS_HEADER = ("run_id", "method", "drop_fraction", "replicate", "seed",
                  "metric", "value", "status")
SUMMARY_HEADER = ("method", "drop_fraction", "metric", "count", "mean", "std",
                  "min", "median", "max")
DEFAULT_METRICS = ("macro_f1", "auprc_macro", "auprc_micro")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a replicated sweep needs; JSON-serializable."""

    out_dir: str
    data_dir: str | None = None
    methods: tuple[str, ...] = VALID_METHODS
    train: TrainConfig = field(default_factory=lambda: TrainConfig(method="B1"))
    replicate_count: int = 5
    seed_base: int = 0
    drop_fractions: tuple[float, ...] = ()
    val_fraction: float = 0.15
    metrics: tuple[str, ...] = DEFAULT_METRICS
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "drop_fractions", tuple(float(f) for f in self.drop_fractions))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.methods:
            raise ValueError("at least one method is required")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ValueError(f"unknown method {m!r}; expected one of {VALID_METHODS}")
        if self.replicate_count < 1:
            raise ValueError("replicate_count must be >= 1")
        for f in self.drop_fractions:
            if not 0 <= f <= 1:
                raise ValueError(f"drop fractions must lie in [0, 1], got {f}")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.metrics:
            raise ValueError("at least one metric is required")

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentSpec":
        payload = dict(payload)
        train = payload.get("train")
        if isinstance(train, dict):
            payload["train"] = TrainConfig(**train)
        for key in ("methods", "drop_fractions", "metrics"):
            if key in payload and payload[key] is not None:
                payload[key] = tuple(payload[key])
        return cls(**payload)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def science_hash(self) -> str:
        """Hash of the fields that determine results (paths and worker
        counts excluded, so moving outputs does not re-key the runs)."""
        payload = asdict(self)
        payload.pop("out_dir")
        payload.pop("workers")
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def blob_sha1(path) -> str:
    """Git-style blob hash of a file's content."""
    data = Path(path).read_bytes()
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def dataset_fingerprint(dataset: Dataset) -> str:
    """Content hash of an in-memory dataset (labels, frames, names, tags)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.labels.states).tobytes())
    for e in dataset.embeddings:
        h.update(e.clip_id.encode())
        h.update(np.ascontiguousarray(e.frames, dtype="<f4").tobytes())
    h.update("|".join(dataset.class_names).encode())
    h.update("|".join(dataset.split_tags).encode())
    return h.hexdigest()


def run_id_for(science_hash: str, method: str, drop: float, replicate: int) -> str:
    blob = f"{science_hash}|{method}|{repr(float(drop))}|{replicate}".encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _validation_split(
    dataset: Dataset, val_fraction: float, seed: int, fixed_val_ids
) -> tuple[Dataset, Dataset]:
    if fixed_val_ids is None:
        return split_train_val(dataset, val_fraction, seed)
    wanted = set(fixed_val_ids)
    id_to_index = {cid: i for i, cid in enumerate(dataset.clip_ids)}
    missing = wanted - id_to_index.keys()
    if missing:
        raise ValueError(f"fixed validation clip {sorted(missing)[0]!r} not in dataset")
    train_idx = [i for i in dataset.indices_for_split("train") if dataset.clip_ids[i] not in wanted]
    val_idx = sorted(id_to_index[c] for c in wanted)
    if not train_idx:
        raise ValueError("fixed validation set swallows every train clip")
    return dataset.subset(train_idx, retag="train"), dataset.subset(val_idx, retag="validation")


def execute_run(
    dataset: Dataset,
    fixed_val_ids,
    spec_train: TrainConfig,
    method: str,
    drop: float,
    replicate: int,
    seed: int,
    val_fraction: float,
    metrics: tuple[str, ...],
) -> tuple[dict[str, float], dict[str, str], float]:
    """One grid cell: split, drop, train, evaluate.

    Returns (metric values, per-metric error notes, wall seconds).  Raises
    on training failure; the caller records the row as failed.
    """
    start = time.perf_counter()
    train_set, val_set = _validation_split(dataset, val_fraction, seed, fixed_val_ids)
    if drop > 0:
        train_set = train_set.with_labels(drop_labels(train_set.labels, drop, seed))
    config = spec_train.replace(method=method, seed=seed)

    if method in ("B0", "B1"):
        params, _report = train_baseline(config, train_set, val_set)
    elif method == "LE":
        params, _artifacts = run_label_enhancing(
            LEConfig.from_train_config(config), train_set, val_set
        )
    else:
        student, teacher, _report = train_mean_teacher(config, train_set, val_set)
        params = teacher if config.eval_model == "teacher" else student

    test_set = dataset.subset(dataset.indices_for_split("test"))
    values: dict[str, float] = {}
    errors: dict[str, str] = {}
    for name in metrics:
        try:
            values[name] = evaluate(params, test_set, (name,))[name]
        except ValueError:
            errors[name] = "error"
    return values, errors, time.perf_counter() - start


def run_experiment(spec: ExperimentSpec, dataset: Dataset | None = None):
    """Execute the full grid; write results.csv, summary.csv, manifest.json.

    Returns (rows, ok) where rows is the list of result-row tuples in file
    order and ok is False if any cell failed.  Failures are recorded in the
    rows (status column) and never abort the remaining cells.
    """
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    input_hashes: dict[str, str] = {}
    fixed_val_ids = None
    if dataset is None:
        if spec.data_dir is None:
            raise ValueError("spec has no data_dir and no dataset was passed")
        dataset = dataio.read_dataset_dir(spec.data_dir)
        for p in dataio.canonical_paths(spec.data_dir):
            if Path(p).exists():
                input_hashes[Path(p).name] = blob_sha1(p)
        fixed_path = Path(spec.data_dir) / dataio.FIXED_VALIDATION_FILENAME
        if fixed_path.exists():
            fixed_val_ids = dataio.read_fixed_validation(fixed_path)
    else:
        input_hashes["dataset"] = dataset_fingerprint(dataset)
        if spec.data_dir is not None:
            fixed_path = Path(spec.data_dir) / dataio.FIXED_VALIDATION_FILENAME
            if fixed_path.exists():
                fixed_val_ids = dataio.read_fixed_validation(fixed_path)

    test_idx = dataset.indices_for_split("test")
    if test_idx.size == 0:
        raise ValueError("dataset has no test-tagged clips to evaluate on")
    test_checksum = hashlib.sha256(
        np.ascontiguousarray(dataset.labels.states[test_idx]).tobytes()
    ).hexdigest()

    science = spec.science_hash()
    drops = spec.drop_fractions if spec.drop_fractions else (0.0,)
    cells = [
        (method, drop, replicate)
        for method in spec.methods
        for drop in drops
        for replicate in range(spec.replicate_count)
    ]

    def cell_args(method, drop, replicate):
        return (dataset, fixed_val_ids, spec.train, method, drop, replicate,
                spec.seed_base + replicate, spec.val_fraction, spec.metrics)

    outcomes: list[tuple[str, object]] = []
    if spec.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(execute_run, *cell_args(*cell)) for cell in cells]
            for future in futures:  # submission order, not completion order
                try:
                    outcomes.append(("done", future.result()))
                except (ValueError, RuntimeError) as exc:
                    outcomes.append(("failed", exc))
    else:
        for cell in cells:
            try:
                outcomes.append(("done", execute_run(*cell_args(*cell))))
            except (ValueError, RuntimeError) as exc:
                outcomes.append(("failed", exc))

    rows: list[tuple] = []
    wall: dict[str, float] = {}
    failures: dict[str, str] = {}
    ok = True
    for (method, drop, replicate), (state, payload) in zip(cells, outcomes):
        seed = spec.seed_base + replicate
        rid = run_id_for(science, method, drop, replicate)
        if state == "failed":
            failures[rid] = f"{type(payload).__name__}: {payload}"
            ok = False
            for name in spec.metrics:
                rows.append((rid, method, repr(float(drop)), replicate, seed,
                             name, "", "failed"))
            continue
        values, _errors, seconds = payload
        wall[rid] = seconds
        for name in spec.metrics:
            if name in values:
                rows.append((rid, method, repr(float(drop)), replicate, seed,
                             name, repr(values[name]), "ok"))
            else:
                rows.append((rid, method, repr(float(drop)), replicate, seed,
                             name, "", "error"))
                ok = False

    # The ablation must never have touched the held-out labels.
    after = hashlib.sha256(
        np.ascontiguousarray(dataset.labels.states[test_idx]).tobytes()
    ).hexdigest()
    if after != test_checksum:
        raise RuntimeError("test labels changed during the experiment")

    results_path = out_dir / "results.csv"
    with open(results_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        writer.writerows(rows)

    summarize(results_path, out_dir / "summary.csv", out_dir / "plot_data.json")

    manifest = {
        "spec": json.loads(spec.to_json()),
        "science_hash": science,
        "input_hashes": input_hashes,
        "wall_seconds": {k: round(v, 3) for k, v in sorted(wall.items())},
        "failures": failures,
        "finished_unix": time.time(),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    return rows, ok


def summarize(results_csv, summary_csv, plot_json=None) -> list[tuple]:
    """Grouped statistics per (method, drop_fraction, metric).

    Reads a results.csv, writes summary rows (count, mean, sample std with
    std=0 for singletons, min, median, max) and optionally a JSON file with
    the raw per-group values for external plotting.  Rows whose status is
    not "ok" are excluded from the statistics.
    """
    groups: dict[tuple[str, str, str], list[tuple[int, int, float]]] = {}
    with open(results_csv, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != list(RESULTS_HEADER):
            raise ValueError(
                f"unexpected results header {header}; expected {list(RESULTS_HEADER)}"
            )
        for row in reader:
            rid, method, drop, replicate, seed, metric, value, status = row
            if status != "ok":
                continue
            key = (method, drop, metric)
            groups.setdefault(key, []).append((int(replicate), int(seed), float(value)))

    summary_rows = []
    plot_groups = []
    for key in sorted(groups):
        entries = sorted(groups[key])
        values = [v for _, _, v in entries]
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        summary_rows.append(key + (
            len(values),
            repr(statistics.fmean(values)),
            repr(std),
            repr(min(values)),
            repr(statistics.median(values)),
            repr(max(values)),
        ))
        plot_groups.append({
            "method": key[0],
            "drop_fraction": float(key[1]),
            "metric": key[2],
            "replicates": [r for r, _, _ in entries],
            "seeds": [s for _, s, _ in entries],
            "values": values,
        })

    with open(summary_csv, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        writer.writerows(summary_rows)
    if plot_json is not None:
        with open(plot_json, "w", encoding="utf-8") as f:
            json.dump({"groups": plot_groups}, f, indent=2, sort_keys=True)
            f.write("\n")
    return summary_rows
