"""Replicated-grid runner: spec handling, file outputs, determinism, CLI."""

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from pllearn import (
    ExperimentSpec,
    TrainConfig,
    dataio,
    run_experiment,
    run_id_for,
    summarize,
)
from pllearn.cli import main as cli_main
from pllearn.experiment import RESULTS_HEADER, SUMMARY_HEADER


def _fast_train(**overrides):
    base = dict(
        method="B1",
        epochs=2,
        batch_size=16,
        num_layers=1,
        hidden_size=8,
        dropout_rate=0.2,
        lr=1e-3,
        seed=0,
        alpha=0.9,
        beta=1.0,
        patience=2,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _spec(out_dir, **overrides):
    base = dict(
        out_dir=str(out_dir),
        methods=("B0", "B1"),
        train=_fast_train(),
        replicate_count=2,
        seed_base=100,
        drop_fractions=(0.0, 0.5),
        val_fraction=0.2,
        metrics=("macro_f1", "auprc_micro"),
    )
    base.update(overrides)
    return ExperimentSpec(**base)


def _read_rows(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, list(reader)


class TestSpec:
    def test_json_round_trip(self, tmp_path):
        spec = _spec(tmp_path)
        payload = json.loads(spec.to_json())
        again = ExperimentSpec.from_dict(payload)
        assert again == spec
        p = tmp_path / "spec.json"
        p.write_text(spec.to_json())
        assert ExperimentSpec.from_json_file(p) == spec

    @pytest.mark.parametrize(
        "changes",
        [
            {"methods": ()},
            {"methods": ("B0", "XX")},
            {"replicate_count": 0},
            {"drop_fractions": (0.0, 1.5)},
            {"drop_fractions": (-0.1,)},
            {"val_fraction": 0.0},
            {"val_fraction": 1.0},
            {"workers": 0},
            {"metrics": ()},
        ],
    )
    def test_rejects_bad_values(self, tmp_path, changes):
        with pytest.raises(ValueError):
            _spec(tmp_path, **changes)

    def test_science_hash_ignores_out_dir_and_workers(self, tmp_path):
        a = _spec(tmp_path / "a", workers=1)
        b = _spec(tmp_path / "b", workers=4)
        assert a.science_hash() == b.science_hash()
        c = _spec(tmp_path / "a", train=_fast_train(lr=2e-3))
        assert c.science_hash() != a.science_hash()

    def test_run_id_shape_and_distinctness(self, tmp_path):
        science = _spec(tmp_path).science_hash()
        ids = {
            run_id_for(science, m, d, r)
            for m in ("B0", "B1")
            for d in (0.0, 0.5)
            for r in (0, 1)
        }
        assert len(ids) == 8
        for rid in ids:
            assert len(rid) == 12
            int(rid, 16)  # hex
        assert run_id_for(science, "B0", 0.0, 0) == run_id_for(science, "B0", 0.0, 0)


class TestRunExperiment:
    def test_grid_cardinality_and_row_shape(self, tmp_path, tiny_dataset):
        spec = _spec(tmp_path / "out")
        rows, ok = run_experiment(spec, tiny_dataset)
        assert ok
        # 2 methods x 2 drops x 2 replicates x 2 metrics
        assert len(rows) == 16
        header, file_rows = _read_rows(tmp_path / "out" / "results.csv")
        assert header == list(RESULTS_HEADER)
        assert len(file_rows) == 16
        assert [tuple(str(c) for c in r) for r in rows] == [tuple(r) for r in file_rows]
        for rid, method, drop, replicate, seed, metric, value, status in file_rows:
            assert method in ("B0", "B1")
            assert drop in ("0.0", "0.5")
            assert int(seed) == spec.seed_base + int(replicate)
            assert metric in spec.metrics
            assert status == "ok"
            assert math.isfinite(float(value))

    def test_replicates_share_seeds_across_methods(self, tmp_path, tiny_dataset):
        rows, _ = run_experiment(_spec(tmp_path / "out"), tiny_dataset)
        seeds = {}
        for rid, method, drop, replicate, seed, *_ in rows:
            seeds.setdefault((drop, replicate), set()).add(seed)
        # a paired design: every method sees the same seed in the same cell
        assert all(len(s) == 1 for s in seeds.values())

    def test_rerun_is_byte_identical(self, tmp_path, tiny_dataset):
        run_experiment(_spec(tmp_path / "a"), tiny_dataset)
        run_experiment(_spec(tmp_path / "b"), tiny_dataset)
        for name in ("results.csv", "summary.csv", "plot_data.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes(), name

    def test_empty_drop_list_means_single_zero_cell(self, tmp_path, tiny_dataset):
        spec = _spec(tmp_path / "out", drop_fractions=(), replicate_count=1,
                     methods=("B1",), metrics=("macro_f1",))
        rows, ok = run_experiment(spec, tiny_dataset)
        assert ok
        assert len(rows) == 1
        assert rows[0][2] == "0.0"

    def test_dataset_labels_untouched_by_drops(self, tmp_path, tiny_dataset):
        before = tiny_dataset.labels.states.copy()
        spec = _spec(tmp_path / "out", drop_fractions=(0.9,), replicate_count=1)
        run_experiment(spec, tiny_dataset)
        np.testing.assert_array_equal(tiny_dataset.labels.states, before)

    def test_manifest_contents(self, tmp_path, tiny_dataset):
        spec = _spec(tmp_path / "out")
        rows, _ = run_experiment(spec, tiny_dataset)
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["science_hash"] == spec.science_hash()
        assert set(manifest["input_hashes"]) == {"dataset"}
        assert manifest["failures"] == {}
        run_ids = {r[0] for r in rows}
        assert set(manifest["wall_seconds"]) == run_ids
        assert ExperimentSpec.from_dict(manifest["spec"]) == spec

    def test_training_failure_marks_rows_failed(self, tmp_path, tiny_dataset):
        spec = _spec(
            tmp_path / "out",
            methods=("B1",),
            replicate_count=1,
            drop_fractions=(0.0,),
            train=_fast_train(lr=1e200),
        )
        with np.errstate(over="ignore", invalid="ignore"):
            rows, ok = run_experiment(spec, tiny_dataset)
        assert not ok
        assert [r[-1] for r in rows] == ["failed", "failed"]
        assert all(r[6] == "" for r in rows)
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert len(manifest["failures"]) == 1
        (note,) = manifest["failures"].values()
        assert "TrainingDiverged" in note
        # failed rows are still excluded from the summary
        _, summary = _read_rows(tmp_path / "out" / "summary.csv")
        assert summary == []

    def test_requires_dataset_or_data_dir(self, tmp_path):
        with pytest.raises(ValueError, match="data_dir"):
            run_experiment(_spec(tmp_path / "out"))

    def test_requires_test_split(self, tmp_path, tiny_dataset):
        train_only = tiny_dataset.subset(tiny_dataset.indices_for_split("train"))
        with pytest.raises(ValueError, match="test"):
            run_experiment(_spec(tmp_path / "out"), train_only)


class TestOnDiskDataset:
    def test_runs_from_directory_and_hashes_inputs(self, tmp_path, tiny_dataset):
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        dataio.write_dataset_dir(tiny_dataset, data_dir)
        spec = _spec(tmp_path / "out", data_dir=str(data_dir), replicate_count=1)
        rows, ok = run_experiment(spec)
        assert ok
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        expected = {Path(p).name for p in dataio.canonical_paths(data_dir)}
        assert set(manifest["input_hashes"]) == expected

    def test_fixed_validation_changes_split(self, tmp_path, tiny_dataset):
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        dataio.write_dataset_dir(tiny_dataset, data_dir)
        # enough training to move off init, else both splits can tie on test
        spec_kwargs = dict(
            methods=("B1",), replicate_count=1, drop_fractions=(0.0,),
            metrics=("macro_f1",), data_dir=str(data_dir),
            train=_fast_train(epochs=6, lr=2e-2, dropout_rate=0.3, patience=6),
        )
        rows_free, _ = run_experiment(_spec(tmp_path / "free", **spec_kwargs))

        train_ids = [
            tiny_dataset.clip_ids[i]
            for i in tiny_dataset.indices_for_split("train")
        ]
        dataio.write_fixed_validation(
            data_dir / dataio.FIXED_VALIDATION_FILENAME, train_ids[:8]
        )
        rows_fixed, ok = run_experiment(_spec(tmp_path / "fixed", **spec_kwargs))
        assert ok
        assert rows_free[0][6] != rows_fixed[0][6]

    def test_unknown_fixed_validation_clip_fails_cells(self, tmp_path, tiny_dataset):
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        dataio.write_dataset_dir(tiny_dataset, data_dir)
        dataio.write_fixed_validation(
            data_dir / dataio.FIXED_VALIDATION_FILENAME, ["no_such_clip"]
        )
        spec = _spec(tmp_path / "out", data_dir=str(data_dir), replicate_count=1,
                     methods=("B1",), drop_fractions=(0.0,))
        rows, ok = run_experiment(spec)
        assert not ok
        assert all(r[-1] == "failed" for r in rows)


class TestWorkers:
    def test_parallel_rows_match_serial(self, tmp_path, tiny_dataset):
        serial = _spec(tmp_path / "serial", replicate_count=1, workers=1)
        parallel = _spec(tmp_path / "parallel", replicate_count=1, workers=2)
        rows_s, ok_s = run_experiment(serial, tiny_dataset)
        rows_p, ok_p = run_experiment(parallel, tiny_dataset)
        assert ok_s and ok_p
        assert rows_s == rows_p
        assert (tmp_path / "serial" / "results.csv").read_bytes() == (
            tmp_path / "parallel" / "results.csv"
        ).read_bytes()


class TestSummarize:
    def _write_results(self, path, rows):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(RESULTS_HEADER)
            writer.writerows(rows)

    def test_group_statistics(self, tmp_path):
        results = tmp_path / "results.csv"
        rows = [
            ("id%d" % i, "B1", "0.5", i, 100 + i, "macro_f1", repr(float(v)), "ok")
            for i, v in enumerate([1, 2, 3, 4, 5])
        ]
        rows += [
            ("idx%d" % i, "B0", "0.5", i, 100 + i, "macro_f1", repr(float(v)), "ok")
            for i, v in enumerate([2, 4, 6, 8])
        ]
        rows.append(("solo", "MT", "0.0", 0, 100, "auprc_micro", "0.75", "ok"))
        self._write_results(results, rows)
        out = summarize(results, tmp_path / "summary.csv")
        by_key = {(m, d, met): rest for m, d, met, *rest in out}
        assert by_key[("B1", "0.5", "macro_f1")] == [
            5, repr(3.0), repr(math.sqrt(2.5)), repr(1.0), repr(3.0), repr(5.0)
        ]
        assert by_key[("B0", "0.5", "macro_f1")] == [
            4, repr(5.0), repr(math.sqrt(20 / 3)), repr(2.0), repr(5.0), repr(8.0)
        ]
        # a singleton group reports std 0.0, not a crash
        assert by_key[("MT", "0.0", "auprc_micro")] == [
            1, repr(0.75), repr(0.0), repr(0.75), repr(0.75), repr(0.75)
        ]
        header, file_rows = _read_rows(tmp_path / "summary.csv")
        assert header == list(SUMMARY_HEADER)
        assert len(file_rows) == 3

    def test_non_ok_rows_are_excluded(self, tmp_path):
        results = tmp_path / "results.csv"
        self._write_results(results, [
            ("a", "B1", "0.0", 0, 0, "macro_f1", "0.5", "ok"),
            ("b", "B1", "0.0", 1, 1, "macro_f1", "", "failed"),
            ("c", "B1", "0.0", 2, 2, "macro_f1", "", "error"),
        ])
        out = summarize(results, tmp_path / "summary.csv")
        assert len(out) == 1
        assert out[0][3] == 1  # count: only the ok row

    def test_rejects_unexpected_header(self, tmp_path):
        bad = tmp_path / "results.csv"
        bad.write_text("foo,bar\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            summarize(bad, tmp_path / "summary.csv")

    def test_plot_json_payload(self, tmp_path):
        results = tmp_path / "results.csv"
        self._write_results(results, [
            ("a", "B1", "0.5", 0, 100, "macro_f1", "0.25", "ok"),
            ("b", "B1", "0.5", 1, 101, "macro_f1", "0.75", "ok"),
        ])
        summarize(results, tmp_path / "summary.csv", tmp_path / "plot.json")
        payload = json.loads((tmp_path / "plot.json").read_text())
        (group,) = payload["groups"]
        assert group["method"] == "B1"
        assert group["drop_fraction"] == 0.5
        assert group["values"] == [0.25, 0.75]
        assert group["replicates"] == [0, 1]
        assert group["seeds"] == [100, 101]


class TestCLI:
    @pytest.fixture()
    def data_dir(self, tmp_path, tiny_dataset):
        d = tmp_path / "data"
        d.mkdir()
        dataio.write_dataset_dir(tiny_dataset, d)
        return d

    def _config(self, tmp_path, data_dir, **overrides):
        payload = {
            "out_dir": str(tmp_path / "from_file"),
            "data_dir": str(data_dir),
            "methods": ["B1"],
            "train": {
                "method": "B1", "epochs": 2, "batch_size": 16, "num_layers": 1,
                "hidden_size": 8, "dropout_rate": 0.2, "lr": 1e-3, "seed": 0,
                "patience": 2,
            },
            "replicate_count": 1,
            "drop_fractions": [0.0],
            "metrics": ["macro_f1"],
        }
        payload.update(overrides)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(payload))
        return path

    def test_run_with_overrides(self, tmp_path, data_dir, capsys):
        cfg = self._config(tmp_path, data_dir)
        out = tmp_path / "cli_out"
        rc = cli_main([
            "run", "--config", str(cfg), "--methods", "B0", "B1",
            "--replicates", "2", "--drop", "0.0,0.5", "--out", str(out),
        ])
        assert rc == 0
        header, rows = _read_rows(out / "results.csv")
        assert header == list(RESULTS_HEADER)
        assert len(rows) == 8  # 2 methods x 2 drops x 2 replicates x 1 metric
        assert {r[1] for r in rows} == {"B0", "B1"}
        assert "8/8 result rows ok" in capsys.readouterr().out

    def test_run_rejects_invalid_spec(self, tmp_path, data_dir, capsys):
        cfg = self._config(tmp_path, data_dir, methods=["nope"])
        rc = cli_main(["run", "--config", str(cfg)])
        assert rc == 2
        assert "invalid spec" in capsys.readouterr().err

    @pytest.mark.parametrize("make_path", [
        lambda d: d / "missing.json",
        lambda d: d / "notes.txt",
    ])
    def test_run_rejects_unreadable_config(self, tmp_path, make_path, capsys):
        path = make_path(tmp_path)
        if path.suffix == ".txt":
            path.write_text("not json")
        rc = cli_main(["run", "--config", str(path)])
        assert rc == 2
        assert "invalid spec" in capsys.readouterr().err

    def test_run_reports_failures_with_exit_one(self, tmp_path, data_dir, capsys):
        cfg = self._config(tmp_path, data_dir)
        payload = json.loads(Path(cfg).read_text())
        payload["train"]["lr"] = 1e200
        cfg.write_text(json.dumps(payload))
        with np.errstate(over="ignore", invalid="ignore"):
            rc = cli_main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "failed runs" in capsys.readouterr().err

    def test_summarize_subcommand(self, tmp_path, data_dir):
        cfg = self._config(tmp_path, data_dir)
        out = tmp_path / "o"
        assert cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        rc = cli_main([
            "summarize", "--in", str(out / "results.csv"),
            "--out", str(tmp_path / "s.csv"), "--plot-json", str(tmp_path / "p.json"),
        ])
        assert rc == 0
        assert (tmp_path / "s.csv").read_bytes() == (out / "summary.csv").read_bytes()
        assert (tmp_path / "p.json").exists()

    def test_summarize_bad_input_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("foo\n")
        rc = cli_main(["summarize", "--in", str(bad), "--out", str(tmp_path / "s.csv")])
        assert rc == 2
        assert "summarize failed" in capsys.readouterr().err

    def test_ingest_validate_ok(self, data_dir, capsys):
        rc = cli_main(["ingest-validate", "--dir", str(data_dir)])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.strip().endswith("ok")
        assert "clips:    60" in out

    def test_ingest_validate_rejects_missing_dir(self, tmp_path, capsys):
        rc = cli_main(["ingest-validate", "--dir", str(tmp_path / "nope")])
        assert rc == 2
        assert "invalid dataset directory" in capsys.readouterr().err

    def test_ingest_validate_rejects_unknown_fixed_clip(self, data_dir, capsys):
        dataio.write_fixed_validation(
            data_dir / dataio.FIXED_VALIDATION_FILENAME, ["ghost"]
        )
        rc = cli_main(["ingest-validate", "--dir", str(data_dir)])
        assert rc == 2
        assert "unknown clip" in capsys.readouterr().err
