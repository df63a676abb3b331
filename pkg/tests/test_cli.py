"""CLI pipeline: exit codes, file outputs, determinism, config precedence."""

import json
import re

import pytest

from bowimg.cli import run


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> prep -> train, shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli_ws")
    data_dir = root / "data"
    assert run(["synth", "--kind", "separable", "--out", str(data_dir),
                "--images", "120", "--seed", "6"]) == 0
    assert run(["prep",
                "--questions", str(data_dir / "questions.json"),
                "--annotations", str(data_dir / "annotations.json"),
                "--out", str(root / "pairs.jsonl"), "--split", "0.8", "--seed", "42"]) == 0
    assert run(["train",
                "--train-pairs", str(root / "pairs.train.jsonl"),
                "--val-pairs", str(root / "pairs.val.jsonl"),
                "--features", str(data_dir / "features.ibf"),
                "--out", str(root / "ckpt"), "--epochs", "8", "--embed-dim", "16"]) == 0
    return root, data_dir


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert run(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand(self):
        assert run([]) == 1

    def test_unknown_flag_rejected(self, workspace):
        root, data_dir = workspace
        assert run(["synth", "--out", str(root / "x"), "--bogus-flag", "1"]) == 1

    def test_missing_required_flag(self):
        assert run(["prep"]) == 1

    def test_missing_feature_store_is_data_error(self, workspace, capsys):
        root, data_dir = workspace
        code = run(["eval",
                    "--checkpoint", str(root / "ckpt"),
                    "--questions", str(data_dir / "questions.json"),
                    "--annotations", str(data_dir / "annotations.json"),
                    "--features", str(root / "no-such-store.ibf")])
        assert code == 2
        assert "no-such-store.ibf" in capsys.readouterr().err

    def test_cam_without_maps_is_data_error(self, workspace, capsys):
        root, data_dir = workspace
        code = run(["explain",
                    "--checkpoint", str(root / "ckpt"),
                    "--features", str(data_dir / "features.ibf"),
                    "--question", "what color is in this picture",
                    "--image-id", "0",
                    "--cam", str(root / "cam.pgm")])
        assert code == 2
        assert "map store" in capsys.readouterr().err

    def test_help_exits_zero(self):
        assert run(["--help"]) == 0


class TestPrep:
    def test_writes_pairs_and_split_files(self, workspace):
        root, _ = workspace
        assert (root / "pairs.jsonl").is_file()
        assert (root / "pairs.train.jsonl").is_file()
        assert (root / "pairs.val.jsonl").is_file()
        split = json.loads((root / "pairs.split.json").read_text())
        assert split["fraction_a"] == 0.8
        assert set(split["assignment"].values()) == {"A", "B"}

    def test_rerun_byte_identical(self, workspace, tmp_path):
        root, data_dir = workspace
        for out in (tmp_path / "p1.jsonl", tmp_path / "p2.jsonl"):
            assert run(["prep",
                        "--questions", str(data_dir / "questions.json"),
                        "--annotations", str(data_dir / "annotations.json"),
                        "--out", str(out), "--split", "0.8", "--seed", "42"]) == 0
        assert (tmp_path / "p1.jsonl").read_bytes() == (tmp_path / "p2.jsonl").read_bytes()
        assert (tmp_path / "p1.split.json").read_bytes() == (tmp_path / "p2.split.json").read_bytes()
        assert (tmp_path / "p1.train.jsonl").read_bytes() == (tmp_path / "p2.train.jsonl").read_bytes()


class TestVocabCommand:
    def test_writes_dictionaries(self, workspace, tmp_path):
        root, _ = workspace
        out = tmp_path / "dicts"
        assert run(["vocab", "--pairs", str(root / "pairs.train.jsonl"), "--out", str(out)]) == 0
        words = json.loads((out / "words.json").read_text())
        answers = json.loads((out / "answers.json").read_text())
        assert set(words) == {"words", "min_count"}
        assert set(answers) == {"answers", "min_count"}
        assert len(answers["answers"]) == 16


class TestTrainCommand:
    def test_checkpoint_written_and_summary_printed(self, workspace, capsys):
        root, _ = workspace
        assert (root / "ckpt" / "manifest.json").is_file()
        assert (root / "ckpt" / "weights.bin").is_file()

    def test_streams_one_line_per_evaluation(self, workspace, tmp_path, capsys):
        root, data_dir = workspace
        assert run(["train",
                    "--train-pairs", str(root / "pairs.train.jsonl"),
                    "--val-pairs", str(root / "pairs.val.jsonl"),
                    "--features", str(data_dir / "features.ibf"),
                    "--out", str(tmp_path / "ckpt"), "--epochs", "3", "--embed-dim", "8"]) == 0
        err = capsys.readouterr().err
        lines = [l for l in err.splitlines() if re.match(r"epoch \d+ loss [\d.]+ val_acc [\d.]+", l)]
        assert len(lines) == 3

    def test_deterministic_checkpoints(self, workspace, tmp_path):
        root, data_dir = workspace
        for out in (tmp_path / "c1", tmp_path / "c2"):
            assert run(["train",
                        "--train-pairs", str(root / "pairs.train.jsonl"),
                        "--val-pairs", str(root / "pairs.val.jsonl"),
                        "--features", str(data_dir / "features.ibf"),
                        "--out", str(out), "--epochs", "2", "--embed-dim", "8"]) == 0
        assert (tmp_path / "c1" / "weights.bin").read_bytes() == (tmp_path / "c2" / "weights.bin").read_bytes()

    def test_report_dir_artifacts(self, workspace, tmp_path):
        root, data_dir = workspace
        report_dir = tmp_path / "report"
        assert run(["train",
                    "--train-pairs", str(root / "pairs.train.jsonl"),
                    "--val-pairs", str(root / "pairs.val.jsonl"),
                    "--features", str(data_dir / "features.ibf"),
                    "--out", str(tmp_path / "ckpt"), "--epochs", "2", "--embed-dim", "8",
                    "--report-dir", str(report_dir)]) == 0
        for name in ("report.json", "losses.csv", "val_accuracy.csv", "training_curves.png"):
            assert (report_dir / name).is_file()
        losses = (report_dir / "losses.csv").read_text().splitlines()
        assert losses[0] == "epoch,mean_loss"
        assert len(losses) == 3


class TestGridCommand:
    def test_table_sorted_and_csv_written(self, workspace, tmp_path, capsys):
        root, data_dir = workspace
        out_csv = tmp_path / "grid.csv"
        assert run(["grid", "--param", "lr_softmax", "--values", "0.01,0.05",
                    "--train-pairs", str(root / "pairs.train.jsonl"),
                    "--val-pairs", str(root / "pairs.val.jsonl"),
                    "--features", str(data_dir / "features.ibf"),
                    "--epochs", "2", "--embed-dim", "8",
                    "--out", str(out_csv), "--report-dir", str(tmp_path / "rpt")]) == 0
        table = capsys.readouterr().out.splitlines()
        assert table[0] == "lr_softmax\tval_accuracy"
        assert len(table) == 3
        accs = [float(line.split("\t")[1]) for line in table[1:]]
        assert accs == sorted(accs, reverse=True)
        assert out_csv.is_file()
        assert (tmp_path / "rpt" / "grid_search.png").is_file()
        assert (tmp_path / "rpt" / "grid.csv").is_file()


class TestEvalCommand:
    def test_row_json_and_export(self, workspace, tmp_path, capsys):
        root, data_dir = workspace
        export = tmp_path / "results.json"
        assert run(["eval",
                    "--checkpoint", str(root / "ckpt"),
                    "--questions", str(data_dir / "questions.json"),
                    "--annotations", str(data_dir / "annotations.json"),
                    "--features", str(data_dir / "features.ibf"),
                    "--export", str(export),
                    "--report-dir", str(tmp_path / "rpt")]) == 0
        row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(row) == {"overall", "yes_no", "number", "other"}
        results = json.loads(export.read_text())
        assert len(results) == 120
        qids = [r["question_id"] for r in results]
        assert qids == sorted(qids)
        assert (tmp_path / "rpt" / "accuracy_by_type.png").is_file()

    def test_multiple_choice_track(self, workspace, capsys):
        root, data_dir = workspace
        assert run(["eval",
                    "--checkpoint", str(root / "ckpt"),
                    "--questions", str(data_dir / "questions.json"),
                    "--annotations", str(data_dir / "annotations.json"),
                    "--features", str(data_dir / "features.ibf"),
                    "--track", "multiple-choice"]) == 0
        row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert row["overall"] >= 0.0


class TestPredictAndExplain:
    def test_predict_json_schema(self, workspace, capsys):
        root, data_dir = workspace
        assert run(["predict",
                    "--checkpoint", str(root / "ckpt"),
                    "--features", str(data_dir / "features.ibf"),
                    "--maps", str(data_dir / "maps.ibm"),
                    "--question", "what color is in this picture",
                    "--image-id", "0", "--topk", "3"]) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(payload) == {"question", "image_id", "answers", "word_importance", "cam"}
        assert len(payload["answers"]) == 3
        entry = payload["answers"][0]
        assert set(entry) == {"answer", "logit", "prob", "word_contrib", "image_contrib"}
        assert payload["cam"]["h"] * payload["cam"]["w"] == len(payload["cam"]["values"])

    def test_predict_byte_identical_across_runs(self, workspace, capsys):
        root, data_dir = workspace
        args = ["predict",
                "--checkpoint", str(root / "ckpt"),
                "--features", str(data_dir / "features.ibf"),
                "--question", "how many things are in this picture",
                "--image-id", "1"]
        assert run(args) == 0
        first = capsys.readouterr().out
        assert run(args) == 0
        assert capsys.readouterr().out == first

    def test_explain_line_format_and_identity(self, workspace, capsys):
        root, data_dir = workspace
        assert run(["explain",
                    "--checkpoint", str(root / "ckpt"),
                    "--features", str(data_dir / "features.ibf"),
                    "--question", "what are they doing in this picture",
                    "--image-id", "2"]) == 0
        out = capsys.readouterr().out
        pattern = re.compile(
            r"^  (?P<answer>.+) \((?P<r>-?\d+\.\d{2}) = (?P<rv>-?\d+\.\d{2}) \[image\] \+ (?P<rw>-?\d+\.\d{2}) \[word\]\)$",
            re.M,
        )
        matches = list(pattern.finditer(out))
        assert len(matches) == 3
        for m in matches:
            # identity holds at display precision (rounding slack 0.01 + eps)
            assert abs(float(m["r"]) - (float(m["rv"]) + float(m["rw"]))) <= 0.011
        assert "words only:" in out and "image only:" in out
        assert "word importance" in out

    def test_explain_writes_pgm_and_figures(self, workspace, tmp_path, capsys):
        root, data_dir = workspace
        pgm = tmp_path / "cam.pgm"
        assert run(["explain",
                    "--checkpoint", str(root / "ckpt"),
                    "--features", str(data_dir / "features.ibf"),
                    "--maps", str(data_dir / "maps.ibm"),
                    "--question", "what color is in this picture",
                    "--image-id", "0",
                    "--cam", str(pgm),
                    "--report-dir", str(tmp_path / "rpt")]) == 0
        lines = pgm.read_text().splitlines()
        assert lines[0] == "P2"
        w, h = map(int, lines[1].split())
        assert lines[2] == "255"
        values = [int(v) for row in lines[3:] for v in row.split()]
        assert len(values) == w * h
        assert all(0 <= v <= 255 for v in values)
        assert (tmp_path / "rpt" / "attribution.png").is_file()
        assert (tmp_path / "rpt" / "attribution.csv").is_file()
        assert (tmp_path / "rpt" / "cam.png").is_file()

    def test_mc_subcommand(self, workspace, capsys):
        root, data_dir = workspace
        assert run(["mc",
                    "--checkpoint", str(root / "ckpt"),
                    "--features", str(data_dir / "features.ibf"),
                    "--question", "what color is in this picture",
                    "--image-id", "0",
                    "--choices", "blue,white,gray,green"]) == 0
        body = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert body["chosen"] in {"blue", "white", "gray", "green"}
        assert len(body["probabilities"]) == 4


class TestConfigPrecedence:
    def test_flag_beats_config_beats_default(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"images": 24, "seed": 3}))
        out = tmp_path / "d1"
        assert run(["synth", "--config", str(config), "--out", str(out), "--seed", "9"]) == 0
        err = capsys.readouterr().err
        resolved = json.loads(err.splitlines()[0].split("config[synth]: ", 1)[1])
        assert resolved["images"] == 24      # from config file
        assert resolved["seed"] == 9         # flag overrides config
        assert resolved["image_dim"] == 16   # built-in default
        manifest = json.loads((out / "dataset.json").read_text())
        assert manifest["images"] == 24

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"bogus": 1}))
        assert run(["synth", "--config", str(config), "--out", str(tmp_path / "d")]) == 1

    def test_resolved_config_always_printed(self, workspace, capsys):
        root, data_dir = workspace
        run(["vocab", "--pairs", str(root / "pairs.train.jsonl"), "--out", str(root / "dicts2")])
        assert "config[vocab]:" in capsys.readouterr().err
