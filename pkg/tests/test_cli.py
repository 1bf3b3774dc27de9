import json

import numpy as np
import pytest
from PIL import Image

from conftest import build_synthetic_corpus, write_demo_record
from visaid.camera3d import DepthMap
from visaid.cli import main
from visaid.datastore import SampleEnvelope, read_jsonl, save_depth_png, validate_sample


@pytest.fixture()
def intrinsics_file(tmp_path):
    path = tmp_path / "cam.json"
    path.write_text(json.dumps({"fx": 500, "fy": 500, "cx": 320, "cy": 320, "depth_scale": 1000}))
    return path


@pytest.fixture()
def depth_file(tmp_path):
    path = tmp_path / "depth.png"
    save_depth_png(DepthMap(width=640, height=640, samples=np.full((640, 640), 1500.0)), path)
    return path


class TestParseCommand:
    def test_trace_answer_file(self, tmp_path, capsys, level_texts):
        source = tmp_path / "answer.txt"
        source.write_text(level_texts["level5"])
        out = tmp_path / "doc.json"
        assert main(["parse", str(source), "-o", str(out)]) == 0
        doc = json.loads(out.read_text())
        points = [e for e in doc["answer"]["entities"] if e["type"] == "points"]
        assert len(points[-1]["points"]) == 8

    def test_empty_input_is_ok(self, tmp_path, capsys):
        source = tmp_path / "empty.txt"
        source.write_text("")
        assert main(["parse", str(source)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload == {"description": None, "reasoning": None, "answer": None}

    def test_malformed_tag_exits_2(self, tmp_path, capsys):
        source = tmp_path / "bad.txt"
        source.write_text("<box>[[1, 2, 3")
        assert main(["parse", str(source)]) == 2
        assert "byte offset" in capsys.readouterr().err

    def test_missing_file_exits_1(self, capsys):
        assert main(["parse", "/nonexistent/file.txt"]) == 1


def write_detections(path, objects, width=640, height=480):
    path.write_text(
        json.dumps({"width": width, "height": height, "objects": objects})
    )


class TestGraphCommand:
    def test_two_object_detection_yields_one_edge(self, tmp_path, capsys):
        det = tmp_path / "det.json"
        write_detections(
            det,
            [
                {"name": "cup", "box": [0, 200, 100, 300]},
                {"name": "pot", "box": [400, 200, 500, 300]},
            ],
        )
        assert main(["graph", "--detections", str(det)]) == 0
        text = capsys.readouterr().out
        assert "<pred>to the left of</pred>" in text
        assert text.count("<pred>") == 1

    def test_json_output_without_depth_has_no_depth_edges(self, tmp_path):
        det = tmp_path / "det.json"
        write_detections(
            det,
            [
                {"name": "cup", "box": [0, 200, 100, 300]},
                {"name": "pot", "box": [400, 200, 500, 300]},
            ],
        )
        out = tmp_path / "graph.json"
        assert main(["graph", "--detections", str(det), "--json-out", str(out), "-o", str(tmp_path / "g.txt")]) == 0
        graph = json.loads(out.read_text())
        predicates = {r["predicate"] for r in graph["relations"]}
        assert "in-front-of" not in predicates and "behind" not in predicates

    def test_sub_threshold_depth_gap_adds_no_depth_edge(self, tmp_path):
        masks = []
        for name, value in (("near", 100.0), ("far", 110.0)):
            mask = np.zeros((480, 640), dtype=bool)
            mask[:, :320] = name == "near"
            mask[:, 320:] = name == "far"
            masks.append(mask)
        from visaid.datastore import save_mask

        near_mask = tmp_path / "near.png"
        far_mask = tmp_path / "far.png"
        save_mask(masks[0], near_mask)
        save_mask(masks[1], far_mask)
        depth_grid = np.full((480, 640), 100.0)
        depth_grid[:, 320:] = 110.0  # 9.1% gap, below the 20% rule
        depth_path = tmp_path / "depth.csv"
        np.savetxt(depth_path, depth_grid, delimiter=",", fmt="%.1f")

        det = tmp_path / "det.json"
        write_detections(
            det,
            [
                {"name": "near", "box": [0, 0, 320, 480], "mask": str(near_mask)},
                {"name": "far", "box": [320, 0, 640, 480], "mask": str(far_mask)},
            ],
        )
        out = tmp_path / "graph.json"
        assert (
            main(
                [
                    "graph",
                    "--detections",
                    str(det),
                    "--depth",
                    str(depth_path),
                    "--json-out",
                    str(out),
                    "-o",
                    str(tmp_path / "g.txt"),
                ]
            )
            == 0
        )
        graph = json.loads(out.read_text())
        predicates = {r["predicate"] for r in graph["relations"]}
        assert "in-front-of" not in predicates and "behind" not in predicates
        assert graph["objects"][0]["depth"] == 100.0


class TestDatasetCommand:
    def test_synthetic_corpus_counts(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_synthetic_corpus(corpus, n_good=4)
        out = tmp_path / "out"
        assert main(["dataset", "--input", str(corpus), "--output", str(out), "--seed", "9"]) == 0
        report = json.loads((out / "filter_report.json").read_text())
        assert report["kept"] == 4
        assert report["rejected"] == {"mask-too-large": 1, "trace-too-short": 1}
        level4 = list(read_jsonl(out / "level4.jsonl", SampleEnvelope.from_json))
        level5 = list(read_jsonl(out / "level5.jsonl", SampleEnvelope.from_json))
        assert len(level4) == len(level5) == 4
        for sample in level4 + level5:
            assert validate_sample(sample) == []

    def test_inverse_flag_doubles_samples(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_synthetic_corpus(corpus, n_good=3)
        out = tmp_path / "out"
        assert (
            main(["dataset", "--input", str(corpus), "--output", str(out), "--inverse"]) == 0
        )
        forward = sum(
            1
            for name in ("level4.jsonl", "level5.jsonl")
            for _ in read_jsonl(out / name, SampleEnvelope.from_json)
        )
        inverse = list(read_jsonl(out / "inverse.jsonl", SampleEnvelope.from_json))
        assert forward == len(inverse) == 6
        assert all(s.level == "inverse" for s in inverse)

    def test_empty_directory_warns(self, tmp_path, capsys):
        corpus = tmp_path / "empty"
        corpus.mkdir()
        out = tmp_path / "out"
        assert main(["dataset", "--input", str(corpus), "--output", str(out)]) == 0
        assert "no demo records" in capsys.readouterr().err

    def test_same_seed_byte_identical(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_synthetic_corpus(corpus, n_good=3)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert main(["dataset", "--input", str(corpus), "--output", str(out), "--seed", "5"]) == 0
            outs.append((out / "level4.jsonl").read_bytes() + (out / "level5.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_worker_pool_preserves_output_order(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_synthetic_corpus(corpus, n_good=5)
        outs = []
        for run, workers in (("serial", "1"), ("pooled", "4")):
            out = tmp_path / run
            assert (
                main(
                    [
                        "dataset",
                        "--input",
                        str(corpus),
                        "--output",
                        str(out),
                        "--workers",
                        workers,
                    ]
                )
                == 0
            )
            outs.append((out / "level4.jsonl").read_bytes() + (out / "level5.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_all_failing_exits_2(self, tmp_path):
        corpus = tmp_path / "corpus"
        write_demo_record(
            corpus / "only",
            instruction="x",
            final_mask=np.ones((240, 320), dtype=bool),
        )
        assert main(["dataset", "--input", str(corpus), "--output", str(tmp_path / "o")]) == 2


def write_trace_json(path, points):
    path.write_text(json.dumps(points))


class TestLiftCommand:
    def test_straight_ray_objective_reported(self, tmp_path, capsys, intrinsics_file):
        depth_csv = tmp_path / "depth.csv"
        grid = np.full((640, 640), 1000.0)
        grid[100:140, 100:140] = 2000.0  # bump under the middle point
        np.savetxt(depth_csv, grid, delimiter=",", fmt="%.1f")
        trace = tmp_path / "trace.json"
        write_trace_json(trace, [[100, 100], [187, 187], [300, 300]])
        out = tmp_path / "waypoints.json"
        code = main(
            [
                "lift",
                "--trace",
                str(trace),
                "--depth",
                str(depth_csv),
                "--intrinsics",
                str(intrinsics_file),
                "-o",
                str(out),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "initial" in printed and "final" in printed
        payload = json.loads(out.read_text())
        assert payload["optimized"] is True
        assert payload["final_objective"] <= payload["initial_objective"]
        assert len(payload["waypoints"]) == 3
        assert len(payload["waypoints"][0]["orientation"]) == 4

    def test_no_optimize_keeps_objectives_equal(self, tmp_path, capsys, intrinsics_file, depth_file):
        trace = tmp_path / "trace.json"
        write_trace_json(trace, [[100, 100], [500, 500], [800, 800]])
        out = tmp_path / "w.json"
        assert (
            main(
                [
                    "lift",
                    "--trace",
                    str(trace),
                    "--depth",
                    str(depth_file),
                    "--intrinsics",
                    str(intrinsics_file),
                    "--no-optimize",
                    "-o",
                    str(out),
                ]
            )
            == 0
        )
        payload = json.loads(out.read_text())
        assert payload["optimized"] is False
        assert payload["final_objective"] == payload["initial_objective"]

    def test_two_point_trace_reports_skip(self, tmp_path, capsys, intrinsics_file, depth_file):
        trace = tmp_path / "trace.json"
        write_trace_json(trace, [[100, 100], [800, 800]])
        assert (
            main(
                [
                    "lift",
                    "--trace",
                    str(trace),
                    "--depth",
                    str(depth_file),
                    "--intrinsics",
                    str(intrinsics_file),
                    "-o",
                    str(tmp_path / "w.json"),
                ]
            )
            == 0
        )
        assert "skipped" in capsys.readouterr().out

    def test_missing_depth_exits_2_naming_index(self, tmp_path, capsys, intrinsics_file):
        depth_csv = tmp_path / "depth.csv"
        np.savetxt(depth_csv, np.zeros((64, 64)), delimiter=",", fmt="%d")
        trace = tmp_path / "trace.json"
        write_trace_json(trace, [[100, 100], [500, 500]])
        assert (
            main(
                [
                    "lift",
                    "--trace",
                    str(trace),
                    "--depth",
                    str(depth_csv),
                    "--intrinsics",
                    str(intrinsics_file),
                ]
            )
            == 2
        )
        assert "index 0" in capsys.readouterr().err


class TestEvalCommand:
    def test_perfect_predictor_table(self, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        lines = []
        trace = [[100 + i, 200 + i] for i in range(8)]
        lines.append(
            json.dumps(
                {"id": "t0", "instruction": "m", "gt_trace": trace, "pred_trace": trace}
            )
        )
        lines.append(
            json.dumps(
                {
                    "id": "p0",
                    "instruction": "p",
                    "gt_box": [0, 0, 500, 500],
                    "pred_points": [[100, 100], [400, 400]],
                }
            )
        )
        records.write_text("\n".join(lines) + "\n")
        out = tmp_path / "report.json"
        assert main(["eval", "--records", str(records), "-o", str(out)]) == 0
        table = capsys.readouterr().out
        assert "100.00%" in table
        assert "0.00" in table
        report = json.loads(out.read_text())
        assert report["aggregates"]["accuracy"] == 1.0
        assert report["aggregates"]["judge"] is None

    def test_strict_mode_aborts_on_bad_line(self, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        records.write_text('{"id": "x"}\n')
        assert main(["eval", "--records", str(records)]) == 2

    def test_lenient_mode_skips(self, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        trace = [[100 + i, 200] for i in range(8)]
        good = json.dumps(
            {"id": "t", "instruction": "m", "gt_trace": trace, "pred_trace": trace}
        )
        records.write_text('{"broken": true}\n' + good + "\n")
        assert main(["eval", "--records", str(records), "--lenient"]) == 0
        err = capsys.readouterr().err
        assert "skipped line 1" in err

    def _trace_records_with_image(self, tmp_path):
        image = tmp_path / "scene.png"
        Image.new("RGB", (64, 64), (255, 255, 255)).save(image)
        records = tmp_path / "records.jsonl"
        trace = [[100 + 50 * i, 200] for i in range(8)]
        records.write_text(
            json.dumps(
                {
                    "id": "t0",
                    "instruction": "m",
                    "gt_trace": trace,
                    "pred_trace": trace,
                    "image": str(image),
                }
            )
            + "\n"
        )
        return records

    def test_judge_column_via_env(self, tmp_path, capsys, monkeypatch, judge_stub):
        records = self._trace_records_with_image(tmp_path)
        monkeypatch.setenv("EVAL_JUDGE_ENDPOINT", f"{judge_stub}/good")
        monkeypatch.setenv("EVAL_JUDGE_MODEL", "stub")
        out = tmp_path / "report.json"
        assert main(["eval", "--records", str(records), "--judge", "-o", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["aggregates"]["judge"] == 7.0
        assert "7.00" in capsys.readouterr().out

    def test_unreachable_judge_exits_3_with_metrics(self, tmp_path, capsys, monkeypatch):
        records = self._trace_records_with_image(tmp_path)
        monkeypatch.setenv("EVAL_JUDGE_ENDPOINT", "http://127.0.0.1:9/nope")
        out = tmp_path / "report.json"
        code = main(
            [
                "eval",
                "--records",
                str(records),
                "--judge",
                "--judge-retries",
                "0",
                "--judge-timeout",
                "2",
                "-o",
                str(out),
            ]
        )
        assert code == 3
        report = json.loads(out.read_text())
        assert report["aggregates"]["mae"] == 0.0  # metric columns still produced
        assert report["counts"]["judge_errors"] == 1


class TestRenderCommand:
    def test_writes_overlay_png(self, tmp_path):
        image = tmp_path / "scene.png"
        Image.new("RGB", (128, 96), (255, 255, 255)).save(image)
        trace = tmp_path / "trace.json"
        write_trace_json(trace, [[100, 100], [500, 500], [900, 700]])
        out = tmp_path / "overlay.png"
        assert main(["render", "--image", str(image), "--trace", str(trace), "-o", str(out)]) == 0
        assert Image.open(out).size == (128, 96)


class TestConfigFile:
    def test_toml_sets_subcommand_defaults(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_synthetic_corpus(corpus, n_good=2)
        config = tmp_path / "visaid.toml"
        config.write_text('[dataset]\nseed = 42\nmin-area = 0.0001\n')
        out = tmp_path / "out"
        assert (
            main(
                [
                    "--config",
                    str(config),
                    "dataset",
                    "--input",
                    str(corpus),
                    "--output",
                    str(out),
                ]
            )
            == 0
        )
        report = json.loads((out / "filter_report.json").read_text())
        assert report["seed"] == 42
