"""End-to-end tests for the JSON Lines command line.

Every test drives ``vlprep.cli.main`` in process with files under tmp_path,
asserting output bytes, run-report accounting, and exit codes. One test runs
the installed entry point as a subprocess to cover interpreter-level wiring.
"""

import csv
import json
import subprocess
import sys

import pytest

from vlprep.cli import RunReport, main
from vlprep.tokenizer import MockTokenizer

from golden import CHATML_SUPERVISED, CHATML_TEXT, CHATML_TURNS, TASK_FIXTURES

TOK = MockTokenizer()


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def clean_corpus():
    """Three records: one kept (with HTML to strip), one emoji drop, one tag drop."""
    return [
        {
            "id": "a", "text": "A <b>small</b> dog on the lawn.",
            "image_width": 512, "image_height": 512, "language": "en",
        },
        {
            "id": "b", "text": "Nice weather \U0001F600 today!",
            "image_width": 512, "image_height": 512, "language": "en",
        },
        {
            "id": "c", "text": "Photo of <PERSON> at the beach.",
            "image_width": 512, "image_height": 512, "language": "en",
        },
    ]


def run_report(path):
    report = json.loads(path.read_text(encoding="utf-8"))
    accounted = report["records_kept"] + sum(report["drops"].values()) + report["errors"]
    assert report["records_in"] == accounted
    return report


# ---------------------------------------------------------------------------
# clean

class TestClean:
    def test_counts_and_report(self, tmp_path):
        src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        rpt, verdicts = tmp_path / "report.json", tmp_path / "verdicts.jsonl"
        write_jsonl(src, clean_corpus())
        rc = main([
            "clean", "-i", str(src), "-o", str(out),
            "--report", str(rpt), "--verdicts", str(verdicts),
        ])
        assert rc == 0
        report = run_report(rpt)
        assert report["command"] == "clean"
        assert report["records_in"] == 3
        assert report["records_kept"] == 1
        assert report["drops"] == {"R5_emoji": 1, "T_special_tag": 1}
        assert report["errors"] == 0

    def test_kept_text_is_cleaned(self, tmp_path):
        src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        write_jsonl(src, clean_corpus())
        main(["clean", "-i", str(src), "-o", str(out)])
        kept = read_jsonl(out)
        assert [r["id"] for r in kept] == ["a"]
        assert kept[0]["text"] == "A small dog on the lawn."

    def test_verdicts_cover_every_record(self, tmp_path):
        src, verdicts = tmp_path / "in.jsonl", tmp_path / "verdicts.jsonl"
        write_jsonl(src, clean_corpus())
        main(["clean", "-i", str(src), "-o", "-", "--verdicts", str(verdicts)])
        rows = read_jsonl(verdicts)
        assert [r["id"] for r in rows] == ["a", "b", "c"]
        assert [r["decision"] for r in rows] == ["keep", "drop", "drop"]
        assert rows[1]["rule_id"] == "R5_emoji"
        assert rows[2]["rule_id"] == "T_special_tag"

    def test_malformed_line_counted_not_fatal(self, tmp_path):
        src, rpt = tmp_path / "in.jsonl", tmp_path / "report.json"
        records = clean_corpus()
        text = json.dumps(records[0]) + "\n{not json}\n" + json.dumps(records[1]) + "\n"
        src.write_text(text, encoding="utf-8")
        rc = main(["clean", "-i", str(src), "-o", "-", "--report", str(rpt)])
        assert rc == 0
        report = run_report(rpt)
        assert report["records_in"] == 3
        assert report["errors"] == 1
        assert report["records_kept"] == 1

    def test_unknown_field_is_record_error(self, tmp_path):
        src, rpt = tmp_path / "in.jsonl", tmp_path / "report.json"
        write_jsonl(src, [{"id": "a", "text": "A small dog.", "bogus": 1}])
        rc = main(["clean", "-i", str(src), "-o", "-", "--report", str(rpt)])
        assert rc == 0
        assert run_report(rpt)["errors"] == 1

    def test_empty_input(self, tmp_path):
        src, out, rpt = tmp_path / "in.jsonl", tmp_path / "out.jsonl", tmp_path / "r.json"
        src.write_text("", encoding="utf-8")
        rc = main(["clean", "-i", str(src), "-o", str(out), "--report", str(rpt)])
        assert rc == 0
        assert out.read_text(encoding="utf-8") == ""
        assert run_report(rpt)["records_in"] == 0

    def test_config_overrides_thresholds(self, tmp_path):
        src, out, cfg = tmp_path / "in.jsonl", tmp_path / "out.jsonl", tmp_path / "cfg.json"
        write_jsonl(src, [clean_corpus()[0]])
        cfg.write_text(json.dumps({"filter": {"min_chars": 100}}), encoding="utf-8")
        main(["clean", "-i", str(src), "-o", str(out), "--config", str(cfg)])
        assert out.read_text(encoding="utf-8") == ""

    def test_workers_do_not_change_output(self, tmp_path):
        src = tmp_path / "in.jsonl"
        records = [
            dict(clean_corpus()[i % 3], id=f"r{i:03d}") for i in range(60)
        ]
        write_jsonl(src, records)
        out1, out2 = tmp_path / "w1.jsonl", tmp_path / "w2.jsonl"
        main(["clean", "-i", str(src), "-o", str(out1), "--workers", "1"])
        main(["clean", "-i", str(src), "-o", str(out2), "--workers", "2"])
        assert out1.read_bytes() == out2.read_bytes()

    def test_stdout_output(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [clean_corpus()[0]])
        main(["clean", "-i", str(src), "-o", "-"])
        lines = capsys.readouterr().out.splitlines()
        assert json.loads(lines[0])["id"] == "a"


# ---------------------------------------------------------------------------
# exit codes

class TestExitCodes:
    def test_missing_input_is_io_failure(self, tmp_path):
        rc = main(["clean", "-i", str(tmp_path / "absent.jsonl"), "-o", "-"])
        assert rc == 2

    def test_unwritable_output_is_io_failure(self, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [clean_corpus()[0]])
        rc = main(["clean", "-i", str(src), "-o", str(tmp_path / "no" / "dir.jsonl")])
        assert rc == 2

    def test_invalid_config_json_is_config_error(self, tmp_path):
        src, cfg = tmp_path / "in.jsonl", tmp_path / "cfg.json"
        write_jsonl(src, [clean_corpus()[0]])
        cfg.write_text("{", encoding="utf-8")
        assert main(["clean", "-i", str(src), "-o", "-", "--config", str(cfg)]) == 1

    def test_unknown_config_key_is_config_error(self, tmp_path):
        src, cfg = tmp_path / "in.jsonl", tmp_path / "cfg.json"
        write_jsonl(src, [clean_corpus()[0]])
        cfg.write_text(json.dumps({"filter": {"bogus_knob": 1}}), encoding="utf-8")
        assert main(["clean", "-i", str(src), "-o", "-", "--config", str(cfg)]) == 1

    def test_zero_workers_is_config_error(self, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [clean_corpus()[0]])
        assert main(["clean", "-i", str(src), "-o", "-", "--workers", "0"]) == 1

    def test_unknown_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["clean"])
        assert exc.value.code == 1

    def test_subprocess_entry_point(self, tmp_path):
        src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        write_jsonl(src, clean_corpus())
        proc = subprocess.run(
            [sys.executable, "-m", "vlprep.cli", "clean", "-i", str(src), "-o", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "kept=1" in proc.stderr
        assert [r["id"] for r in read_jsonl(out)] == ["a"]


# ---------------------------------------------------------------------------
# build-task / build-chat

class TestBuildTask:
    def test_golden_text_and_mask(self, tmp_path):
        src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        records = [
            dict(fx["fields"], id=name, task=name)
            for name, fx in sorted(TASK_FIXTURES.items())
        ]
        write_jsonl(src, records)
        rc = main(["build-task", "-i", str(src), "-o", str(out)])
        assert rc == 0
        rows = read_jsonl(out)
        assert [r["task"] for r in rows] == sorted(TASK_FIXTURES)
        for row in rows:
            fx = TASK_FIXTURES[row["task"]]
            assert row["text"] == fx["text"]
            assert TOK.decode(row["token_ids"]) == fx["text"]
            assert row["token_len"] == len(row["token_ids"])
            assert row["n_images"] == 1
            supervised = [
                tid for tid, flag in zip(row["token_ids"], row["loss_mask"]) if flag
            ]
            assert TOK.decode(supervised) == "".join(fx["supervised"])

    def test_unknown_task_is_record_error(self, tmp_path):
        src, rpt = tmp_path / "in.jsonl", tmp_path / "report.json"
        good = dict(TASK_FIXTURES["caption"]["fields"], id="a", task="caption")
        bad = {"id": "b", "task": "poetry", "image": "x.jpg"}
        write_jsonl(src, [good, bad])
        rc = main(["build-task", "-i", str(src), "-o", "-", "--report", str(rpt)])
        assert rc == 0
        report = run_report(rpt)
        assert report["records_kept"] == 1
        assert report["errors"] == 1

    def test_missing_field_is_record_error(self, tmp_path):
        src, rpt = tmp_path / "in.jsonl", tmp_path / "report.json"
        write_jsonl(src, [{"id": "a", "task": "vqa", "image": "x.jpg"}])
        main(["build-task", "-i", str(src), "-o", "-", "--report", str(rpt)])
        assert run_report(rpt)["errors"] == 1


class TestBuildChat:
    def test_golden_dialogue(self, tmp_path):
        src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        turns = [
            {"role": role, "content": content, "images": images}
            for role, content, images in CHATML_TURNS
        ]
        write_jsonl(src, [{"id": "dlg", "turns": turns}])
        rc = main(["build-chat", "-i", str(src), "-o", str(out)])
        assert rc == 0
        (row,) = read_jsonl(out)
        assert row["text"] == CHATML_TEXT
        assert row["n_images"] == 1
        supervised = [
            tid for tid, flag in zip(row["token_ids"], row["loss_mask"]) if flag
        ]
        assert TOK.decode(supervised) == "".join(CHATML_SUPERVISED)

    def test_bad_role_is_record_error(self, tmp_path):
        src, rpt = tmp_path / "in.jsonl", tmp_path / "report.json"
        write_jsonl(src, [{"id": "d", "turns": [{"role": "narrator", "content": "hi"}]}])
        rc = main(["build-chat", "-i", str(src), "-o", "-", "--report", str(rpt)])
        assert rc == 0
        assert run_report(rpt)["errors"] == 1

    def test_empty_input_writes_nothing(self, tmp_path):
        src, out = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        src.write_text("", encoding="utf-8")
        assert main(["build-chat", "-i", str(src), "-o", str(out)]) == 0
        assert out.read_text(encoding="utf-8") == ""


# ---------------------------------------------------------------------------
# pack / stats

class TestPackStats:
    def test_pack_groups_and_drops(self, tmp_path):
        src, out, rpt = tmp_path / "in.jsonl", tmp_path / "seq.jsonl", tmp_path / "r.json"
        write_jsonl(src, [
            {"id": "a", "task": "caption", "token_len": 1000},
            {"id": "b", "task": "caption", "token_len": 1000},
            {"id": "c", "task": "caption", "token_len": 100},
            {"id": "d", "task": "vqa", "token_len": 64, "n_images": 1},
            {"id": "e", "task": "vqa", "token_len": 3000},
        ])
        rc = main(["pack", "-i", str(src), "-o", str(out), "--report", str(rpt)])
        assert rc == 0
        rows = read_jsonl(out)
        assert [r["sample_ids"] for r in rows] == [["a", "b"], ["c"], ["d"]]
        assert rows[0]["total_len"] == 2000
        assert rows[2]["total_len"] == 64 + 258
        report = run_report(rpt)
        assert report["drops"] == {"oversize": 1}
        assert report["records_kept"] == 4
        assert report["sequences_out"] == 3

    def test_pack_respects_config(self, tmp_path):
        src, out, cfg = tmp_path / "in.jsonl", tmp_path / "seq.jsonl", tmp_path / "cfg.json"
        write_jsonl(src, [
            {"id": "a", "task": "caption", "token_len": 300},
            {"id": "b", "task": "caption", "token_len": 300},
        ])
        cfg.write_text(json.dumps({"packer": {"max_len": 512}}), encoding="utf-8")
        main(["pack", "-i", str(src), "-o", str(out), "--config", str(cfg)])
        assert [r["sample_ids"] for r in read_jsonl(out)] == [["a"], ["b"]]

    def test_stats_roundtrip(self, tmp_path):
        src, seq, out = tmp_path / "in.jsonl", tmp_path / "seq.jsonl", tmp_path / "stats.json"
        write_jsonl(src, [
            {"id": "a", "task": "caption", "token_len": 1024},
            {"id": "b", "task": "caption", "token_len": 1024},
        ])
        main(["pack", "-i", str(src), "-o", str(seq)])
        rc = main(["stats", "-i", str(seq), "-o", str(out)])
        assert rc == 0
        (usage,) = read_jsonl(out)
        assert usage["n_sequences"] == 1
        assert usage["n_samples"] == 2
        assert usage["fill_ratio"] == 1.0

    def test_build_then_pack_chain(self, tmp_path):
        """Lengths flowing out of build-task are valid pack input as-is."""
        built, seq = tmp_path / "built.jsonl", tmp_path / "seq.jsonl"
        src = tmp_path / "in.jsonl"
        records = [
            dict(fx["fields"], id=name, task=name)
            for name, fx in sorted(TASK_FIXTURES.items())
        ]
        write_jsonl(src, records)
        main(["build-task", "-i", str(src), "-o", str(built)])
        rc = main(["pack", "-i", str(built), "-o", str(seq)])
        assert rc == 0
        packed_ids = [sid for r in read_jsonl(seq) for sid in r["sample_ids"]]
        assert sorted(packed_ids) == sorted(TASK_FIXTURES)


# ---------------------------------------------------------------------------
# check-markup

class TestCheckMarkup:
    def test_kept_dropped_and_errors(self, tmp_path):
        src, out, rpt = tmp_path / "in.jsonl", tmp_path / "out.jsonl", tmp_path / "r.json"
        write_jsonl(src, [
            {"id": "ok", "markup": "<ref>a cat</ref><box>(1,2),(3,4)</box>"},
            {"id": "loose", "markup": "<ref>a cat</ref><quad>(1,2),(3,4),(5,6),(7,8)</quad>"},
            {"id": "broken", "markup": "<ref>a cat</ref><box>(1,2)</box>"},
            {"id": "bad", "markup": 7},
        ])
        rc = main(["check-markup", "-i", str(src), "-o", str(out), "--report", str(rpt)])
        assert rc == 0
        report = run_report(rpt)
        assert report["records_kept"] == 1
        assert report["drops"] == {"non_canonical": 1, "parse_error": 1}
        assert report["errors"] == 1
        rows = read_jsonl(out)
        assert [r["ok"] for r in rows] == [True, False, False]
        assert rows[1]["canonical"] == (
            "<ref>a cat</ref><quad>(1,2), (3,4), (5,6), (7,8)</quad>"
        )


# ---------------------------------------------------------------------------
# lr-curve / grad-check / demo-resampler

class TestNumericCommands:
    def test_lr_curve_stage_values(self, tmp_path):
        out = tmp_path / "curve.csv"
        rc = main(["lr-curve", "--stage", "pretrain", "--every", "250", "-o", str(out)])
        assert rc == 0
        with out.open(encoding="utf-8") as f:
            rows = {int(r["step"]): float(r["lr"]) for r in csv.DictReader(f)}
        assert rows[0] == 0.0
        assert rows[500] == 2e-4
        assert rows[50_000] == 1e-6
        # Cosine midpoint sits halfway through the decay span, step 25250.
        assert abs(rows[25_250] - (2e-4 + 1e-6) / 2) < 1e-15

    def test_lr_curve_stride_keeps_final_step(self, tmp_path):
        out = tmp_path / "curve.csv"
        main([
            "lr-curve", "--peak-lr", "1e-3", "--min-lr", "1e-5",
            "--warmup-steps", "10", "--total-steps", "105", "--every", "50",
            "-o", str(out),
        ])
        with out.open(encoding="utf-8") as f:
            steps = [int(r["step"]) for r in csv.DictReader(f)]
        assert steps == [0, 50, 100, 105]

    def test_lr_curve_rejects_bad_schedule(self):
        rc = main([
            "lr-curve", "--peak-lr", "1e-5", "--min-lr", "1e-3",
            "--warmup-steps", "10", "--total-steps", "100",
        ])
        assert rc == 1

    def test_grad_check_passes(self, capsys):
        rc = main(["grad-check", "--seeds", "2"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_grad_check_impossible_tolerance_fails(self, capsys):
        rc = main(["grad-check", "--seeds", "1", "--tolerance", "1e-30"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_grad_check_rejects_bad_width(self):
        assert main(["grad-check", "--d-model", "6", "--seeds", "1"]) == 1

    def test_demo_converges_and_writes_curve(self, tmp_path):
        out = tmp_path / "loss.csv"
        rc = main(["demo-resampler", "--steps", "300", "-o", str(out)])
        assert rc == 0
        with out.open(encoding="utf-8") as f:
            losses = [float(r["loss"]) for r in csv.DictReader(f)]
        assert len(losses) == 301
        assert losses[-1] <= 0.01 * losses[0]

    def test_demo_rejects_warmup_past_total(self):
        assert main(["demo-resampler", "--steps", "50", "--warmup-steps", "100"]) == 1


# ---------------------------------------------------------------------------
# report invariant

class TestRunReport:
    def test_validate_accepts_balanced_counts(self):
        report = RunReport("clean", records_in=5, records_kept=3, errors=1)
        report.count_drop("R5_emoji")
        report.validate()

    def test_validate_rejects_imbalance(self):
        report = RunReport("clean", records_in=5, records_kept=3)
        with pytest.raises(RuntimeError):
            report.validate()

    def test_drops_serialized_sorted(self):
        report = RunReport("clean", records_in=2)
        report.count_drop("z_rule")
        report.count_drop("a_rule")
        assert list(report.to_json()["drops"]) == ["a_rule", "z_rule"]
