import json

import pytest
import yaml

from beaconlab import (
    BeaconId,
    Observation,
    Trace,
    ephemeral_id,
    write_traces_jsonl,
)
from beaconlab.cli import main
from conftest import AA, BB, CC, KEY1, KEY2, static_beacon


def manifest_doc(**overrides):
    base = {
        "beacons": [static_beacon("b1", 0, AA), static_beacon("b2", 20, BB)],
        "content": [
            {"id_hex": AA, "locator": "app://one"},
            {"id_hex": BB, "locator": "app://two"},
        ],
        "adjacency_radius_m": 25,
        "devices": [{"ref": "phone", "path": [[0.0, [0.0, 1.0]]]}],
        "duration_s": 10.0,
        "radio": {"seed": 4, "sigma_db": 0.0},
    }
    base.update(overrides)
    return base


def write_manifest(path, **overrides):
    path.write_text(yaml.safe_dump(manifest_doc(**overrides)))
    return str(path)


def deployment_file(tmp_path):
    doc = {
        "beacons": [static_beacon("b1", 0, AA), static_beacon("b2", 20, BB)],
        "content": [
            {"id_hex": AA, "locator": "app://one"},
            {"id_hex": BB, "locator": "app://two"},
        ],
        "adjacency_radius_m": 25,
    }
    path = tmp_path / "deployment.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def trace_file(tmp_path, name, traces):
    path = tmp_path / name
    write_traces_jsonl(str(path), traces)
    return str(path)


def walk_trace(device_ref, ids, t0=0.0):
    return Trace(device_ref, tuple(
        Observation(t0 + i, device_ref, BeaconId(bytes.fromhex(h)), -70.0, -59.0)
        for i, h in enumerate(ids)
    ))


class TestAssess:
    def test_worked_example_exits_clean(self, capsys):
        code = main(["assess", "--motives", "M2,M3", "--capabilities", "C1,C2,C3,C6"])
        out = capsys.readouterr().out
        assert code == 0
        assert "A2" in out and "A3" in out
        assert "common defences: TV" in out

    def test_no_common_defence_is_a_finding(self, capsys):
        code = main(["assess", "--motives", "M2,M3,M5",
                     "--capabilities", "C1,C2,C3,C4,C5,C6,C7"])
        assert code == 3
        assert "common defences: (none)" in capsys.readouterr().out

    def test_json_output(self, capsys):
        code = main(["assess", "--motives", "M4", "--capabilities", "C1,C2,C7",
                     "--format", "json"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert [a["id"] for a in doc["likely_attacks"]] == ["A6"]

    def test_unknown_motive_is_usage_error(self, capsys):
        assert main(["assess", "--motives", "M9", "--capabilities", "C1"]) == 1

    def test_missing_required_flag_is_usage_error(self):
        assert main(["assess", "--motives", "M1"]) == 1


class TestSimulate:
    def test_writes_the_three_artifacts(self, tmp_path, capsys):
        manifest = write_manifest(tmp_path / "scenario.yaml")
        out = tmp_path / "out"
        code = main(["simulate", manifest, "--out", str(out)])
        assert code == 0
        assert (out / "events.jsonl").exists()
        assert (out / "traces.jsonl").exists()
        assert (out / "metrics.csv").exists()
        summary = json.loads(capsys.readouterr().out)
        assert summary["seed"] == 4
        assert summary["n_windows"] > 0

    def test_seed_precedence(self, tmp_path, capsys, monkeypatch):
        manifest = write_manifest(tmp_path / "s.yaml", radio={"sigma_db": 0.0})
        monkeypatch.setenv("BEACONLAB_SEED", "77")
        main(["simulate", manifest, "--out", str(tmp_path / "a")])
        assert json.loads(capsys.readouterr().out)["seed"] == 77
        main(["simulate", manifest, "--out", str(tmp_path / "b"), "--seed", "123"])
        assert json.loads(capsys.readouterr().out)["seed"] == 123

    def test_multiple_manifests_get_subdirs(self, tmp_path, capsys):
        m1 = write_manifest(tmp_path / "east.yaml")
        m2 = write_manifest(tmp_path / "west.yaml", duration_s=6.0)
        out = tmp_path / "out"
        code = main(["simulate", m1, m2, "--out", str(out), "--jobs", "2"])
        assert code == 0
        assert (out / "east" / "metrics.csv").exists()
        assert (out / "west" / "metrics.csv").exists()
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2

    def test_missing_manifest_is_io_error(self, tmp_path):
        assert main(["simulate", str(tmp_path / "nope.yaml")]) == 2


class TestDetect:
    def test_threshold_mode_and_exit_codes(self, tmp_path, capsys):
        dep = deployment_file(tmp_path)
        clean = trace_file(tmp_path, "clean.jsonl",
                           [walk_trace("phone", [AA, BB, AA, BB, AA])])
        code = main(["detect", "--deployment", dep, "--traces", clean,
                     "--threshold", "2.0"])
        captured = capsys.readouterr()
        assert code == 0
        assert "phone" in captured.out and "normal" in captured.out
        assert "anomalous=0" in captured.err

        dirty = trace_file(tmp_path, "dirty.jsonl",
                           [walk_trace("phone", [AA, CC, AA, CC, AA])])
        code = main(["detect", "--deployment", dep, "--traces", dirty,
                     "--threshold", "2.0"])
        assert code == 3
        assert "anomalous" in capsys.readouterr().out

    def test_too_short_is_reported_not_flagged(self, tmp_path, capsys):
        dep = deployment_file(tmp_path)
        stub = trace_file(tmp_path, "stub.jsonl", [walk_trace("phone", [AA, BB])])
        code = main(["detect", "--deployment", dep, "--traces", stub,
                     "--threshold", "2.0"])
        assert code == 0
        assert "too_short" in capsys.readouterr().out

    def test_calibration_mode_writes_csv(self, tmp_path, capsys):
        dep = deployment_file(tmp_path)
        calibration = trace_file(
            tmp_path, "calibration.jsonl",
            [walk_trace(f"cal{i}", [AA, BB] * 6) for i in range(25)],
        )
        target = trace_file(tmp_path, "target.jsonl",
                            [walk_trace("phone", [AA, BB] * 4)])
        out = tmp_path / "verdicts.csv"
        code = main(["detect", "--deployment", dep, "--traces", target,
                     "--calibration", calibration, "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "# beaconlab.detect.v1"
        assert lines[1] == "device_ref,avg_nll,n_hard_flags,verdict"
        assert lines[2].startswith("phone,") and lines[2].endswith(",normal")

    def test_needs_threshold_or_calibration(self, tmp_path, capsys):
        dep = deployment_file(tmp_path)
        traces = trace_file(tmp_path, "t.jsonl", [walk_trace("phone", [AA, BB, AA, BB])])
        assert main(["detect", "--deployment", dep, "--traces", traces]) == 1


class TestEphemeral:
    def test_generate_build_verify_round_trip(self, tmp_path, capsys):
        keys_path = tmp_path / "keys.yaml"
        keys_path.write_text(yaml.safe_dump({"b1": KEY1, "b2": KEY2}))
        filter_path = tmp_path / "slot120.blf"

        code = main(["ephemeral", "build", "--keys", str(keys_path),
                     "--slot", "120", "--out", str(filter_path)])
        assert code == 0
        build_info = json.loads(capsys.readouterr().out)
        assert build_info["n_inserted"] == 2 * 5

        code = main(["ephemeral", "generate", "--key-hex", KEY1, "--slot", "121"])
        assert code == 0
        id_hex = capsys.readouterr().out.strip()
        assert id_hex == ephemeral_id(bytes.fromhex(KEY1), 121).hex()

        code = main(["ephemeral", "verify", "--filter", str(filter_path),
                     "--keys", str(keys_path), "--id-hex", id_hex])
        assert code == 0
        assert capsys.readouterr().out.strip() == "accepted b1"

    def test_stale_id_is_rejected_with_exit_3(self, tmp_path, capsys):
        keys_path = tmp_path / "keys.yaml"
        keys_path.write_text(yaml.safe_dump({"b1": KEY1}))
        filter_path = tmp_path / "f.blf"
        main(["ephemeral", "build", "--keys", str(keys_path), "--slot", "120",
              "--out", str(filter_path)])
        capsys.readouterr()
        stale = ephemeral_id(bytes.fromhex(KEY1), 20).hex()
        code = main(["ephemeral", "verify", "--filter", str(filter_path),
                     "--keys", str(keys_path), "--id-hex", stale])
        assert code == 3
        assert capsys.readouterr().out.strip() == "rejected"


class TestReport:
    def test_merges_runs_into_columns(self, tmp_path, capsys):
        quiet = write_manifest(tmp_path / "quiet.yaml")
        noisy = write_manifest(
            tmp_path / "noisy.yaml",
            attacks=[{"kind": "A8", "n_ids": 64, "interval_ms": 200.0}],
        )
        out = tmp_path / "runs"
        main(["simulate", quiet, noisy, "--out", str(out)])
        capsys.readouterr()
        code = main(["report", str(out / "quiet" / "metrics.csv"),
                     str(out / "noisy" / "metrics.csv")])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "# beaconlab.report.v1"
        assert lines[1] == "metric,quiet,noisy"
        rows = {line.split(",")[0]: line for line in lines[2:]}
        assert "delivery_correctness" in rows
        assert "A8[0].mean_budget_utilization" in rows
        # the attack-free run leaves the A8 cell blank
        assert rows["A8[0].mean_budget_utilization"].split(",")[1] == ""


class TestTopLevel:
    def test_unknown_subcommand(self):
        assert main(["conquer"]) == 1

    def test_no_arguments(self):
        assert main([]) == 1
