import json
import subprocess
import sys

import pytest
import yaml

from momtopo import cli
from momtopo.fixtures import revolute_demo
from momtopo.store import read_trial


def run(*argv):
    return cli.main([str(a) for a in argv])


def simulate(outdir, *extra):
    return run("simulate", "--output-dir", outdir, *extra)


@pytest.fixture(scope="module")
def short_campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("campaign")
    assert simulate(out, "--trials", 3, "--seed", 42, "--duration", 1.0) == 0
    assert run("estimate", out) == 0
    return out


class TestSimulate:
    def test_files_and_manifest(self, short_campaign):
        names = sorted(p.name for p in short_campaign.glob("*.trial"))
        assert names == ["trial_0001.trial", "trial_0002.trial", "trial_0003.trial"]
        manifest = json.loads((short_campaign / "manifest.json").read_text())
        assert manifest["schema"] == cli.MANIFEST_SCHEMA
        assert manifest["fixture"] == "revolute-demo"
        assert manifest["fixture_hash"] == revolute_demo().spec.digest()
        assert manifest["true_topology"] == "R"
        assert [t["trial"] for t in manifest["trials"]] == ["trial_0001", "trial_0002", "trial_0003"]
        assert len({t["seed"] for t in manifest["trials"]}) == 3

    def test_sample_count(self, tmp_path):
        assert simulate(tmp_path, "--trials", 1, "--fixture", "prismatic-demo") == 0
        assert len(read_trial(tmp_path / "trial_0001.trial")) == 5000

    def test_rerun_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert simulate(tmp_path / name, "--trials", 2, "--seed", 7, "--duration", 0.5) == 0
        for f in ("trial_0001.trial", "trial_0002.trial", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_parallelism_does_not_change_output(self, tmp_path):
        assert simulate(tmp_path / "a", "--trials", 3, "--duration", 0.5) == 0
        assert simulate(tmp_path / "b", "--trials", 3, "--duration", 0.5, "--parallelism", 2) == 0
        for f in ("trial_0001.trial", "trial_0003.trial", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_bad_axis_fixture_fails_before_simulation(self, tmp_path):
        data = {"object": revolute_demo().spec.to_dict(), "true_topology": "R", "motion_components": ["fy"]}
        data["object"]["joints"][0]["axis"] = [0.0, 0.0, 1.1]
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(data))
        out = tmp_path / "out"
        assert simulate(out, "--fixture", path, "--trials", 1) == cli.EXIT_CONFIG
        assert not out.exists()

    def test_custom_fixture(self, tmp_path):
        data = {"object": revolute_demo().spec.to_dict(), "true_topology": "R", "motion_components": ["fy", "tz"]}
        path = tmp_path / "custom.yaml"
        path.write_text(yaml.safe_dump(data))
        assert simulate(tmp_path / "out", "--fixture", path, "--trials", 1, "--duration", 0.2) == 0

    @pytest.mark.parametrize("flag", [("--trials", 0), ("--duration", -1), ("--smoothing-window", 4)])
    def test_invalid_config(self, tmp_path, flag):
        assert simulate(tmp_path, *flag) == cli.EXIT_CONFIG

    def test_unknown_flag(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            simulate(tmp_path, "--bogus")
        assert info.value.code == cli.EXIT_CONFIG

    def test_require_moving(self, tmp_path):
        assert simulate(tmp_path, "--trials", 2, "--duration", 1.0, "--require-moving") == 0
        for entry in json.loads((tmp_path / "manifest.json").read_text())["trials"]:
            assert entry["moving"]


class TestConfigSources:
    def test_config_file(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"trials": 2, "duration": 0.2, "output-dir": str(tmp_path / "o")}))
        assert run("simulate", "--config", cfg) == 0
        assert len(list((tmp_path / "o").glob("*.trial"))) == 2

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("trails: 2\n")
        assert run("simulate", "--config", cfg) == cli.EXIT_CONFIG

    def test_env_overrides_config_file(self, tmp_path, monkeypatch):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"trials": 1, "duration": 0.2, "output_dir": str(tmp_path / "file")}))
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert run("simulate", "--config", cfg) == 0
        assert (tmp_path / "env" / "trial_0001.trial").exists()
        assert not (tmp_path / "file").exists()

    def test_flag_overrides_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert simulate(tmp_path / "flag", "--trials", 1, "--duration", 0.2) == 0
        assert (tmp_path / "flag" / "trial_0001.trial").exists()


class TestEstimate:
    def test_outputs(self, short_campaign):
        report = json.loads((short_campaign / "report.json").read_text())
        assert report["schema"] == cli.REPORT_SCHEMA and report["smoothing_window"] == 5
        assert len(report["trials"]) == 3 and report["skipped"] == []
        lines = (short_campaign / "errors.csv").read_text().splitlines()
        assert lines[0] == cli.CSV_HEADER
        assert lines[1] == "trial,candidate,error,selected,inconclusive"
        assert len(lines) == 2 + 3 * 2
        for row in report["trials"]:
            chosen = [ln for ln in lines[2:] if ln.startswith(row["trial"] + ",") and ln.split(",")[3] == "1"]
            assert len(chosen) == 1 and chosen[0].split(",")[1] == row["selected"]

    def test_empty_directory(self, tmp_path, capsys):
        assert run("estimate", tmp_path) == cli.EXIT_RUNTIME
        assert "no trials found" in capsys.readouterr().err

    def test_corrupt_file_is_skipped(self, tmp_path):
        assert simulate(tmp_path, "--trials", 3, "--duration", 0.3) == 0
        path = tmp_path / "trial_0002.trial"
        path.write_bytes(path.read_bytes()[:-50])
        assert run("estimate", tmp_path) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert [s["file"] for s in report["skipped"]] == ["trial_0002.trial"]
        assert [t["trial"] for t in report["trials"]] == ["trial_0001", "trial_0003"]

    def test_errors_csv_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert simulate(tmp_path / name, "--trials", 2, "--duration", 0.5) == 0
        assert run("estimate", tmp_path / "a") == 0
        assert run("estimate", tmp_path / "b", "--parallelism", 2) == 0
        assert (tmp_path / "a" / "errors.csv").read_bytes() == (tmp_path / "b" / "errors.csv").read_bytes()


class TestReport:
    def test_counts(self, short_campaign, capsys):
        capsys.readouterr()
        assert run("report", short_campaign) == 0
        line = capsys.readouterr().out.strip().splitlines()[0]
        assert line.startswith("revolute-demo: ")
        summary = cli.summarize(json.loads((short_campaign / "report.json").read_text()))["revolute-demo"]
        assert summary["correct"] + summary["inconclusive"] + summary["wrong"] == 3

    def test_all_inconclusive(self, tmp_path):
        assert simulate(tmp_path, "--trials", 3, "--duration", 0.5, "--excitation", "constrained") == 0
        assert run("estimate", tmp_path) == 0
        s = cli.summarize(json.loads((tmp_path / "report.json").read_text()))["revolute-demo"]
        assert (s["correct"], s["inconclusive"], s["wrong"]) == (0, 3, 0)

    def test_single_trial(self, tmp_path):
        assert simulate(tmp_path, "--trials", 1, "--duration", 0.5) == 0
        assert run("estimate", tmp_path) == 0
        s = cli.summarize(json.loads((tmp_path / "report.json").read_text()))["revolute-demo"]
        assert s["correct"] + s["inconclusive"] + s["wrong"] == 1 == s["total"]

    def test_missing_outputs(self, tmp_path):
        assert run("report", tmp_path) == cli.EXIT_RUNTIME

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "momtopo.cli", "report", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == cli.EXIT_RUNTIME
        assert "run 'momtopo estimate' first" in proc.stderr
