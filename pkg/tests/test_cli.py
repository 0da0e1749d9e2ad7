import json

import pytest
from click.testing import CliRunner

from anonauth.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _keygen(runner, tmp_path, **extra):
    out = tmp_path / "bundle"
    args = [
        "keygen", "-q", "1", "-n", "6", "-k", "2", "--bit-length", "24",
        "--obus-per-group", "1", "--seed", "3", "--out-dir", str(out),
    ]
    for key, value in extra.items():
        args += [key, str(value)]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return out


class TestKeygen:
    def test_writes_bundle_and_manifest(self, runner, tmp_path):
        out = _keygen(runner, tmp_path)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "keygen"
        assert manifest["seed"] == 3
        for name in manifest["outputs"]:
            assert (out / name).exists()
        assert (out / "root.json").exists()

    def test_bad_parameters_exit_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["keygen", "-n", "2", "-k", "2", "--out-dir", str(tmp_path / "x")],
        )
        assert result.exit_code == 2


class TestAuthDemo:
    def test_accept_exits_0(self, runner, tmp_path):
        bundle = _keygen(runner, tmp_path)
        out = tmp_path / "session"
        result = runner.invoke(
            main,
            ["auth-demo", "--bundle", str(bundle), "--alpha", "1", "--mu", "2",
             "--seed", "5", "--out-dir", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "Accepted" in result.output
        payload = json.loads((out / "result.json").read_text())
        assert payload["outcome"] == "Accepted"
        assert (out / "transcript.jsonl").read_text().strip()

    def test_revoked_exits_3(self, runner, tmp_path):
        bundle = _keygen(runner, tmp_path)
        iv = json.loads(
            next(bundle.glob("obu_*.json")).read_text()
        )["iv"]
        out = tmp_path / "revoked"
        result = runner.invoke(
            main,
            ["auth-demo", "--bundle", str(bundle), "--alpha", "1", "--mu", "2",
             "--revoked-iv", str(iv), "--seed", "5", "--out-dir", str(out)],
        )
        assert result.exit_code == 3
        assert "RejectedRevoked" in result.output

    def test_alpha_above_mu_exits_2(self, runner, tmp_path):
        bundle = _keygen(runner, tmp_path)
        result = runner.invoke(
            main,
            ["auth-demo", "--bundle", str(bundle), "--alpha", "3", "--mu", "2",
             "--out-dir", str(tmp_path / "bad")],
        )
        assert result.exit_code == 2


class TestAnalyze:
    def test_figure_csv(self, runner, tmp_path):
        out = tmp_path / "fig"
        result = runner.invoke(
            main, ["analyze", "--figure", "12", "--out-dir", str(out)]
        )
        assert result.exit_code == 0
        lines = (out / "figure_12.csv").read_text().strip().split("\n")
        assert lines[0] == "series,x,log10_value"
        assert len(lines) == 41

    def test_mc_report(self, runner, tmp_path):
        out = tmp_path / "mc"
        result = runner.invoke(
            main,
            ["analyze", "--mc-formula", "p_cheater", "--k", "2", "--h", "1",
             "--trials", "20000", "--seed", "2", "--out-dir", str(out)],
        )
        assert result.exit_code == 0
        report = (out / "report.csv").read_text().strip().split("\n")
        assert report[1].split(",")[0] == "p_cheater"
        assert report[1].split(",")[-1] == "true"

    def test_no_task_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["analyze", "--out-dir", str(tmp_path / "e")])
        assert result.exit_code == 2


class TestAttack:
    def test_simulate_succeeds_on_basic_variant(self, runner, tmp_path):
        out = tmp_path / "attack"
        result = runner.invoke(
            main,
            ["attack", "simulate", "--sessions", "150", "--seed", "4",
             "--out-dir", str(out)],
        )
        assert result.exit_code == 0, result.output
        row = (out / "attack_report.csv").read_text().strip().split("\n")[1]
        kind, trials, successes, frequency, modeled, measured = row.split(",")
        assert kind == "simulator"
        assert int(successes) > 0
        assert int(measured) <= int(modeled)

    def test_ciphertext_tap_is_infeasible(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["attack", "simulate", "--tap", "ciphertext", "--sessions", "20",
             "--seed", "4", "--out-dir", str(tmp_path / "blind")],
        )
        assert result.exit_code == 4
        assert "infeasible" in result.output

    def test_cheater_mode_report(self, runner, tmp_path):
        out = tmp_path / "cheat"
        result = runner.invoke(
            main,
            ["attack", "cheater", "--k", "1", "--h", "1", "--trials", "20000",
             "--seed", "6", "--out-dir", str(out)],
        )
        assert result.exit_code == 0
        assert (out / "cheater_report.csv").exists()


class TestRevokeDemo:
    def test_accept_then_denied(self, runner, tmp_path):
        out = tmp_path / "revdemo"
        result = runner.invoke(
            main, ["revoke-demo", "--seed", "8", "--out-dir", str(out)]
        )
        assert result.exit_code == 0, result.output
        outcomes = json.loads((out / "outcomes.json").read_text())
        assert outcomes == {"before": "Accepted", "after": "RejectedRevoked"}
        assert (out / "broadcast.json").exists()


class TestSimulate:
    def test_load_sweep_csv(self, runner, tmp_path):
        out = tmp_path / "sim"
        result = runner.invoke(
            main,
            ["simulate", "--sweep", "load", "--duration", "8.0", "--seed", "2",
             "--out-dir", str(out)],
        )
        assert result.exit_code == 0, result.output
        lines = (out / "sweep_load.csv").read_text().strip().split("\n")
        # 3 alphas x 8 grid loads
        assert len(lines) == 1 + 3 * 8


class TestRerun:
    def _hashes(self, directory):
        import hashlib

        out = {}
        for f in sorted(directory.iterdir()):
            out[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
        return out

    def test_keygen_rerun_bit_identical(self, runner, tmp_path):
        out = _keygen(runner, tmp_path)
        redo = tmp_path / "redo"
        result = runner.invoke(
            main,
            ["rerun", "--manifest", str(out / "manifest.json"), "--out-dir", str(redo)],
        )
        assert result.exit_code == 0, result.output
        assert self._hashes(out) == self._hashes(redo)

    def test_auth_demo_rerun_bit_identical(self, runner, tmp_path):
        bundle = _keygen(runner, tmp_path)
        out = tmp_path / "session"
        result = runner.invoke(
            main,
            ["auth-demo", "--bundle", str(bundle), "--alpha", "1", "--mu", "2",
             "--seed", "9", "--out-dir", str(out)],
        )
        assert result.exit_code == 0
        redo = tmp_path / "session-redo"
        result = runner.invoke(
            main,
            ["rerun", "--manifest", str(out / "manifest.json"), "--out-dir", str(redo)],
        )
        assert result.exit_code == 0, result.output
        assert self._hashes(out) == self._hashes(redo)

    def test_unknown_subcommand_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"subcommand": "nope", "params": {}}))
        result = runner.invoke(
            main, ["rerun", "--manifest", str(bad), "--out-dir", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
