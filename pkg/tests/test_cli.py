import json
import os

import numpy as np
import pytest

from abpsim.cli import main
from abpsim.io import CSV_SCHEMA, read_csv

RUN = """model:
  potential: {preset: double_well1d}
  x0: [0.5]
sim: {seed: 3, replicas: 2, checkpoints: [1, 2]}
t_final: 3
"""


def write(tmp_path, text, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def body(path):
    with open(path) as fh:
        return "".join(line for line in fh if not line.startswith("#"))


class TestRun:
    def test_outputs_and_header(self, tmp_path):
        cfg = write(tmp_path, RUN)
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
        meta, cols, data = read_csv(tmp_path / "o" / "run_timeseries.csv")
        assert CSV_SCHEMA in meta[0] and "seed: 3" in meta[1] and "config:" in meta[2]
        assert cols[:2] == ["replica", "t"]
        assert data.shape == (6, len(cols))
        summary = json.loads((tmp_path / "o" / "run_summary.json").read_text())
        assert summary["seed"] == 3 and summary["config"]["sim"]["t_final"] == 3.0
        assert len(summary["replicas"]) == 2

    def test_byte_identical_bodies(self, tmp_path):
        cfg = write(tmp_path, RUN)
        main(["run", cfg, "--out", str(tmp_path / "a")])
        main(["run", cfg, "--out", str(tmp_path / "b")])
        for name in ("run_timeseries.csv", "run_bias.csv"):
            assert body(tmp_path / "a" / name) == body(tmp_path / "b" / name)

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, RUN)
        main(["run", cfg, "--out", str(tmp_path / "a")])
        main(["run", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
        assert body(tmp_path / "a" / "run_timeseries.csv") != \
            body(tmp_path / "b" / "run_timeseries.csv")

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ABPSIM_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["run", write(tmp_path, RUN)]) == 0
        assert (tmp_path / "env" / "run_summary.json").exists()

    def test_no_temp_files_left(self, tmp_path):
        main(["run", write(tmp_path, RUN), "--out", str(tmp_path / "o")])
        assert not [f for f in os.listdir(tmp_path / "o") if f.startswith(".tmp")]


class TestOtherCommands:
    def test_fixed_bias_from_file(self, tmp_path):
        cfg = write(tmp_path, RUN)
        main(["run", cfg, "--out", str(tmp_path / "a")])
        text = RUN + f"fixed_bias: {{source: file, path: {tmp_path / 'a' / 'run_bias.csv'}}}\n"
        assert main(["run-fixed-bias", write(tmp_path, text, "f.yaml"),
                     "--out", str(tmp_path / "f")]) == 0
        summary = json.loads((tmp_path / "f" / "run_summary.json").read_text())
        assert summary["fixed_bias_source"] == "file"

    def test_variance_table(self, tmp_path):
        text = RUN.replace("replicas: 2", "replicas: 8")
        assert main(["variance", write(tmp_path, text), "--out", str(tmp_path / "v")]) == 0
        _, cols, data = read_csv(tmp_path / "v" / "run_variance.csv")
        assert cols == ["t", "mean", "var", "t_var", "ci_low", "ci_high", "bias"]
        assert np.all(data[:, cols.index("ci_low")] <= data[:, cols.index("t_var")])
        summary = json.loads((tmp_path / "v" / "run_variance_summary.json").read_text())
        assert summary["V_inf_oracle"] == pytest.approx(0.0030647552178017803, rel=1e-9)

    def test_oracle_tables_normalized(self, tmp_path):
        assert main(["oracle", "--preset", "bessel1d", "--out", str(tmp_path)]) == 0
        _, cols, data = read_csv(tmp_path / "oracle_bessel1d_tables.csv")
        for c in ("density_A_star", "density_A_inf"):
            assert data[:, cols.index(c)].mean() == pytest.approx(1.0, abs=1e-10)
        z = data[:, 0]
        np.testing.assert_allclose(data[:, cols.index("A_star")],
                                   np.cos(2 * np.pi * z) + 0.2359143585, atol=1e-8)

    def test_spde_run(self, tmp_path):
        text = "spde: {nonlinearity: none}\nt_final: 1\n"
        assert main(["spde-run", write(tmp_path, text), "--out", str(tmp_path / "s")]) == 0
        summary = json.loads((tmp_path / "s" / "run_summary.json").read_text())
        assert len(summary["mode_variances"][0]) == 4

    def test_check_subset(self, tmp_path, capsys):
        assert main(["check", "--criteria", "1", "--out", str(tmp_path)]) == 0
        assert "[PASS] criterion 1" in capsys.readouterr().out
        report = json.loads((tmp_path / "acceptance.json").read_text())
        assert report["results"][0]["passed"] is True


class TestExitCodes:
    def failure(self, capsys):
        return json.loads(capsys.readouterr().err.strip().splitlines()[-1])

    def test_config_error(self, tmp_path, capsys):
        cfg = write(tmp_path, RUN + "kernel: {alpha: 1.5}\n")
        assert main(["run", cfg, "--out", str(tmp_path)]) == 2
        rec = self.failure(capsys)
        assert rec["error"] == "ConfigError" and rec["key"] == "kernel.alpha"

    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.yaml")]) == 2

    def test_blowup(self, tmp_path, capsys):
        text = ("model:\n  potential: {preset: ou}\n  x0: [1.0]\n"
                "sim: {dt: 3.0}\nt_final: 9000\nfixed_bias: {source: zero}\n")
        assert main(["run-fixed-bias", write(tmp_path, text), "--out", str(tmp_path)]) == 3
        rec = self.failure(capsys)
        assert rec["error"] == "ReplicaFailure"

    def test_unknown_criterion(self, capsys):
        assert main(["check", "--criteria", "42"]) == 2

    def test_acceptance_failure(self, tmp_path, monkeypatch, capsys):
        from abpsim import acceptance

        def failing():
            return acceptance.CriterionResult(1, "forced", False, {})
        monkeypatch.setitem(acceptance.CRITERIA, 1, failing)
        assert main(["check", "--criteria", "1", "--out", str(tmp_path)]) == 4
        assert self.failure(capsys)["criteria"] == [1]
