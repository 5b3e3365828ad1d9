import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from mapcfo import (
    ChannelPrior,
    MimoConfig,
    make_periodic_pilot,
    read_complex_csv,
    sample_channel,
    synthesize_frame,
    write_complex_csv,
)
from mapcfo.cli import main

pytestmark = pytest.mark.usefixtures("in_tmp_path")


@pytest.fixture
def in_tmp_path(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("MAPCFO_SEED", raising=False)
    return tmp_path


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


class TestGenPilot:
    def test_periodic_example_matrix(self):
        assert main(["gen-pilot", "--pilot", "periodic", "--lt", "3", "--m", "2",
                     "--out", "p.csv"]) == 0
        entries = read_complex_csv("p.csv")
        assert np.array_equal(entries, np.vstack([np.eye(3), np.eye(3)]))

    def test_td_single_antenna(self):
        assert main(["gen-pilot", "--pilot", "td", "--lt", "1", "--m", "4",
                     "--out", "p.csv"]) == 0
        assert np.array_equal(read_complex_csv("p.csv"), np.ones((4, 1)))

    def test_layout_flag_alias(self):
        assert main(["gen-pilot", "--layout", "periodic", "--lt", "3", "--m", "2",
                     "--out", "p.csv"]) == 0
        assert np.array_equal(read_complex_csv("p.csv"), np.vstack([np.eye(3), np.eye(3)]))

    def test_combined_gram(self):
        assert main(["gen-pilot", "--pilot", "combined", "--head", "8", "--tail", "8",
                     "--lt", "2", "--out", "p.csv"]) == 0
        s = read_complex_csv("p.csv")
        assert s.shape == (16, 2)
        assert np.abs(s.conj().T @ s - 8 * np.eye(2)).max() < 1e-12

    def test_manifest_written(self):
        main(["gen-pilot", "--pilot", "td", "--lt", "2", "--m", "4", "--out", "p.csv"])
        manifest = json.load(open("p.csv.manifest.json"))
        assert manifest["command"] == "gen-pilot"
        assert manifest["config"]["lt"] == 2

    def test_bad_dimensions_exit_2(self, capsys):
        assert main(["gen-pilot", "--pilot", "periodic", "--lt", "3", "--n", "7",
                     "--out", "p.csv"]) == 2
        assert "multiple" in capsys.readouterr().err


class TestBounds:
    def test_table_rows_and_ratio(self):
        assert main(["bounds", "--pilot", "periodic", "--n", "16", "--lt", "2",
                     "--lr", "2", "--snr-db", "0:35:5", "--cfo-var", "1e-5",
                     "--out", "bp.csv", "--no-plot"]) == 0
        assert main(["bounds", "--pilot", "td", "--n", "16", "--lt", "2",
                     "--lr", "2", "--snr-db", "0:35:5", "--cfo-var", "1e-5",
                     "--out", "bt.csv", "--no-plot"]) == 0
        rows_p = open("bp.csv").read().strip().splitlines()
        rows_t = open("bt.csv").read().strip().splitlines()
        assert rows_p[0] == "pilot_kind,n,lt,lr,snr_db,beta,crlb,bcrlb"
        assert len(rows_p) == 8  # header + 7 SNR points
        for line_p, line_t in zip(rows_p[1:], rows_t[1:]):
            crlb_p = float(line_p.split(",")[6])
            crlb_t = float(line_t.split(",")[6])
            assert crlb_t / crlb_p == pytest.approx(4.0, rel=1e-12)

    def test_flat_prior_collapses_columns(self):
        assert main(["bounds", "--pilot", "periodic", "--n", "16", "--lt", "2",
                     "--lr", "2", "--snr-db", "10", "--cfo-var", "inf",
                     "--out", "b.csv", "--no-plot"]) == 0
        line = open("b.csv").read().strip().splitlines()[1].split(",")
        assert line[6] == line[7]

    def test_plot_rendered_by_default(self):
        assert main(["bounds", "--pilot", "periodic", "--n", "8", "--lt", "2",
                     "--lr", "2", "--snr-db", "0,10", "--out", "b.csv"]) == 0
        import os

        assert os.path.exists("b.png")


class TestSimulate:
    BASE = ["simulate", "snr", "--pilot", "periodic", "--lt", "2", "--lr", "2",
            "--n", "16", "--snr-db", "0,10", "--trials", "40", "--seed", "7",
            "--no-plot"]

    def test_repeat_runs_are_byte_identical(self):
        assert main(self.BASE + ["--out", "a.csv", "--threads", "1"]) == 0
        assert main(self.BASE + ["--out", "b.csv", "--threads", "1"]) == 0
        assert sha("a.csv") == sha("b.csv")

    def test_thread_count_does_not_change_bytes(self):
        assert main(self.BASE + ["--out", "t1.csv", "--threads", "1"]) == 0
        assert main(self.BASE + ["--out", "t2.csv", "--threads", "2"]) == 0
        assert sha("t1.csv") == sha("t2.csv")

    def test_manifest_replay_is_bit_exact(self):
        assert main(self.BASE + ["--out", "a.csv", "--threads", "1"]) == 0
        digest = sha("a.csv")
        assert main(["--from-manifest", "a.csv.manifest.json"]) == 0
        assert sha("a.csv") == digest

    def test_range_variant(self):
        assert main(["simulate", "range", "--pilot", "td", "--lt", "2", "--lr", "2",
                     "--n", "16", "--snr-db", "20", "--cfo", "-0.1:0.2:0.1",
                     "--cfo-mean", "0", "--trials", "30", "--seed", "3",
                     "--out", "r.csv", "--no-plot"]) == 0
        lines = open("r.csv").read().strip().splitlines()
        xs = [float(l.split(",")[0]) for l in lines[1:]]
        assert xs == [-0.1, 0.0, 0.1]

    def test_track_variant_writes_derived_bounds(self):
        assert main(["simulate", "track", "--pilot", "periodic", "--lt", "2",
                     "--lr", "2", "--n", "16", "--snr-db", "10", "--ar-rho", "0.9",
                     "--ar-mean", "0.1", "--ar-noise-var", "1e-8", "--frames", "3",
                     "--runs", "5", "--seed", "2", "--out", "tr.csv",
                     "--no-plot"]) == 0
        manifest = json.load(open("tr.csv.manifest.json"))
        derived = manifest["derived"]
        assert derived["idealized_stationary_bcrlb"] < derived["recursion_fixed_point_bcrlb"]

    def test_plot_written_by_default(self):
        assert main(self.BASE[:-1] + ["--out", "p.csv", "--threads", "1"]) == 0
        import os

        assert os.path.exists("p.png")

    def test_missing_cfo_grid_exit_2(self):
        assert main(["simulate", "range", "--pilot", "td", "--lt", "2", "--lr", "2",
                     "--n", "16", "--out", "r.csv"]) == 2


class TestEstimate:
    def write_frame(self, f_delta, snr_db=20.0, noise=1.0, seed=5):
        rho = 10 ** (snr_db / 10)
        pilot = make_periodic_pilot(MimoConfig(2, 1, 16), m=8, power=rho)
        prior = ChannelPrior.iid(1.0, 2, 2)
        h = sample_channel(prior, seed)
        frame = synthesize_frame(pilot, h, f_delta, noise, seed + 1)
        write_complex_csv(frame.samples, "frame.csv")
        return rho

    def test_noiseless_round_trip(self, capsys):
        rho = self.write_frame(0.0123, noise=0.0)
        assert main(["estimate", "--frame", "frame.csv", "--pilot", "periodic",
                     "--lt", "2", "--m", "8", "--power", str(rho),
                     "--cfo-var", "inf", "--out", "rep.csv"]) == 0
        report = dict(
            line.split(" = ", 1) for line in capsys.readouterr().out.strip().splitlines()
        )
        assert abs(float(report["f_hat"]) - 0.0123) < 1e-9

    def test_ml_flag_equals_flat_variance(self, capsys):
        rho = self.write_frame(0.015)
        args = ["estimate", "--frame", "frame.csv", "--pilot", "periodic", "--lt", "2",
                "--m", "8", "--power", str(rho)]
        assert main(args + ["--mode", "ml"]) == 0
        out_ml = capsys.readouterr().out
        assert main(args + ["--mode", "map", "--cfo-var", "inf"]) == 0
        out_flat = capsys.readouterr().out
        assert out_ml == out_flat

    def test_oracle_gap_small_at_high_snr(self, capsys):
        rho = self.write_frame(0.008)
        assert main(["estimate", "--frame", "frame.csv", "--pilot", "periodic",
                     "--lt", "2", "--m", "8", "--power", str(rho), "--cfo-mean", "0.01",
                     "--cfo-var", "1e-5", "--oracle", "--oracle-step", "1e-5"]) == 0
        report = dict(
            line.split(" = ", 1) for line in capsys.readouterr().out.strip().splitlines()
        )
        assert float(report["oracle_gap"]) <= 2e-5

    def test_zero_frame_exits_3(self):
        write_complex_csv(np.zeros((16, 2)), "frame.csv")
        assert main(["estimate", "--frame", "frame.csv", "--pilot", "periodic",
                     "--lt", "2", "--m", "8", "--mode", "ml"]) == 3


class TestConfigResolution:
    def test_config_file_supplies_values_flags_override(self):
        with open("run.cfg", "w") as fh:
            fh.write("# sweep defaults\nlt = 2\nn = 16\ntrials = 25\nseed = 9\n")
        assert main(["simulate", "snr", "--config", "run.cfg", "--pilot", "periodic",
                     "--lr", "2", "--snr-db", "10", "--trials", "30",
                     "--out", "c.csv", "--no-plot", "--threads", "1"]) == 0
        manifest = json.load(open("c.csv.manifest.json"))
        assert manifest["config"]["trials"] == 30  # flag wins
        assert manifest["config"]["seed"] == 9  # file fills the gap

    def test_env_var_seed_default(self, monkeypatch):
        monkeypatch.setenv("MAPCFO_SEED", "41")
        assert main(["gen-pilot", "--pilot", "td", "--lt", "2", "--m", "4",
                     "--out", "p.csv"]) == 0
        manifest = json.load(open("p.csv.manifest.json"))
        assert manifest["master_seed"] == 41

    def test_console_script_entry_point(self):
        out = subprocess.run(
            [sys.executable, "-m", "mapcfo.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0
        assert "mapcfo" in out.stdout
