"""End-to-end command tests; training profiles are kept tiny."""
from __future__ import annotations

import numpy as np
import pytest

from dib import cli
from dib.miest import BenchRow
from dib.textio import read_csv, read_flat_config

XOR_CIRC = "inputs 2\ng1 = XOR x1 x2\nout g1\n"


def run_cli(*argv) -> int:
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def xor_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("specs") / "xor.circ"
    path.write_text(XOR_CIRC)
    return path


@pytest.fixture(scope="module")
def circuit_run(tmp_path_factory, xor_file):
    """One tiny trained circuit run shared by the read-only tests."""
    out = tmp_path_factory.mktemp("runs") / "c1"
    rc = run_cli("circuit", "--spec", str(xor_file), "--out", str(out),
                 "--steps", "40", "--beta-start", "1e-3", "--beta-end",
                 "1e-3", "--seed", "7", "--K", "64", "--B", "4")
    assert rc == 0
    return out


class TestCircuitCommand:
    def test_artifacts_present(self, circuit_run):
        for name in ("config.toml", "meta.txt", "circuit.circ", "log.csv",
                     "measure.csv", "plane.csv", "alloc.csv", "subsets.csv"):
            assert (circuit_run / name).exists(), name
        assert any((circuit_run / "ckpt").iterdir())

    def test_circuit_copy_is_canonical(self, circuit_run):
        assert (circuit_run / "circuit.circ").read_text() == XOR_CIRC

    def test_meta_records_protocol(self, circuit_run):
        meta = read_flat_config(circuit_run / "meta.txt")
        assert meta["kind"] == "circuit"
        assert meta["k"] == 64
        assert meta["n_batches"] == 4
        assert meta["measure_seed"] == 8

    def test_alloc_labels_are_input_names(self, circuit_run):
        header, _ = read_csv(circuit_run / "alloc.csv")
        assert header == ["beta", "total_bits", "x1_bits", "x2_bits"]

    def test_subsets_cover_the_powerset(self, circuit_run):
        _, rows = read_csv(circuit_run / "subsets.csv")
        assert len(rows) == 4

    def test_effective_config_is_printed(self, xor_file, tmp_path, capsys):
        rc = run_cli("circuit", "--spec", str(xor_file), "--out",
                     str(tmp_path / "c"), "--steps", "5", "--beta-start",
                     "0.01", "--beta-end", "0.01", "--K", "32", "--B", "2")
        assert rc == 0
        text = capsys.readouterr().out
        assert "kind = circuit" in text
        assert "beta_start = 0.01" in text
        assert "steps = 5" in text
        assert "k = 32" in text

    def test_refuses_non_empty_out(self, circuit_run, capsys):
        rc = run_cli("circuit", "--out", str(circuit_run), "--steps", "5")
        assert rc == 2
        assert "--force" in capsys.readouterr().err

    def test_force_overwrites(self, xor_file, tmp_path):
        out = tmp_path / "c"
        argv = ("circuit", "--spec", str(xor_file), "--out", str(out),
                "--steps", "5", "--beta-start", "0.01", "--beta-end", "0.01",
                "--K", "32", "--B", "2")
        assert run_cli(*argv) == 0
        assert run_cli(*argv) == 2
        assert run_cli(*argv, "--force") == 0

    def test_reruns_are_byte_identical(self, xor_file, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = run_cli("circuit", "--spec", str(xor_file), "--out",
                         str(out), "--steps", "30", "--beta-start", "1e-3",
                         "--beta-end", "1e-3", "--seed", "3", "--K", "64",
                         "--B", "2")
            assert rc == 0
            outs.append(out)
        for name in ("log.csv", "measure.csv", "plane.csv", "alloc.csv",
                     "subsets.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_missing_out_rejected(self, xor_file, capsys):
        rc = run_cli("circuit", "--spec", str(xor_file))
        assert rc == 2
        assert "--out" in capsys.readouterr().err

    def test_invalid_spec_gives_line_diagnostics(self, tmp_path, capsys):
        bad = tmp_path / "bad.circ"
        bad.write_text("inputs 2\ng1 = NAND x1 x2\nout g1\n")
        rc = run_cli("circuit", "--spec", str(bad), "--out",
                     str(tmp_path / "out"))
        assert rc == 2
        assert "bad.circ:2" in capsys.readouterr().err

    def test_missing_spec_file(self, tmp_path, capsys):
        rc = run_cli("circuit", "--spec", str(tmp_path / "nope.circ"),
                     "--out", str(tmp_path / "out"))
        assert rc == 2

    def test_unknown_config_key_rejected(self, xor_file, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("learning_rte = 0.1\n")
        rc = run_cli("circuit", "--spec", str(xor_file), "--config",
                     str(cfg), "--out", str(tmp_path / "out"))
        assert rc == 2
        assert "learning_rte" in capsys.readouterr().err

    def test_n_channels_not_settable(self, xor_file, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("n_channels = 3\n")
        rc = run_cli("circuit", "--spec", str(xor_file), "--config",
                     str(cfg), "--out", str(tmp_path / "out"))
        assert rc == 2
        assert "derived" in capsys.readouterr().err


class TestReportCommand:
    def test_report_reproduces_measurement(self, circuit_run):
        before = (circuit_run / "measure.csv").read_bytes()
        assert run_cli("report", str(circuit_run)) == 0
        assert (circuit_run / "measure.csv").read_bytes() == before

    def test_measure_only_alias(self, circuit_run):
        before = (circuit_run / "plane.csv").read_bytes()
        rc = run_cli("circuit", "--measure-only", str(circuit_run))
        assert rc == 0
        assert (circuit_run / "plane.csv").read_bytes() == before

    def test_kind_mismatch(self, circuit_run, capsys):
        rc = run_cli("glass", "--measure-only", str(circuit_run))
        assert rc == 2
        assert "circuit" in capsys.readouterr().err

    def test_not_a_run_dir(self, tmp_path, capsys):
        rc = run_cli("report", str(tmp_path))
        assert rc == 2
        assert "meta.txt" in capsys.readouterr().err

    def test_data_override_rejected_for_circuits(self, circuit_run, capsys):
        rc = run_cli("report", str(circuit_run), "--data", "whatever")
        assert rc == 2


@pytest.fixture(scope="module")
def glass_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "g1"
    cfg = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    cfg.write_text("synth_n = 80\n"
                   "batch_size = 16\n"
                   "latent_dim = 4\n"
                   "encoder_hidden = 8\n"
                   "decoder_hidden = 16\n"
                   "n_checkpoints = 6\n"
                   "k = 64\n"
                   "n_batches = 2\n")
    rc = run_cli("glass", "--data", "synth", "--config", str(cfg), "--out",
                 str(out), "--steps", "30", "--seed", "11")
    assert rc == 0
    return out


class TestGlassCommand:
    def test_artifacts_present(self, glass_run):
        for name in ("config.toml", "meta.txt", "norm.json", "baseline.txt",
                     "log.csv", "measure.csv", "plane.csv", "alloc.csv"):
            assert (glass_run / name).exists(), name
        assert list(glass_run.glob("disting_*.csv"))

    def test_meta_records_synth_source(self, glass_run):
        meta = read_flat_config(glass_run / "meta.txt")
        assert meta["kind"] == "glass"
        assert meta["data"] == "synth"
        assert meta["synth_n"] == 80
        assert meta["data_seed"] == 11

    def test_baseline_recorded(self, glass_run):
        base = read_flat_config(glass_run / "baseline.txt")
        assert 0.0 <= base["baseline_accuracy"] <= 1.0

    def test_alloc_labels_are_feature_names(self, glass_run):
        header, _ = read_csv(glass_run / "alloc.csv")
        assert header[2].startswith("A_r")

    def test_channel_count_follows_features(self, glass_run):
        header, _ = read_csv(glass_run / "measure.csv")
        n = (len(header) - 4) // 2
        assert n == 100

    def test_measure_only_is_byte_identical(self, glass_run):
        before = (glass_run / "measure.csv").read_bytes()
        rc = run_cli("glass", "--measure-only", str(glass_run))
        assert rc == 0
        assert (glass_run / "measure.csv").read_bytes() == before

    def test_requires_data_source(self, tmp_path, capsys):
        rc = run_cli("glass", "--out", str(tmp_path / "g"))
        assert rc == 2
        assert "--data" in capsys.readouterr().err

    def test_bad_dataset_reports_line(self, tmp_path, capsys):
        data = tmp_path / "bad.xyz"
        data.write_text("N 1 A 0\n1.0 2.0 C\n")
        rc = run_cli("glass", "--data", str(data), "--out",
                     str(tmp_path / "g"))
        assert rc == 2
        assert "bad.xyz:2" in capsys.readouterr().err


def fake_rows(violate=False):
    up = 0.4 if violate else 1.05
    return [BenchRow(h_bits=1, d=2.0, k=64, n_batches=4, lower_bits=0.9,
                     lower_std=0.01, upper_bits=up, upper_std=0.01,
                     mc_bits=1.0, mc_stderr=0.005)]


class TestMiBenchCommand:
    def test_writes_csv_and_reports_consistency(self, tmp_path, monkeypatch,
                                                capsys):
        monkeypatch.setattr(cli, "bench_orthogonal",
                            lambda n_batches, rng: fake_rows())
        rc = run_cli("mi-bench", "--out", str(tmp_path / "b"))
        assert rc == 0
        header, rows = read_csv(tmp_path / "b" / "bench.csv")
        assert header[0] == "H_bits"
        assert len(rows) == 1
        assert "1/1 rows consistent" in capsys.readouterr().out

    def test_sandwich_violation_fails(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(cli, "bench_orthogonal",
                            lambda n_batches, rng: fake_rows(violate=True))
        rc = run_cli("mi-bench", "--out", str(tmp_path / "b"))
        assert rc == 1
        assert "violated" in capsys.readouterr().err

    def test_quick_shrinks_batches(self, tmp_path, monkeypatch):
        seen = {}

        def spy(n_batches, rng):
            seen["b"] = n_batches
            return fake_rows()

        monkeypatch.setattr(cli, "bench_orthogonal", spy)
        assert run_cli("mi-bench", "--quick", "--out",
                       str(tmp_path / "b")) == 0
        assert seen["b"] == 32

    def test_default_batches(self, tmp_path, monkeypatch):
        seen = {}

        def spy(n_batches, rng):
            seen["b"] = n_batches
            return fake_rows()

        monkeypatch.setattr(cli, "bench_orthogonal", spy)
        assert run_cli("mi-bench", "--out", str(tmp_path / "b")) == 0
        assert seen["b"] == 256


class TestParser:
    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("frobnicate")
        assert exc.value.code == 2

    def test_no_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run_cli()
        assert exc.value.code == 2
