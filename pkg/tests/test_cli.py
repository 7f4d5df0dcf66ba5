"""End-to-end command-line runs on tiny configurations."""
import json
import subprocess
import sys

import numpy as np
import pytest

from breathmodel import cli, formats
from breathmodel.trainer import load_bundle

SMALL = ["--set", "synth.num_samples=150", "--set", "train.epochs=2", "--set", "train.batch_size=32",
         "--set", "train.latent_dim=2"]


def run(*argv):
    return cli.run([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    run("synth", "--out-dir", out, "--seed", 3, "--set", "run.markers=true", "--set", "synth.num_samples=150")
    return out


@pytest.fixture(scope="module")
def saae_dir(tmp_path_factory, synth_dir):
    out = tmp_path_factory.mktemp("saae")
    run("train", "--out-dir", out, "--dataset", synth_dir / "dataset.csv", "--variant", "saae",
        "--set", "run.n_labels=30", *SMALL)
    return out


class TestConfig:
    def test_resolved_round_trip(self):
        rc = cli.RunConfig({"train.epochs": 7, "synth.slope_classes": ((-2.0, -1.0), (0.0, 0.0))})
        back = cli.RunConfig.from_text(rc.text())
        assert back.values == rc.values

    def test_unknown_key(self):
        with pytest.raises(cli.ConfigError):
            cli.RunConfig({"train.momentum": 0.9})

    def test_bad_value(self):
        with pytest.raises(cli.ConfigError):
            cli.RunConfig().set("train.epochs", "many")

    def test_seed_flag_sets_both(self):
        args = cli.build_parser().parse_args(["synth", "--seed", "9"])
        rc = cli.resolve_config(args)
        assert rc["synth.seed"] == rc["train.seed"] == 9

    def test_classes_flag(self):
        rc = cli.resolve_config(cli.build_parser().parse_args(["synth", "--classes", "5"]))
        assert len(rc["synth.slope_classes"]) == 5
        rc.synth()  # validates non-overlap

    def test_synthetic_thresholds_midpoints(self):
        th = cli.synthetic_thresholds(cli.SynthConfig())
        r = sorted(cli.SynthConfig().slope_classes)
        assert th.lower == pytest.approx((r[0][1] + r[1][0]) / 2)
        assert th.upper == pytest.approx((r[1][1] + r[2][0]) / 2)


class TestPipeline:
    def test_synth_outputs(self, synth_dir):
        names = {p.name for p in synth_dir.iterdir()}
        assert {"dataset.csv", "config.resolved", "manifest.json", "result.json", "thresholds.json",
                "markers.csv"} <= names
        ds = formats.read_dataset(synth_dir / "dataset.csv")
        assert ds.x.shape == (150, 25, 6) and ds.num_classes == 3

    def test_preprocess_markers(self, synth_dir, tmp_path):
        res = run("preprocess", "--out-dir", tmp_path, "--input", synth_dir / "markers.csv",
                  "--set", "preprocess.stride=25")
        ds = formats.read_dataset(tmp_path / "dataset.csv")
        assert res["variance_retained"] >= 0.95
        assert len(ds) == res["n_vectors"] >= 1
        assert set(np.unique(ds.labels)) <= {0, 1, 2}

    def test_train_saae(self, saae_dir):
        res = json.loads((saae_dir / "result.json").read_text())
        assert res["epochs_run"] == 2 and 0.0 <= res["test_mf1"] <= 1.0
        b = load_bundle(saae_dir / "bundle.bin")
        assert b.variant == "saae" and b.thresholds is not None
        assert b.meta["class_names"] is None or len(b.meta["class_names"]) == 3
        assert (saae_dir / "training_log.csv").exists() and (saae_dir / "test.csv").exists()

    def test_generate_class(self, saae_dir, tmp_path):
        res = run("generate", "--out-dir", tmp_path, "--bundle", saae_dir / "bundle.bin", "-n", 12, "--class", 2)
        ds = formats.read_dataset(tmp_path / "generated.csv")
        np.testing.assert_array_equal(ds.labels, 2)
        assert 0.0 <= res["relabel_agreement"] <= 1.0
        assert len(list(tmp_path.glob("series_*.csv"))) == 3

    def test_generate_unknown_class(self, saae_dir, tmp_path):
        with pytest.raises(cli.ConfigError):
            run("generate", "--out-dir", tmp_path, "--bundle", saae_dir / "bundle.bin", "--class", "sideways")

    def test_classify(self, saae_dir, tmp_path):
        res = run("classify", "--out-dir", tmp_path, "--bundle", saae_dir / "bundle.bin",
                  "--dataset", saae_dir / "test.csv")
        lines = (tmp_path / "predictions.csv").read_text().splitlines()
        assert lines[0].startswith("source_id,label,predicted,p_0")
        assert 0.0 <= res["mf1"] <= 1.0

    @pytest.mark.parametrize("protocol", ["mf1", "latent", "recon", "grid"])
    def test_eval_protocols(self, saae_dir, tmp_path, protocol):
        res = run("eval", "--out-dir", tmp_path, "--bundle", saae_dir / "bundle.bin",
                  "--dataset", saae_dir / "test.csv", "--protocol", protocol)
        assert res.get("protocol", protocol) == protocol
        if protocol == "latent":
            assert (tmp_path / "hist_norm_prior.csv").exists() and (tmp_path / "plot.py").exists()
        if protocol == "grid":
            assert res["grid_points"] == 625

    def test_train_classifier_and_vae(self, synth_dir, tmp_path):
        for variant in ("classifier", "vae"):
            out = tmp_path / variant
            res = run("train", "--out-dir", out, "--dataset", synth_dir / "dataset.csv", "--variant", variant,
                      "--set", "run.n_labels=30", *SMALL)
            assert load_bundle(out / "bundle.bin").variant == variant
            assert ("test_mf1" in res) == (variant == "classifier")

    def test_binary_dataset(self, tmp_path):
        run("synth", "--out-dir", tmp_path, "--set", "run.binary=true", "--set", "synth.num_samples=20")
        assert formats.read_dataset(tmp_path / "dataset.bin").x.shape == (20, 25, 6)


@pytest.fixture(scope="module")
def recon_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("recon")
    run("repro", "recon", "--out-dir", out, "--set", "run.recon_sources=2", "--set", "run.recon_periods=40",
        "--set", "run.recon_epochs=2")
    return out


class TestRecon:
    def test_report(self, recon_dir):
        rows = (recon_dir / "eval_report.csv").read_text().splitlines()
        assert rows[0] == "model,l1"
        assert [r.split(",")[0] for r in rows[1:]] == ["interpolation", "patbr-0", "popbr"]

    def test_reconstruct_command(self, recon_dir, saae_dir, tmp_path):
        res = run("reconstruct", "--out-dir", tmp_path, "--bundle", recon_dir / "bundle.bin",
                  "--dataset", saae_dir / "test.csv", "--set", "run.n_series=2")
        assert res["series"] == ["series_0000.csv", "series_0001.csv"]
        t, v = formats.read_series_csv(tmp_path / "series_0000.csv")
        assert len(t) == len(v) > 120 and np.all(np.isfinite(v))

    def test_reconstruct_needs_recon_bundle(self, saae_dir, tmp_path):
        with pytest.raises(cli.ConfigError):
            run("reconstruct", "--out-dir", tmp_path, "--bundle", saae_dir / "bundle.bin",
                "--dataset", saae_dir / "test.csv")


class TestDeterminism:
    def _files(self, out):
        return json.loads((out / "manifest.json").read_text())["files"]

    def test_train_rerun_bit_identical(self, synth_dir, tmp_path):
        argv = ["train", "--dataset", synth_dir / "dataset.csv", "--variant", "saae", "--set", "run.n_labels=30",
                *SMALL]
        run(*argv, "--out-dir", tmp_path / "a")
        run(*argv, "--out-dir", tmp_path / "b")
        assert self._files(tmp_path / "a") == self._files(tmp_path / "b")

    def test_rerun_from_resolved_config(self, synth_dir, tmp_path):
        run("synth", "--out-dir", tmp_path / "a", "--seed", 11, "--set", "synth.num_samples=30")
        run("synth", "--out-dir", tmp_path / "b", "--config", tmp_path / "a" / "config.resolved")
        assert self._files(tmp_path / "a") == self._files(tmp_path / "b")

    def test_seed_changes_output(self, tmp_path):
        run("synth", "--out-dir", tmp_path / "a", "--seed", 1, "--set", "synth.num_samples=10")
        run("synth", "--out-dir", tmp_path / "b", "--seed", 2, "--set", "synth.num_samples=10")
        assert self._files(tmp_path / "a")["dataset.csv"] != self._files(tmp_path / "b")["dataset.csv"]


class TestErrors:
    def _main(self, *argv, capsys):
        code = cli.main([str(a) for a in argv])
        return code, capsys.readouterr()

    def test_missing_dataset(self, tmp_path, capsys):
        code, cap = self._main("train", "--out-dir", tmp_path, "--dataset", tmp_path / "nope.csv", capsys=capsys)
        assert code == 1
        assert json.loads(cap.err)["error"] == "missing-file"

    def test_bad_config_exit_2(self, tmp_path, capsys):
        code, cap = self._main("synth", "--out-dir", tmp_path, "--set", "synth.bogus=1", capsys=capsys)
        assert code == 2
        assert json.loads(cap.err)["error"] == "config"

    def test_success_prints_json(self, tmp_path, capsys):
        code, cap = self._main("synth", "--out-dir", tmp_path, "--set", "synth.num_samples=5", capsys=capsys)
        assert code == 0 and "dataset_sha256" in json.loads(cap.out)

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "breathmodel", "synth", "--out-dir", str(tmp_path),
                               "--set", "synth.num_samples=3"], capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "dataset.csv").exists()

    def test_env_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
        run("synth", "--set", "synth.num_samples=3")
        assert (tmp_path / "synth" / "dataset.csv").exists()
