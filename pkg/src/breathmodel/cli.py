"""Command-line entry point: ``breathmodel <command> [flags]``.

Every command resolves one flat ``key=value`` configuration (defaults, then
``--config`` file, then flags), writes it as ``config.resolved`` next to its
outputs, and is a pure function of its inputs and that configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import formats
from . import models as M
from .dataset import LabeledDataset, split_indices, stratified_label_subset
from .errors import BreathModelError, ConfigError, SchemaError
from .synth import SynthConfig

OUTPUT_ROOT_ENV = "BREATHMODEL_OUTPUT_ROOT"
COMMANDS = ("synth", "preprocess", "train", "generate", "classify", "reconstruct", "eval", "repro")
VARIANTS = ("vae", "aae", "saae", "classifier")
PROTOCOLS = ("mf1", "recon", "cas", "distinguish", "latent", "grid")

RUN_DEFAULTS = {
    "run.variant": "saae",
    "run.classifier": "cnn",
    "run.n_labels": 0,
    "run.test_fraction": 0.1,
    "run.binary": False,
    "run.n_generate": 1000,
    "run.class": "",
    "run.n_series": 3,
    "run.protocol": "mf1",
    "run.cas_generated": 3000,
    "run.cas_repeats": 3,
    "run.cas_epochs": 30,
    "run.latent_points": 10000,
    "run.markers": False,
    "run.recon_sources": 5,
    "run.recon_periods": 150,
    "run.recon_epochs": 200,
    "run.recon_fraction": 1.0,
    "preprocess.n_t": 25,
    "preprocess.stride": 5,
    "preprocess.percentile": 0.075,
    "preprocess.sample_rate": 26.0,
}

REPRO_PRESETS = {
    "s1": {"synth.vary_period_amplitude": False, "synth.num_samples": 30000, "run.n_labels": 300,
           "run.variant": "saae", "train.latent_dim": 15},
    "s2": {"synth.vary_period_amplitude": True, "synth.num_samples": 37500, "run.n_labels": 1500,
           "run.variant": "saae", "train.latent_dim": 15},
    "recon": {},
}


def _defaults() -> dict:
    from .trainer import TrainConfig

    out = {f"synth.{f.name}": getattr(SynthConfig(), f.name) for f in fields(SynthConfig)}
    out.update({f"train.{f.name}": getattr(TrainConfig(), f.name) for f in fields(TrainConfig)})
    out.update(RUN_DEFAULTS)
    return out


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(":".join(repr(float(v)) for v in r) for r in value)
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(key: str, text: str, default):
    text = text.strip()
    try:
        if text.lower() == "none":
            return None
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or (default is None and key.startswith("train.lr")):
            return float(text)
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                return tuple(tuple(float(v) for v in part.split(":")) for part in text.split(","))
            return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


class RunConfig:
    """Flat, fully resolved key/value configuration."""

    def __init__(self, values: dict | None = None):
        self.defaults = _defaults()
        self.values = dict(self.defaults)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key, value):
        if key not in self.defaults:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse(key, value, self.defaults[key])
        self.values[key] = value

    def update_text(self, text: str):
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value")
            k, v = line.split("=", 1)
            self.set(k.strip(), v.strip())

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def synth(self) -> SynthConfig:
        return SynthConfig(**self.section("synth")).validate()

    def train(self):
        from .trainer import TrainConfig

        return TrainConfig(**self.section("train")).validate()

    def text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in sorted(self.values.items()))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        rc = cls()
        rc.update_text(text)
        return rc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="breathmodel", description="Breathing-signal generative models.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key=value configuration file")
        s.add_argument("--seed", type=int, help="overrides synth.seed and train.seed")
        s.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<command>)")
        s.add_argument("--dataset", help="dataset file (.csv text or .bin binary)")
        s.add_argument("--bundle", help="model bundle file")
        s.add_argument("--labels-fraction", type=float, help="fraction of training samples with labels")
        s.add_argument("--latent-dim", type=int, help="latent dimension N")
        s.add_argument("--classes", type=int, help="number of slope classes (synth only; 3 uses the default ranges)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="extra config override")
        if name == "preprocess":
            s.add_argument("--input", required=True, help="marker CSV (t,x,y,z)")
        if name == "train":
            s.add_argument("--variant", choices=VARIANTS)
        if name == "generate":
            s.add_argument("--class", dest="cls", help="class name or index to generate")
            s.add_argument("-n", type=int, help="number of samples")
        if name == "eval":
            s.add_argument("--protocol", choices=PROTOCOLS)
        if name == "repro":
            s.add_argument("experiment", choices=("s1", "s2", "recon"))
    return p


def _slope_classes(c: int):
    if c == 3:
        return SynthConfig().slope_classes
    if c < 2:
        raise ConfigError("--classes must be >= 2")
    edges = np.linspace(-0.02, 0.02, c + 1)
    gap = 0.15 * (edges[1] - edges[0])
    return tuple((float(a + gap), float(b - gap)) for a, b in zip(edges[:-1], edges[1:]))


def resolve_config(args, preset: dict | None = None) -> RunConfig:
    rc = RunConfig(preset or {})
    if args.config:
        rc.update_text(Path(args.config).read_text())
    if args.seed is not None:
        rc.set("synth.seed", args.seed)
        rc.set("train.seed", args.seed)
    if args.labels_fraction is not None:
        rc.set("train.label_fraction", args.labels_fraction)
    if args.latent_dim is not None:
        rc.set("train.latent_dim", args.latent_dim)
    if args.classes is not None:
        rc.set("synth.slope_classes", _slope_classes(args.classes))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        rc.set(k.strip(), v)
    if getattr(args, "variant", None):
        rc.set("run.variant", args.variant)
    if getattr(args, "protocol", None):
        rc.set("run.protocol", args.protocol)
    if getattr(args, "n", None) is not None:
        rc.set("run.n_generate", args.n)
    if getattr(args, "cls", None) is not None:
        rc.set("run.class", args.cls)
    return rc


def _out_dir(args) -> Path:
    if args.out_dir:
        out = Path(args.out_dir)
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "breathmodel-out")) / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, rc: RunConfig):
    formats.atomic_write(out / "config.resolved", rc.text())


def _write_json(path, obj):
    formats.atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=formats._json_default) + "\n")


def _manifest(out: Path, extra: dict | None = None):
    """sha256 of every file in the artifact directory (itself excluded)."""
    files = {p.name: formats.sha256_file(p) for p in sorted(out.iterdir())
             if p.is_file() and p.name != "manifest.json" and not p.name.startswith(".")}
    _write_json(out / "manifest.json", {"files": files, **(extra or {})})


def _require(path, what):
    if not path:
        raise ConfigError(f"--{what} is required")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _dataset_path(out: Path, rc: RunConfig, stem="dataset") -> Path:
    return out / (f"{stem}.bin" if rc["run.binary"] else f"{stem}.csv")


def synthetic_thresholds(config: SynthConfig):
    """Slope thresholds halfway across the guard gaps between the class ranges (3 classes only)."""
    from .preprocess import SlopeThresholds

    r = sorted(config.slope_classes)
    if len(r) != 3:
        return None
    return SlopeThresholds((r[0][1] + r[1][0]) / 2.0, (r[1][1] + r[2][0]) / 2.0, None)


# commands ------------------------------------------------------------------------

def cmd_synth(args, rc: RunConfig, out: Path) -> dict:
    from .synth import generate_marker_series, generate_sinusoid_dataset

    cfg = rc.synth()
    ds = generate_sinusoid_dataset(cfg)
    path = formats.write_dataset(ds, _dataset_path(out, rc))
    th = synthetic_thresholds(cfg)
    if th is not None:
        _write_json(out / "thresholds.json", th.to_dict())
    if rc["run.markers"]:
        series = generate_marker_series(cfg)
        formats.write_marker_csv(series.times, series.positions, out / "markers.csv")
    return {"dataset": path.name, "dataset_sha256": ds.digest()}


def cmd_preprocess(args, rc: RunConfig, out: Path) -> dict:
    from .preprocess import (assemble_vectors, label_baseline_shift, pca_project, remove_artifacts,
                             segment_periods)
    from .synth import Marker3DSeries

    times, positions = formats.read_marker_csv(_require(args.input, "input"))
    if len(times) < 2:
        raise SchemaError("marker file has fewer than 2 samples")
    fs = rc["preprocess.sample_rate"]
    series = remove_artifacts(Marker3DSeries(fs, positions, float(times[-1] - times[0])))
    proj = pca_project(series)
    periods = segment_periods(proj)
    vectors = assemble_vectors(periods, rc["preprocess.n_t"], rc["preprocess.stride"], source_id=Path(args.input).stem)
    labels, th = label_baseline_shift(vectors, rc["preprocess.percentile"])
    for v, lab in zip(vectors, labels):
        v.label = int(lab)
    ds = LabeledDataset.from_vectors(vectors, {"class_names": ["down", "regular", "up"]})
    path = formats.write_dataset(ds, _dataset_path(out, rc))
    _write_json(out / "thresholds.json", th.to_dict())
    _write_json(out / "projection.json", {"variance_retained": proj.variance_retained,
                                          "axis": proj.projection_axis.tolist(),
                                          "channel_means": proj.channel_means.tolist()})
    return {"dataset": path.name, "n_vectors": len(ds), "variance_retained": proj.variance_retained}


def _load_thresholds(dataset_path):
    from .preprocess import SlopeThresholds

    p = Path(dataset_path).with_name("thresholds.json")
    return SlopeThresholds.from_dict(json.loads(p.read_text())) if p.exists() else None


def prepare_training(ds: LabeledDataset, rc: RunConfig):
    """Normalize, carve the test split and choose the stratified labeled subset."""
    from .preprocess import normalize_features

    seed = rc["train.seed"]
    test_idx, train_idx = split_indices(len(ds), [rc["run.test_fraction"], 1.0 - rc["run.test_fraction"]],
                                        np.random.default_rng([seed, 31]))
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    xn, stats = normalize_features(train.x)
    train = LabeledDataset(xn, train.labels, train.source_ids, train.meta)
    test = LabeledDataset(stats.apply(test.x), test.labels, test.source_ids, test.meta)
    c = ds.num_classes
    n_labels = rc["run.n_labels"] or int(round(rc["train.label_fraction"] * len(train)))
    labeled = None
    if c >= 2 and (train.labels >= 0).any():
        labeled = stratified_label_subset(train.labels, n_labels, np.random.default_rng([seed, 32]), c)
    return train, test, stats, labeled


def _train_variant(rc: RunConfig, train, labeled, stats, thresholds):
    from .trainer import train_aae, train_classifier, train_saae, train_vae

    cfg = rc.train()
    variant = rc["run.variant"]
    if variant == "vae":
        bundle = train_vae(train, cfg, stats, thresholds)
    elif variant == "aae":
        bundle = train_aae(train, cfg, stats, thresholds)
    elif labeled is None:
        raise ConfigError(f"{variant} training needs a labeled dataset")
    elif variant == "saae":
        bundle = train_saae(train, labeled, cfg, stats, thresholds)
    else:
        spec = M.ClassifierSpec(architecture=rc["run.classifier"], n_t=train.n_t, num_classes=train.num_classes)
        bundle = train_classifier(train, labeled, spec, cfg, stats, thresholds)
    bundle.meta["class_names"] = train.meta.get("class_names")
    return bundle


def _eval_mf1(bundle, test: LabeledDataset, out: Path, stem="eval_report"):
    from .evaluate import macro_f1

    if not (test.labels >= 0).all() or len(test) == 0:
        return None
    rep = macro_f1(bundle.predict(test.x), test.labels, bundle.num_classes, warn=False)
    formats.write_rows_csv(rep.rows(), out / f"{stem}.csv")
    formats.atomic_write(out / f"{stem}.txt", rep.summary() + "\n")
    return rep


def cmd_train(args, rc: RunConfig, out: Path) -> dict:
    from .trainer import save_bundle

    path = _require(args.dataset, "dataset")
    ds = formats.read_dataset(path)
    train, test, stats, labeled = prepare_training(ds, rc)
    bundle = _train_variant(rc, train, labeled, stats, _load_thresholds(path))
    bundle.meta["source_dataset_sha256"] = ds.digest()
    save_bundle(bundle, out / "bundle.bin")
    formats.write_rows_csv(bundle.log, out / "training_log.csv")
    formats.write_dataset(LabeledDataset(stats.invert(test.x), test.labels, test.source_ids, test.meta),
                          _dataset_path(out, rc, "test"))
    result = {"bundle": "bundle.bin", "epochs_run": len(bundle.log)}
    if bundle.variant in ("saae", "classifier"):
        rep = _eval_mf1(bundle, test, out)
        if rep is not None:
            result["test_mf1"] = rep.mf1
    return result


def _class_index(bundle, text: str) -> int | None:
    if text == "":
        return None
    names = bundle.meta.get("class_names") or []
    if text in names:
        return names.index(text)
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"unknown class {text!r}; known: {names}") from None


def cmd_generate(args, rc: RunConfig, out: Path) -> dict:
    from .reconstruct import linear_interpolate
    from .trainer import load_bundle

    bundle = load_bundle(_require(args.bundle, "bundle"))
    cls = _class_index(bundle, rc["run.class"])
    n = rc["run.n_generate"]
    xn, labels = bundle.generate(n, np.random.default_rng([rc["train.seed"], 41]), cls)
    x = bundle.norm_stats.invert(xn) if bundle.norm_stats is not None else xn
    labels = np.full(n, -1) if labels is None else labels
    names = bundle.meta.get("class_names") or ([str(k) for k in range(bundle.num_classes)] or None)
    ds = LabeledDataset(x, labels, np.array([f"gen-{i}" for i in range(n)]), {"class_names": names})
    path = formats.write_dataset(ds, _dataset_path(out, rc, "generated"))
    fs = rc["preprocess.sample_rate"]
    for i in range(min(n, rc["run.n_series"])):
        periods = x[i].copy()
        periods[:, [1, 4]] = np.maximum(periods[:, [1, 4]], 1.0 / fs)
        t, v = linear_interpolate(periods, fs)
        formats.write_series_csv(t, v, out / f"series_{i:04d}.csv")
    result = {"generated": path.name, "n": n}
    if bundle.thresholds is not None:
        from .preprocess import label_baseline_shift

        relabeled, _ = label_baseline_shift(x, thresholds=bundle.thresholds)
        if cls is not None:
            result["relabel_agreement"] = float(np.mean(relabeled == cls))
        elif labels[0] >= 0:
            result["relabel_agreement"] = float(np.mean(relabeled == labels))
    return result


def cmd_classify(args, rc: RunConfig, out: Path) -> dict:
    from .trainer import load_bundle

    bundle = load_bundle(_require(args.bundle, "bundle"))
    ds = formats.read_dataset(_require(args.dataset, "dataset"))
    xn = bundle.norm_stats.apply(ds.x) if bundle.norm_stats is not None else ds.x
    if bundle.variant == "saae":
        _, probs = M.encode(bundle.encoder, xn, eta=np.zeros((len(xn), bundle.encoder.spec.noise_dim)))
    else:
        probs = M.classify(bundle.classifier, xn)
    pred = np.argmax(probs, axis=1)
    rows = [{"source_id": sid, "label": int(lab), "predicted": int(p),
             **{f"p_{k}": repr(float(v)) for k, v in enumerate(pr)}}
            for sid, lab, p, pr in zip(ds.source_ids, ds.labels, pred, probs)]
    formats.write_rows_csv(rows, out / "predictions.csv")
    result = {"predictions": "predictions.csv"}
    normalized = LabeledDataset(xn, ds.labels, ds.source_ids, ds.meta)
    rep = _eval_mf1(bundle, normalized, out)
    if rep is not None:
        result["mf1"] = rep.mf1
    return result


def cmd_reconstruct(args, rc: RunConfig, out: Path) -> dict:
    from .reconstruct import WINDOW_IN, apply_recon, linear_interpolate
    from .trainer import load_bundle

    bundle = load_bundle(_require(args.bundle, "bundle"))
    if bundle.variant != "recon":
        raise ConfigError(f"reconstruct needs a recon bundle, got {bundle.variant}")
    ds = formats.read_dataset(_require(args.dataset, "dataset"))
    fs = rc["preprocess.sample_rate"]
    written = []
    for i in range(min(len(ds), rc["run.n_series"])):
        t, v = linear_interpolate(ds.x[i], fs)
        rec = apply_recon(bundle, v) if len(v) >= WINDOW_IN else v
        name = f"series_{i:04d}.csv"
        formats.write_series_csv(t, rec, out / name)
        written.append(name)
    return {"series": written}


def cmd_eval(args, rc: RunConfig, out: Path) -> dict:
    from . import evaluate as E
    from .objectives import sample_prior
    from .trainer import load_bundle

    bundle = load_bundle(_require(args.bundle, "bundle"))
    protocol = rc["run.protocol"]
    seed = rc["train.seed"]
    if protocol == "grid":
        grid, signals = E.grid_sample_2d(bundle)
        rows = [{"z1": repr(float(z[0])), "z2": repr(float(z[1])), **{f"x{j}": repr(float(v))
                                                                       for j, v in enumerate(s.ravel())}}
                for z, s in zip(grid, signals)]
        formats.write_rows_csv(rows, out / "grid.csv")
        _write_plot_script(out)
        return {"grid_points": len(grid)}
    ds = formats.read_dataset(_require(args.dataset, "dataset"))
    xn = bundle.norm_stats.apply(ds.x) if bundle.norm_stats is not None else ds.x
    result = {"protocol": protocol}
    if protocol == "mf1":
        rep = _eval_mf1(bundle, LabeledDataset(xn, ds.labels, ds.source_ids, ds.meta), out)
        if rep is None:
            raise SchemaError("mf1 protocol needs a fully labeled dataset")
        result["mf1"] = rep.mf1
    elif protocol == "recon":
        mean, std = E.relative_recon_error_stats(bundle, xn)
        result.update(relative_recon_error=mean, baseline_std=std)
    elif protocol == "cas":
        from .trainer import TrainConfig

        cfg = TrainConfig(epochs=rc["run.cas_epochs"], patience=5, seed=seed)
        mean, std, scores = E.cas(bundle, xn, ds.labels, rc["run.cas_generated"], repeats=rc["run.cas_repeats"],
                                  config=cfg, seed=seed)
        result.update(cas_mean=mean, cas_std=std, cas_scores=scores.tolist())
    elif protocol == "distinguish":
        rep = E.distinguishability_test(bundle, xn, "prior", seed=seed)
        result.update(accuracy_mean=rep.accuracy_mean, accuracy_std=rep.accuracy_std, bce_mean=rep.bce_mean,
                      bce_std=rep.bce_std)
    elif protocol == "latent":
        rng = np.random.default_rng([seed, 51])
        enc = E.aggregated_posterior(bundle, xn, rng)
        prior, _ = sample_prior(bundle.prior, len(enc), rng)
        nd = E.latent_neighbor_distances(enc)
        norms = E.latent_norm_distribution(enc, prior)
        formats.write_rows_csv(nd.rows(), out / "hist_neighbor_distance.csv")
        formats.write_rows_csv(norms.encodings.rows(), out / "hist_norm_encodings.csv")
        formats.write_rows_csv(norms.prior.rows(), out / "hist_norm_prior.csv")
        _write_plot_script(out)
        result.update(ks_statistic=norms.ks_statistic, neighbor_mode=nd.mode)
    formats.write_rows_csv([{k: v for k, v in result.items() if not isinstance(v, list)}], out / "eval_report.csv")
    return result


PLOT_SCRIPT = '''"""Plot the CSV outputs in this directory (requires matplotlib)."""
import csv
import glob
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


for path in sorted(glob.glob(os.path.join(here, "hist_*.csv"))):
    rows = read(path)
    left = [float(r["left"]) for r in rows]
    width = [float(r["right"]) - float(r["left"]) for r in rows]
    plt.figure()
    plt.bar(left, [int(r["count"]) for r in rows], width=width, align="edge")
    plt.title(os.path.basename(path))
    plt.savefig(path[:-4] + ".png")

for path in sorted(glob.glob(os.path.join(here, "series_*.csv"))):
    rows = read(path)
    plt.figure()
    plt.plot([float(r["t"]) for r in rows], [float(r["position"]) for r in rows])
    plt.xlabel("t (s)")
    plt.ylabel("position (mm)")
    plt.savefig(path[:-4] + ".png")

if os.path.exists(os.path.join(here, "training_log.csv")):
    rows = read(os.path.join(here, "training_log.csv"))
    plt.figure()
    for key in rows[0]:
        if key != "epoch":
            plt.plot([float(r[key]) for r in rows], label=key)
    plt.legend()
    plt.savefig(os.path.join(here, "training_log.png"))
'''


def _write_plot_script(out: Path):
    formats.atomic_write(out / "plot.py", PLOT_SCRIPT)


def _repro_recon(rc: RunConfig, out: Path) -> dict:
    from .reconstruct import apply_recon, l1_error, source_pairs, train_recon_net

    corpus = recon_corpus(rc["run.recon_sources"], rc["run.recon_periods"], rc["synth.seed"],
                          rc["preprocess.sample_rate"])
    fs = rc["preprocess.sample_rate"]
    data = [source_pairs(values, fs, f"source-{k}") for k, values in enumerate(corpus)]
    held_out = len(data) - 1
    cfg = replace(rc.train(), epochs=rc["run.recon_epochs"], lr_reconstruction=rc["train.lr_reconstruction"] or 1e-4,
                  lr_decay=rc["train.lr_decay"] or 1e-6)
    models = {f"patbr-{k}": train_recon_net(data[k][0], "patbr", cfg) for k in range(held_out)}
    pooled = [p for k in range(held_out) for p in data[k][0]]
    models["popbr"] = train_recon_net(pooled, "popbr", cfg, sample_fraction=rc["run.recon_fraction"])
    _, real, interp = data[held_out]
    rows = [{"model": "interpolation", "l1": l1_error(real, interp)}]
    for name, b in models.items():
        rows.append({"model": name, "l1": l1_error(real, apply_recon(b, interp))})
    formats.write_rows_csv(rows, out / "eval_report.csv")
    from .trainer import save_bundle

    save_bundle(models["popbr"], out / "bundle.bin")
    formats.write_rows_csv(models["popbr"].log, out / "training_log.csv")
    formats.write_series_csv(np.arange(len(real)) / fs, real, out / "series_real.csv")
    formats.write_series_csv(np.arange(len(real)) / fs, apply_recon(models["popbr"], interp),
                             out / "series_popbr.csv")
    _write_plot_script(out)
    return {r["model"]: r["l1"] for r in rows}


def recon_corpus(n_sources: int, periods: int, seed: int, sample_rate: float = 26.0):
    """Distinct synthetic breathing sources (period, amplitude and drift differ per source)."""
    from .synth import sample_signal

    out = []
    for k in range(n_sources):
        cfg = SynthConfig.s2(seed=seed * 100 + k, num_samples=1, periods_per_sample=periods,
                             sample_rate=sample_rate, base_period=3.0 + 0.5 * k, base_amplitude=3.0 + 1.5 * k,
                             noise_sigma=0.05)
        out.append(sample_signal(cfg, 0).values)
    return out


def cmd_repro(args, rc: RunConfig, out: Path) -> dict:
    from .synth import generate_sinusoid_dataset
    from .trainer import save_bundle

    if args.experiment == "recon":
        return _repro_recon(rc, out)
    cfg = rc.synth()
    ds = generate_sinusoid_dataset(cfg)
    formats.write_dataset(ds, _dataset_path(out, rc))
    train, test, stats, labeled = prepare_training(ds, rc)
    bundle = _train_variant(rc, train, labeled, stats, synthetic_thresholds(cfg))
    save_bundle(bundle, out / "bundle.bin")
    formats.write_rows_csv(bundle.log, out / "training_log.csv")
    result = {"dataset_sha256": ds.digest(), "epochs_run": len(bundle.log)}
    rep = _eval_mf1(bundle, test, out, "eval_mf1")
    rows = {"mf1": rep.mf1 if rep else float("nan")}
    if bundle.variant == "saae" and rc["run.cas_repeats"] > 0:
        from . import evaluate as E
        from .trainer import TrainConfig

        tcfg = TrainConfig(epochs=rc["run.cas_epochs"], patience=5, seed=rc["train.seed"])
        mean, std, _ = E.cas(bundle, test.x, test.labels, rc["run.cas_generated"], repeats=rc["run.cas_repeats"],
                             config=tcfg, seed=rc["train.seed"])
        rows.update(cas_mean=mean, cas_std=std)
    if bundle.prior is not None:
        from . import evaluate as E
        from .objectives import sample_prior

        rng = np.random.default_rng([rc["train.seed"], 51])
        enc = E.aggregated_posterior(bundle, train.x[: rc["run.latent_points"]], rng)
        prior, _ = sample_prior(bundle.prior, len(enc), rng)
        norms = E.latent_norm_distribution(enc, prior)
        formats.write_rows_csv(norms.encodings.rows(), out / "hist_norm_encodings.csv")
        formats.write_rows_csv(norms.prior.rows(), out / "hist_norm_prior.csv")
        formats.write_rows_csv(E.latent_neighbor_distances(enc).rows(), out / "hist_neighbor_distance.csv")
        rows["ks_statistic"] = norms.ks_statistic
        rows["relative_recon_error"] = E.relative_recon_error(bundle, test.x)
    formats.write_rows_csv([rows], out / "eval_report.csv")
    _write_plot_script(out)
    result.update(rows)
    return result


HANDLERS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train, "generate": cmd_generate,
    "classify": cmd_classify, "reconstruct": cmd_reconstruct, "eval": cmd_eval, "repro": cmd_repro,
}


def _error_line(exc: BaseException) -> str:
    kind = getattr(exc, "kind", None) or {FileNotFoundError: "missing-file"}.get(type(exc), type(exc).__name__)
    return json.dumps({"error": kind, "message": str(exc)})


def run(argv=None) -> dict:
    """Parse ``argv`` and execute the command; returns the result summary."""
    args = build_parser().parse_args(argv)
    preset = REPRO_PRESETS.get(args.experiment) if args.command == "repro" else None
    rc = resolve_config(args, preset)
    out = _out_dir(args)
    _write_config(out, rc)
    result = HANDLERS[args.command](args, rc, out)
    _write_json(out / "result.json", result)
    _manifest(out, {"seed": rc["train.seed"], "synth_seed": rc["synth.seed"]})
    return result


def main(argv=None) -> int:
    try:
        result = run(argv)
    except (BreathModelError, FileNotFoundError, ValueError, KeyError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    print(json.dumps(result, default=formats._json_default, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
