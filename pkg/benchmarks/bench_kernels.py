"""Compare the compiled kernels against the numpy fallback.

Micro-benchmarks time each kernel at training-sized shapes with both backends
in-process.  The end-to-end figure runs a few SAAE training batches in a
subprocess per backend (``BREATHMODEL_PURE_PYTHON`` selects the fallback), so it
shows how much of a real training step the kernels account for.

    python3 benchmarks/bench_kernels.py [--repeats 20] [--no-e2e]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from breathmodel.diffcore import kernels

E2E = """
import time, numpy as np
from breathmodel.diffcore import kernels
from breathmodel.synth import SynthConfig, generate_sinusoid_dataset
from breathmodel.preprocess import normalize_features
from breathmodel.dataset import LabeledDataset, stratified_label_subset
from breathmodel.trainer import TrainConfig, train_saae
ds = generate_sinusoid_dataset(SynthConfig.s1(num_samples=2048))
x, _ = normalize_features(ds.x)
ds = LabeledDataset(x, ds.labels, ds.source_ids, ds.meta)
lab = stratified_label_subset(ds.labels, 300, np.random.default_rng(0), 3)
t = time.perf_counter()
train_saae(ds, lab, TrainConfig(epochs=1, seed=0, validation_fraction=0.1))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def cases(rng):
    x = rng.normal(size=(256, 25, 32))
    cols = rng.normal(size=(256, 25, 3, 32))
    pooled, idx = kernels.get_backend("numpy").maxpool_forward(x, 2)
    z = rng.normal(size=(3000, 15))
    return {
        "im2col (256x25x32, k=3, d=2)": ("im2col", (x, 3, 2)),
        "col2im (256x25x3x32, d=2)": ("col2im", (cols, 2)),
        "maxpool_forward (pool 2)": ("maxpool_forward", (x, 2)),
        "maxpool_backward (pool 2)": ("maxpool_backward", (np.ones_like(pooled), idx, 25)),
        "nearest_l1 (3000x15)": ("nearest_l1", (z,)),
    }


def micro(repeats):
    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["cython"] if kernels.compiled_available() else [])
    rows = []
    for label, (name, args) in cases(rng).items():
        times = {}
        for b in backends:
            fn = getattr(kernels.get_backend(b), name)
            n = 1 if name == "nearest_l1" else repeats
            times[b] = min(timeit.repeat(lambda: fn(*args), number=n, repeat=3)) / n
        rows.append((label, times))
    return backends, rows


def e2e():
    out = {}
    for pure in ("1", "0"):
        env = dict(os.environ, BREATHMODEL_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        backend, seconds = res.stdout.split()
        out[backend] = float(seconds)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--no-e2e", action="store_true")
    args = ap.parse_args(argv)
    backends, rows = micro(args.repeats)
    print(f"{'kernel':34s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, t in rows:
        line = f"{label:34s}" + "".join(f"{t[b] * 1e3:10.3f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{t['numpy'] / t['cython']:11.2f}x"
        print(line)
    if not args.no_e2e:
        res = e2e()
        print("\none SAAE epoch on 2048 samples:")
        for b, s in res.items():
            print(f"  {b:8s} {s:7.2f}s")
        if len(res) == 2 and "cython" in res:
            print(f"  speedup {res['numpy'] / res['cython']:.2f}x")


if __name__ == "__main__":
    main()
