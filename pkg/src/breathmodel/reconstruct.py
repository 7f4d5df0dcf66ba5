"""Turn breathing vectors back into 26 Hz traces: linear interpolation plus a windowed refinement network."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .dataset import BreathingVector
from .diffcore.layers import LayerSpec, Sequential
from .diffcore.optim import Adam
from .diffcore.tensor import Tensor, backward, no_grad
from .errors import ConfigError, DegenerateInputError, InsufficientDataError, ShapeError, SpecError
from .models import Network

WINDOW_IN = 120
WINDOW_OUT = 100
RECON_MODES = ("patbr", "popbr")


def knot_series(x):
    """Knot times and amplitudes: EE, MI, EI, ME per period plus a closing EE.

    The closing knot reuses the last period's EE amplitude.
    """
    x = np.asarray(x.periods if isinstance(x, BreathingVector) else x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 6:
        raise ShapeError(f"expected (N_T, 6) periods, got {x.shape}")
    d_ee, d_ei = x[:, 1], x[:, 4]
    if np.any(d_ee <= 0) or np.any(d_ei <= 0):
        raise ValueError("period durations must be positive")
    starts = np.concatenate([[0.0], np.cumsum(d_ee + d_ei)[:-1]])
    t = np.column_stack([starts, starts + d_ee / 2, starts + d_ee, starts + d_ee + d_ei / 2]).ravel()
    a = x[:, [0, 2, 3, 5]].ravel()
    end = starts[-1] + d_ee[-1] + d_ei[-1]
    return np.append(t, end), np.append(a, x[-1, 0])


def linear_interpolate(x, sample_rate: float = 26.0):
    """Piecewise-linear trace through the knots on the grid ``k / sample_rate``; returns ``(times, values)``."""
    t, a = knot_series(x)
    times = np.arange(int(np.floor(t[-1] * sample_rate + 1e-9)) + 1) / sample_rate
    return times, np.interp(times, t, a)


@dataclass
class WindowPair:
    input: np.ndarray  # (120,) normalized interpolated values
    target: np.ndarray  # (100,) normalized real values
    norm_min: float
    norm_max: float
    source_id: str = ""

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values) * (self.norm_max - self.norm_min) + self.norm_min


def _normalize(window):
    lo, hi = float(window.min()), float(window.max())
    if not hi - lo > 1e-12 * max(1.0, abs(lo)):
        raise DegenerateInputError("window has a degenerate (constant) value range")
    return lo, hi


def make_training_windows(real_series, interp_series, stride: int = WINDOW_OUT, source_id: str = ""):
    """Aligned (interpolated 120 -> real first 100) pairs, min-max normalized by the input window."""
    real = np.asarray(real_series, dtype=np.float64)
    interp = np.asarray(interp_series, dtype=np.float64)
    if real.shape != interp.shape or real.ndim != 1:
        raise ShapeError("real and interpolated series must be 1-D and of equal length")
    if len(real) < WINDOW_IN:
        raise InsufficientDataError(f"series of length {len(real)} is shorter than {WINDOW_IN}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    pairs = []
    for s in range(0, len(real) - WINDOW_IN + 1, stride):
        w_in = interp[s : s + WINDOW_IN]
        lo, hi = _normalize(w_in)
        scale = hi - lo
        pairs.append(WindowPair((w_in - lo) / scale, (real[s : s + WINDOW_OUT] - lo) / scale, lo, hi, source_id))
    return pairs


@dataclass
class ReconNetSpec:
    input_size: int = WINDOW_IN
    output_size: int = WINDOW_OUT
    hidden: tuple = (256, 256, 256)
    slope: float = 0.1
    mode: str = "popbr"

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.input_size != WINDOW_IN or self.output_size != WINDOW_OUT:
            raise SpecError(f"reconstruction net maps {WINDOW_IN} -> {WINDOW_OUT} values")
        if self.mode not in RECON_MODES:
            raise SpecError(f"unknown reconstruction mode {self.mode!r}")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise SpecError(f"unknown ReconNetSpec fields {sorted(unknown)}")
        return cls(**d)


class ReconNet(Network):
    kind = "recon_net"

    def __init__(self, spec: ReconNetSpec, seed: int = 0):
        rng = np.random.default_rng([seed, 5])
        layers = []
        for h in spec.hidden:
            layers += [LayerSpec("dense", units=h, init="he"),
                       LayerSpec("activation", activation="leaky_relu", slope=spec.slope)]
        layers.append(LayerSpec("dense", units=spec.output_size))
        super().__init__(spec, {"body": Sequential.from_specs(layers, (spec.input_size,), rng)}, seed)

    def __call__(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.spec.input_size:
            raise ShapeError(f"reconstruction net expects (B, {self.spec.input_size}), got {x.shape}")
        return self.parts["body"](x)


def _stack(pairs):
    return np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs])


def train_recon_net(pairs, mode: str = "popbr", config=None, sample_fraction: float = 0.1, spec=None,
                    on_epoch=None):
    """Squared-error regression of real windows from interpolated windows.

    ``patbr`` requires every pair to come from one source; ``popbr`` trains
    on a random ``sample_fraction`` of the (multi-source) pairs.
    """
    from .trainer import ModelBundle, TrainConfig, _batches, _EarlyStop, _holdout

    if mode not in RECON_MODES:
        raise ConfigError(f"unknown reconstruction mode {mode!r}")
    pairs = list(pairs)
    if not pairs:
        raise InsufficientDataError("no training windows")
    sources = sorted({p.source_id for p in pairs})
    cfg = config or TrainConfig(epochs=200, lr_reconstruction=1e-4, lr_decay=1e-6)
    cfg = cfg.resolved("recon")
    rng = np.random.default_rng([cfg.seed, 15])
    if mode == "patbr" and len(sources) != 1:
        raise ConfigError(f"patbr needs windows from exactly one source, got {len(sources)}")
    if mode == "popbr" and sample_fraction < 1.0:
        k = max(2, int(round(sample_fraction * len(pairs))))
        pairs = [pairs[i] for i in np.sort(rng.choice(len(pairs), size=min(k, len(pairs)), replace=False))]
    x, y = _stack(pairs)
    spec = spec or ReconNetSpec(mode=mode)
    net = ReconNet(spec, cfg.seed)
    opt = Adam(net.parameters(), cfg.lr_reconstruction, decay=cfg.lr_decay)
    train_idx, val_idx = _holdout(len(x), cfg, rng)
    bs = min(cfg.batch_size, len(train_idx))
    stopper, log = _EarlyStop(cfg.patience, "min"), []
    nets = {"recon_net": net}
    for epoch in range(cfg.epochs):
        net.train()
        total, count = 0.0, 0
        for b in _batches(rng.permutation(train_idx), bs):
            for p in net.parameters().values():
                p.grad = None
            diff = net(Tensor(x[b])) - Tensor(y[b])
            loss = (diff * diff).mean()
            backward(loss)
            opt.step()
            total += loss.item()
            count += 1
        opt.end_epoch()
        val = float("nan")
        if len(val_idx):
            val = float(np.mean((predict_windows(net, x[val_idx]) - y[val_idx]) ** 2))
        row = {"epoch": epoch, "mse": total / max(count, 1), "val_mse": val}
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if stopper.update(val if len(val_idx) else row["mse"], epoch, nets):
            break
    stopper.restore(nets)
    meta = {"mode": mode, "sources": sources, "n_windows": len(pairs), "best_epoch": stopper.best_epoch,
            "epochs_run": len(log)}
    return ModelBundle("recon", nets, config=cfg.to_dict(), log=log, seed=cfg.seed, meta=meta)


def predict_windows(net: ReconNet, inputs) -> np.ndarray:
    net.eval()
    with no_grad():
        return net(Tensor(np.asarray(inputs, dtype=np.float64))).data


def _net(obj):
    return obj.networks["recon_net"] if hasattr(obj, "networks") else obj


def apply_recon(net, interp_series) -> np.ndarray:
    """Slide 120-value windows in steps of 100 and concatenate the denormalized outputs.

    The tail is edge-padded to a whole window and trimmed after inference,
    so the output has the input's length.
    """
    net = _net(net)
    s = np.asarray(interp_series, dtype=np.float64)
    if s.ndim != 1 or len(s) < WINDOW_IN:
        raise InsufficientDataError(f"series of length {len(s)} is shorter than {WINDOW_IN}")
    n_win = -(-len(s) // WINDOW_OUT)
    padded = np.pad(s, (0, (n_win - 1) * WINDOW_OUT + WINDOW_IN - len(s)), mode="edge")
    wins = np.stack([padded[k * WINDOW_OUT : k * WINDOW_OUT + WINDOW_IN] for k in range(n_win)])
    lo, hi = wins.min(axis=1, keepdims=True), wins.max(axis=1, keepdims=True)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    out = predict_windows(net, (wins - lo) / span) * span + lo
    return out.reshape(-1)[: len(s)]


def l1_error(real, reconstructed) -> float:
    """Mean absolute difference over all positions."""
    real, reconstructed = np.asarray(real), np.asarray(reconstructed)
    if real.shape != reconstructed.shape:
        raise ShapeError("series lengths differ")
    return float(np.mean(np.abs(real - reconstructed)))


def source_pairs(values, sample_rate: float, source_id: str, stride: int = WINDOW_OUT):
    """Segment a real 1-D trace, re-interpolate it and cut aligned training windows.

    Returns ``(pairs, real_aligned, interp)``; the interpolation starts at the first end-exhale sample.
    """
    from .preprocess import segment_periods

    periods, ee = segment_periods(np.asarray(values, dtype=np.float64), sample_rate, return_indices=True)
    _, interp = linear_interpolate(np.asarray(periods), sample_rate)
    real = np.asarray(values, dtype=np.float64)[ee[0] :]
    n = min(len(real), len(interp))
    real, interp = real[:n], interp[:n]
    return make_training_windows(real, interp, stride, source_id), real, interp
