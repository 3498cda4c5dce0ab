"""Full-state baselines: the High Dimensional Propagator (HDP) and the Time-Input network.

HDP is a plain (non-residual) one-step map R^D -> R^D iterated for rollouts;
residual training of this map is unstable, so it predicts the next state
directly.  The Time-Input network maps ``(x0, t)`` to the state at time ``t``;
``t`` is fed in natural units.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_net, save_net
from .nn import MlpNet, MlpSpec, mlp_init, mse_loss
from .pdes import TimeGrid
from .weldnet import TrainConfig, _Optimizer, _seeds

log = logging.getLogger(__name__)

BASELINE_WIDTHS = (1000, 1000, 1000)


@dataclass
class HdpModel:
    net: MlpNet
    delta_t: float
    n_times: int
    scale: float = 1.0
    train_meta: dict = field(default_factory=dict)

    kind = "hdp"

    def __post_init__(self):
        if self.net.spec.input_dim != self.net.spec.output_dim:
            raise ValueError("HDP maps R^D to R^D")

    @property
    def ambient_dim(self) -> int:
        return self.net.spec.input_dim

    def rollout(self, x0) -> np.ndarray:
        """All grid times, shape [B, T, D]."""
        x = np.atleast_2d(np.asarray(x0, dtype=np.float64)) / self.scale
        out = np.empty((x.shape[0], self.n_times, self.ambient_dim))
        out[:, 0] = x * self.scale
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, self.n_times):
                x = self.net(x)
                out[:, k] = x * self.scale
        return out


def hdp_rollout(m: HdpModel, x0, k: int) -> np.ndarray:
    """k-fold composition of the one-step map (k=0 returns x0)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    if k == 0:
        return x.copy()
    x = x / m.scale
    for _ in range(k):
        x = m.net(x)
    return x * m.scale


@dataclass
class TimeInputModel:
    net: MlpNet
    delta_t: float
    n_times: int
    scale: float = 1.0
    train_meta: dict = field(default_factory=dict)

    kind = "time-input"

    def __post_init__(self):
        if self.net.spec.input_dim != self.net.spec.output_dim + 1:
            raise ValueError("Time-Input maps R^{D+1} to R^D")

    @property
    def ambient_dim(self) -> int:
        return self.net.spec.output_dim

    def rollout(self, x0) -> np.ndarray:
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        return np.stack([time_input_predict(self, x0, k * self.delta_t) for k in range(self.n_times)], axis=1)


def time_input_predict(m: TimeInputModel, x0, t: float) -> np.ndarray:
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64)) / m.scale
    u = np.concatenate([x0, np.full((x0.shape[0], 1), float(t))], axis=1)
    return m.net(u) * m.scale


def fit_regression(net: MlpNet, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig,
                   rng: np.random.Generator, epochs: int, stage: str) -> list:
    """Minibatch AdamW on the mean squared error; returns the per-epoch loss trace."""
    opt = _Optimizer([net], cfg)
    trace = []
    n = len(inputs)
    B = cfg.batch_size
    for epoch in range(epochs):
        order = rng.permutation(n)
        total, n_batches = 0.0, 0
        for b0 in range(0, n, B):
            idx = order[b0:b0 + B]
            out, cache = net.forward(inputs[idx])
            loss, g = mse_loss(out, targets[idx])
            grads, _ = net.backward(cache, g)
            opt.step([grads])
            total += loss
            n_batches += 1
        trace.append(total / n_batches)
        opt.end_epoch(trace[-1], stage, 0, trace)
        if (epoch + 1) % 25 == 0:
            log.info("%s epoch %d: %.3e", stage, epoch + 1, trace[-1])
    return trace


def _scaled(values, cfg):
    values = np.asarray(values, dtype=np.float64)
    scale = float(np.sqrt(np.mean(values ** 2))) if cfg.normalize else 1.0
    return values / (scale if scale > 0 else 1.0), (scale if scale > 0 else 1.0)


def train_hdp(train_values: np.ndarray, time: TimeGrid, cfg: TrainConfig | None = None,
              widths=BASELINE_WIDTHS, epochs: int | None = None) -> HdpModel:
    """Fit net(x(t_k)) ~ x(t_{k+1}) over all consecutive pairs of ``[N, T, D]`` data."""
    cfg = cfg or TrainConfig()
    data, scale = _scaled(train_values, cfg)
    n, t, dim = data.shape
    seeds = _seeds(cfg, 30, 0, 2)
    net = mlp_init(MlpSpec(dim, tuple(widths), dim), seeds[0])
    inputs = data[:, :-1].reshape(-1, dim)
    targets = data[:, 1:].reshape(-1, dim)
    epochs = cfg.epochs_joint if epochs is None else epochs
    trace = fit_regression(net, inputs, targets, cfg, np.random.default_rng(seeds[1]), epochs, "hdp")
    meta = {"config": cfg.to_dict(), "traces": {"hdp": trace}, "data_scale": scale, "n_train": n}
    return HdpModel(net, time.dt, t, scale, meta)


def train_time_input(train_values: np.ndarray, time: TimeGrid, cfg: TrainConfig | None = None,
                     widths=BASELINE_WIDTHS, epochs: int | None = None) -> TimeInputModel:
    """Fit net(x(0), t_k) ~ x(t_k) over all n, k (k = 0 gives the identity pair)."""
    cfg = cfg or TrainConfig()
    data, scale = _scaled(train_values, cfg)
    n, t, dim = data.shape
    seeds = _seeds(cfg, 31, 0, 2)
    net = mlp_init(MlpSpec(dim + 1, tuple(widths), dim), seeds[0])
    x0 = np.repeat(data[:, 0], t, axis=0)
    tk = np.tile(time.times, n)[:, None]
    inputs = np.concatenate([x0, tk], axis=1)
    targets = data.reshape(-1, dim)
    epochs = cfg.epochs_joint if epochs is None else epochs
    trace = fit_regression(net, inputs, targets, cfg, np.random.default_rng(seeds[1]), epochs, "time-input")
    meta = {"config": cfg.to_dict(), "traces": {"time-input": trace}, "data_scale": scale, "n_train": n,
            "time_feature": "raw t"}
    return TimeInputModel(net, time.dt, t, scale, meta)


def save_baseline(model, directory, extra: dict | None = None) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_net(out / "net.ckpt", model.net, kind=model.kind, role="baseline")
    manifest = {"kind": model.kind, "delta_t": model.delta_t, "n_times": model.n_times,
                "ambient_dim": model.ambient_dim, "files": ["net.ckpt"], **model.train_meta, **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_baseline(directory):
    src = Path(directory)
    m = json.loads((src / "manifest.json").read_text())
    net, header = load_net(src / "net.ckpt")
    cls = {"hdp": HdpModel, "time-input": TimeInputModel}.get(m["kind"])
    if cls is None or header.get("kind") != m["kind"]:
        raise ValueError(f"{src}: not a baseline model (kind={m.get('kind')})")
    meta = {k: m[k] for k in ("config", "traces", "data_scale", "n_train") if k in m}
    return cls(net, m["delta_t"], m["n_times"], m.get("data_scale", 1.0), meta)
