"""Windowed autoencoders with latent propagators and transcoders.

A model splits the time grid into ``W`` windows that share their boundary
points.  Each window has an encoder/decoder pair and a residual propagator
acting on ``(z, t)`` in R^{d+1}; consecutive windows are joined by residual
transcoders that map window i's code at the shared boundary into window i+1's
latent space.

Latent time is bookkeeping, not a learned quantity: a code carries the integer
grid index ``k`` and its time is ``k * dt``.  The propagator's inner network sees
(and emits) a time component, but only the first ``d`` outputs are used; the
time advances by exactly one grid step.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_net, read_container, save_net, write_container
from .nn import (AdamWState, MlpNet, MlpSpec, PlateauSchedule, ResidualNet, adamw_step, mlp_init,
                 mse_loss)
from .pdes import TimeGrid
from .reduction import NeuralCoder, PcaModel, pca_fit

log = logging.getLogger(__name__)

ABLATION_VARIANTS = ("i", "ii", "iii", "iv")
CODER_KINDS = ("ff", "pca")


class TrainingError(FloatingPointError):
    """Non-finite loss during training; carries the stage and the loss trace so far."""

    def __init__(self, stage: str, window: int, trace: list):
        super().__init__(f"non-finite loss in {stage} (window {window}) after {len(trace)} epochs")
        self.stage = stage
        self.window = window
        self.trace = trace


# --- windows ---------------------------------------------------------------------

@dataclass(frozen=True)
class WindowLayout:
    n_windows: int
    boundaries: tuple[int, ...]   # W+1 grid indices, 0 ... T-1

    def __post_init__(self):
        b = self.boundaries
        if len(b) != self.n_windows + 1 or b[0] != 0 or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError(f"invalid window boundaries {b}")

    @property
    def n_times(self) -> int:
        return self.boundaries[-1] + 1

    def steps(self, i: int) -> int:
        """Number of propagator steps T_i in window i (0-based)."""
        return self.boundaries[i + 1] - self.boundaries[i]

    def window_of(self, k: int) -> int:
        """Owning window of grid index k; a shared boundary belongs to the earlier window."""
        if not 0 <= k < self.n_times:
            raise IndexError(f"time index {k} outside [0, {self.n_times - 1}]")
        for i in range(self.n_windows):
            if k <= self.boundaries[i + 1]:
                return i
        raise AssertionError("unreachable")


def split_windows(time, W: int) -> WindowLayout:
    """Near-equal split of the T-1 grid steps into W windows; the remainder goes to the earliest windows."""
    n_times = time.n_steps if isinstance(time, TimeGrid) else int(time)
    steps = n_times - 1
    if W < 1:
        raise ValueError("need at least one window")
    if W > steps:
        raise ValueError(f"{W} windows do not fit into {steps} time steps")
    base, rem = divmod(steps, W)
    bounds = [0]
    for i in range(W):
        bounds.append(bounds[-1] + base + (1 if i < rem else 0))
    return WindowLayout(W, tuple(bounds))


# --- configuration -------------------------------------------------------------------

@dataclass
class TrainConfig:
    lam: float = 0.1
    batch_size: int = 32
    lr: float = 1e-4
    epochs_joint: int = 300
    epochs_finetune: int = 150
    epochs_transcoder: int = 300
    # separate-training variants train the propagator for this many epochs (default joint + finetune)
    epochs_propagator: int | None = None
    ablation_variant: str = "i"
    seed: int = 0
    ae_widths: tuple[int, ...] = (500, 500, 500)
    prop_widths: tuple[int, ...] = (200, 200, 200)
    weight_decay: float = 0.01
    sched_factor: float = 0.3
    sched_patience: int = 15
    min_lr: float = 1e-6
    normalize: bool = True

    def __post_init__(self):
        self.ae_widths = tuple(int(w) for w in self.ae_widths)
        self.prop_widths = tuple(int(w) for w in self.prop_widths)
        if self.ablation_variant not in ABLATION_VARIANTS:
            raise ValueError(f"ablation variant must be one of {ABLATION_VARIANTS}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        for name in ("batch_size", "epochs_joint", "epochs_finetune", "epochs_transcoder"):
            if getattr(self, name) < (1 if name == "batch_size" else 0):
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    @property
    def propagator_epochs(self) -> int:
        if self.epochs_propagator is not None:
            return self.epochs_propagator
        return self.epochs_joint + self.epochs_finetune

    def schedule(self) -> PlateauSchedule:
        return PlateauSchedule(lr=self.lr, factor=self.sched_factor, patience=self.sched_patience,
                               min_lr=self.min_lr)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ae_widths"] = list(self.ae_widths)
        d["prop_widths"] = list(self.prop_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


# --- latent codes and window models ---------------------------------------------

@dataclass
class LatentCode:
    z: np.ndarray     # [B, d]
    k: int            # time-grid index; time = k * dt
    dt: float

    @property
    def t(self) -> float:
        return self.k * self.dt

    def with_time(self) -> np.ndarray:
        return _append_time(self.z, self.t)


def _append_time(z, t):
    return np.concatenate([z, np.full((z.shape[0], 1), t)], axis=1)


@dataclass
class WindowModel:
    coder: NeuralCoder | PcaModel
    propagator: ResidualNet
    index: int
    start: int        # first grid index of the window
    stop: int         # last grid index (shared with the next window)
    dt: float
    scale: float = 1.0

    @property
    def latent_dim(self) -> int:
        return self.coder.latent_dim

    def encode(self, x) -> np.ndarray:
        return self.coder.encode(np.atleast_2d(np.asarray(x, dtype=np.float64)) / self.scale)

    def decode(self, z) -> np.ndarray:
        return self.coder.decode(z) * self.scale

    def step(self, z: np.ndarray, k: int) -> np.ndarray:
        """One propagator step of codes at grid index k (no range checks)."""
        return self.propagator(_append_time(z, k * self.dt))[:, :self.latent_dim]


def encode_with_time(wm: WindowModel, x, t: float | None = None, *, k: int | None = None) -> LatentCode:
    if k is None:
        if t is None:
            raise ValueError("give a time t or a grid index k")
        k = int(round(t / wm.dt))
        if abs(k * wm.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the time grid (dt={wm.dt})")
    if not wm.start <= k <= wm.stop:
        raise ValueError(f"time index {k} outside window {wm.index} [{wm.start}, {wm.stop}]")
    return LatentCode(wm.encode(x), k, wm.dt)


def propagate(wm: WindowModel, code: LatentCode) -> LatentCode:
    if not wm.start <= code.k < wm.stop:
        raise ValueError(f"cannot step from index {code.k}: window {wm.index} ends at {wm.stop}")
    return LatentCode(wm.step(code.z, code.k), code.k + 1, code.dt)


@dataclass
class WeldModel:
    layout: WindowLayout
    windows: list[WindowModel]
    transcoders: list[ResidualNet]
    latent_dim: int
    delta_t: float
    coder_kind: str = "ff"
    train_meta: dict = field(default_factory=dict)

    kind = "weldnet"

    def __post_init__(self):
        if len(self.windows) != self.layout.n_windows or len(self.transcoders) != self.layout.n_windows - 1:
            raise ValueError("window/transcoder count does not match the layout")

    @property
    def n_times(self) -> int:
        return self.layout.n_times

    @property
    def ambient_dim(self) -> int:
        return self.windows[0].coder.ambient_dim

    def transcode(self, i: int, z: np.ndarray) -> np.ndarray:
        """Transcoder i: window i's code at its end -> window i+1's code (time unchanged)."""
        t = self.layout.boundaries[i + 1] * self.delta_t
        return self.transcoders[i](_append_time(z, t))[:, :self.latent_dim]

    def rollout(self, x0) -> np.ndarray:
        """Predictions at every grid index, shape [B, T, D]."""
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        out = np.empty((x0.shape[0], self.n_times, self.ambient_dim))
        z = self.windows[0].encode(x0)
        out[:, 0] = self.windows[0].decode(z)
        for i, wm in enumerate(self.windows):
            if i > 0:
                z = self.transcode(i - 1, z)
            for k in range(wm.start, wm.stop):
                z = wm.step(z, k)
                out[:, k + 1] = wm.decode(z)
        return out

    def latent_rollout(self, x0) -> list[np.ndarray]:
        """Per-window latent codes [B, T_i + 1, d] (window i starts after transcoding)."""
        z = self.windows[0].encode(x0)
        codes = []
        for i, wm in enumerate(self.windows):
            if i > 0:
                z = self.transcode(i - 1, z)
            traj = [z]
            for k in range(wm.start, wm.stop):
                z = wm.step(z, k)
                traj.append(z)
            codes.append(np.stack(traj, axis=1))
        return codes


def weld_infer(model: WeldModel, x0, k: int) -> np.ndarray:
    """Prediction at grid index k from initial states x0 (boundary indices use the earlier window)."""
    i = model.layout.window_of(k)
    z = model.windows[0].encode(x0)
    if k == 0:
        return model.windows[0].decode(z)
    for j in range(i):
        wm = model.windows[j]
        for kk in range(wm.start, wm.stop):
            z = wm.step(z, kk)
        z = model.transcode(j, z)
    wm = model.windows[i]
    for kk in range(wm.start, k):
        z = wm.step(z, kk)
    return wm.decode(z)


# --- optimisation helpers ------------------------------------------------------------

class _Optimizer:
    """AdamW over several networks driven by one plateau schedule."""

    def __init__(self, nets, cfg: TrainConfig):
        self.nets = list(nets)
        self.sched = cfg.schedule()
        self.states = [AdamWState.for_params(n.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
                       for n in self.nets]

    def step(self, grads_per_net):
        for net, grads, st in zip(self.nets, grads_per_net, self.states):
            adamw_step(net, grads, st)

    def end_epoch(self, loss, stage, window, trace):
        if not math.isfinite(loss):
            raise TrainingError(stage, window, trace)
        lr = self.sched.update(loss)
        for st in self.states:
            st.lr = lr


def _add_grads(a, b):
    return [x + y for x, y in zip(a, b)]


def _seeds(cfg: TrainConfig, tag: int, index: int, n: int) -> list[int]:
    ss = np.random.SeedSequence([cfg.seed, tag, index])
    return [int(s) for s in ss.generate_state(n)]


def _new_propagator(d: int, widths, seed: int) -> ResidualNet:
    return ResidualNet(mlp_init(MlpSpec(d + 1, widths, d + 1), seed))


def _pad_time_grad(g):
    return np.concatenate([g, np.zeros((g.shape[0], 1))], axis=1)


# --- stage 2: joint autoencoder + propagator -------------------------------------

def train_joint(wm: WindowModel, window_data: np.ndarray, cfg: TrainConfig, rng: np.random.Generator,
                lam: float | None = None, train_coder: bool = True, train_propagator: bool = True,
                epochs: int | None = None) -> dict:
    """Minimise L_ae + lam * L_prop on one window's (scaled) data ``[N, T_i + 1, D]``.

    The autoencoder term pools every snapshot of the closed window; the
    propagator term pools the pairs (k, k+1) with k in the half-open window.
    Gradients of the propagator term reach the encoder through both codes.
    Returns the per-epoch trace {"ae": [...], "prop": [...], "total": [...]}.
    """
    lam = cfg.lam if lam is None else lam
    epochs = cfg.epochs_joint if epochs is None else epochs
    coder = wm.coder
    neural = isinstance(coder, NeuralCoder)
    if train_coder and not neural:
        raise ValueError("only neural coders are trained by gradient descent")
    n, t1, dim = window_data.shape
    d = wm.latent_dim
    snaps = window_data.reshape(n * t1, dim)
    pair_n, pair_s = np.meshgrid(np.arange(n), np.arange(t1 - 1), indexing="ij")
    pair_n, pair_s = pair_n.ravel(), pair_s.ravel()
    use_prop = train_propagator and lam > 0
    codes = None
    if not train_coder:
        codes = coder.encode(snaps).reshape(n, t1, d)
    nets = ([coder.encoder, coder.decoder] if train_coder else []) + ([wm.propagator] if use_prop else [])
    opt = _Optimizer(nets, cfg)
    trace = {"ae": [], "prop": [], "total": []}
    B = cfg.batch_size
    # without a trainable coder the propagator pairs drive the epoch instead of the snapshots
    n_items = len(snaps) if train_coder else len(pair_n)
    for epoch in range(epochs):
        order = rng.permutation(n_items)
        pair_order = rng.permutation(len(pair_n)) if use_prop else None
        sum_ae = sum_prop = 0.0
        n_batches = 0
        for b0 in range(0, n_items, B):
            idx = order[b0:b0 + B]
            if use_prop:
                if train_coder:
                    pidx = pair_order[np.arange(b0, b0 + len(idx)) % len(pair_n)]
                else:
                    pidx = idx
                pn, ps = pair_n[pidx], pair_s[pidx]
                kk = wm.start + ps
            grads = []
            l_ae = l_prop = 0.0
            if train_coder:
                xa = snaps[idx]
                if use_prop:
                    x_in = np.concatenate([xa, window_data[pn, ps], window_data[pn, ps + 1]])
                else:
                    x_in = xa
                z_all, c_enc = coder.encoder.forward(x_in)
                na = len(idx)
                recon, c_dec = coder.decoder.forward(z_all[:na])
                l_ae, g_rec = mse_loss(recon, xa)
                g_dec, g_za = coder.decoder.backward(c_dec, g_rec)
                g_z = np.zeros_like(z_all)
                g_z[:na] = g_za
                if use_prop:
                    z0, z1 = z_all[na:na + len(pidx)], z_all[na + len(pidx):]
            elif use_prop:
                z0, z1 = codes[pn, ps], codes[pn, ps + 1]
            if use_prop:
                out, c_p = wm.propagator.forward(np.concatenate([z0, (kk * wm.dt)[:, None]], axis=1))
                l_prop, g_out = mse_loss(out[:, :d], z1)
                g_prop, g_u = wm.propagator.backward(c_p, _pad_time_grad(lam * g_out))
                if train_coder:
                    m = len(pidx)
                    g_z[na:na + m] += g_u[:, :d]
                    g_z[na + m:] -= lam * g_out
            if train_coder:
                g_enc, _ = coder.encoder.backward(c_enc, g_z)
                grads += [g_enc, g_dec]
            if use_prop:
                grads.append(g_prop)
            opt.step(grads)
            sum_ae += l_ae
            sum_prop += l_prop
            n_batches += 1
        ae, prop = sum_ae / n_batches, sum_prop / n_batches
        total = ae + lam * prop
        trace["ae"].append(ae)
        trace["prop"].append(prop)
        trace["total"].append(total)
        opt.end_epoch(total if train_coder else prop, "joint", wm.index, trace["total"])
        if (epoch + 1) % 50 == 0:
            log.info("window %d joint epoch %d: ae %.3e prop %.3e lr %.1e", wm.index, epoch + 1, ae, prop,
                     opt.sched.lr)
    return trace


# --- stage 3: propagator finetuning ----------------------------------------------------

def accumulation_loss(prop: ResidualNet, codes: np.ndarray, start: int, dt: float, grad: bool = False):
    """Mean over trajectories and rollout lengths s = 1..T_i of ||P^s(z_0) - z_s||^2.

    ``codes`` is ``[B, T_i + 1, d]`` with codes[:, 0] at grid index ``start``.
    With ``grad`` also returns the propagator gradients (backprop through the unrolled chain).
    """
    b, t1, d = codes.shape
    steps = t1 - 1
    z = codes[:, 0]
    caches, diffs = [], []
    loss = 0.0
    for s in range(1, t1):
        out, cache = prop.forward(_append_time(z, (start + s - 1) * dt))
        z = out[:, :d]
        caches.append(cache)
        diff = z - codes[:, s]
        diffs.append(diff)
        loss += float(np.sum(diff * diff))
    loss /= b * steps
    if not grad:
        return loss
    grads = None
    g_next = np.zeros((b, d))
    for s in range(steps, 0, -1):
        g_z = (2.0 / (b * steps)) * diffs[s - 1] + g_next
        g, g_u = prop.backward(caches[s - 1], _pad_time_grad(g_z))
        grads = g if grads is None else _add_grads(grads, g)
        g_next = g_u[:, :d]
    return loss, grads


def train_finetune_propagator(wm: WindowModel, window_data: np.ndarray, cfg: TrainConfig,
                              rng: np.random.Generator, epochs: int | None = None) -> list:
    """Stage 3: frozen coder, accumulation loss from the window's first index."""
    epochs = cfg.epochs_finetune if epochs is None else epochs
    n, t1, dim = window_data.shape
    codes = wm.coder.encode(window_data.reshape(n * t1, dim)).reshape(n, t1, -1)
    opt = _Optimizer([wm.propagator], cfg)
    trace = []
    B = cfg.batch_size
    for epoch in range(epochs):
        order = rng.permutation(n)
        total, n_batches = 0.0, 0
        for b0 in range(0, n, B):
            loss, grads = accumulation_loss(wm.propagator, codes[order[b0:b0 + B]], wm.start, wm.dt, grad=True)
            opt.step([grads])
            total += loss
            n_batches += 1
        trace.append(total / n_batches)
        opt.end_epoch(trace[-1], "finetune", wm.index, trace)
        if (epoch + 1) % 50 == 0:
            log.info("window %d finetune epoch %d: %.3e", wm.index, epoch + 1, trace[-1])
    return trace


def train_displacement_propagator(wm: WindowModel, window_data: np.ndarray, cfg: TrainConfig,
                                  rng: np.random.Generator, epochs: int) -> list:
    """One-step (displacement) loss on frozen codes."""
    trace = train_joint(wm, window_data, cfg, rng, lam=1.0, train_coder=False, epochs=epochs)
    return trace["prop"]


# --- stage 4: transcoders --------------------------------------------------------------

def _window_slice(data: np.ndarray, wm: WindowModel) -> np.ndarray:
    return data[:, wm.start:wm.stop + 1]


def transcoder_targets(wm_a: WindowModel, wm_b: WindowModel, data: np.ndarray):
    """(rolled-out codes of window a at its end, window b's codes at the same snapshot)."""
    z = wm_a.coder.encode(data[:, wm_a.start])
    for k in range(wm_a.start, wm_a.stop):
        z = wm_a.step(z, k)
    target = wm_b.coder.encode(data[:, wm_b.start])
    return z, target


def transcoder_loss(tc: ResidualNet, z_in, target, t):
    out = tc(_append_time(z_in, t))[:, :z_in.shape[1]]
    return mse_loss(out, target)[0]


def train_transcoder(wm_a: WindowModel, wm_b: WindowModel, data: np.ndarray, cfg: TrainConfig,
                     tc: ResidualNet | None = None, rng: np.random.Generator | None = None):
    """Stage 4 on scaled data [N, T, D]; all other networks stay frozen. Returns (transcoder, trace)."""
    d = wm_a.latent_dim
    seeds = _seeds(cfg, 20, wm_a.index, 2)
    if tc is None:
        tc = _new_propagator(d, cfg.prop_widths, seeds[0])
    if rng is None:
        rng = np.random.default_rng(seeds[1])
    z_in, target = transcoder_targets(wm_a, wm_b, data)
    t = wm_a.stop * wm_a.dt
    u = _append_time(z_in, t)
    opt = _Optimizer([tc], cfg)
    trace = []
    n = len(u)
    B = cfg.batch_size
    for epoch in range(cfg.epochs_transcoder):
        order = rng.permutation(n)
        total, n_batches = 0.0, 0
        for b0 in range(0, n, B):
            idx = order[b0:b0 + B]
            out, cache = tc.forward(u[idx])
            loss, g = mse_loss(out[:, :d], target[idx])
            grads, _ = tc.backward(cache, _pad_time_grad(g))
            opt.step([grads])
            total += loss
            n_batches += 1
        trace.append(total / n_batches)
        opt.end_epoch(trace[-1], "transcoder", wm_a.index, trace)
    return tc, trace


# --- full training -----------------------------------------------------------------------

def _train_window(args):
    """Stages 2-3 for one window; a pure function of its arguments (used by worker processes)."""
    i, window_data, layout, dt, scale, d, coder_kind, cfg = args
    seeds = _seeds(cfg, 10, i, 4)
    rng = np.random.default_rng(seeds[3])
    n, t1, dim = window_data.shape
    start, stop = layout.boundaries[i], layout.boundaries[i + 1]
    prop = _new_propagator(d, cfg.prop_widths, seeds[2])
    traces = {}
    if coder_kind == "pca":
        coder = pca_fit(window_data.reshape(n * t1, dim), d)
        wm = WindowModel(coder, prop, i, start, stop, dt, scale)
        traces["propagator"] = train_displacement_propagator(wm, window_data, cfg, rng, cfg.epochs_joint)
        traces["finetune"] = train_finetune_propagator(wm, window_data, cfg, rng)
        return wm, traces
    enc = mlp_init(MlpSpec(dim, cfg.ae_widths, d), seeds[0])
    dec = mlp_init(MlpSpec(d, cfg.ae_widths[::-1], dim), seeds[1])
    wm = WindowModel(NeuralCoder(enc, dec), prop, i, start, stop, dt, scale)
    v = cfg.ablation_variant
    if v in ("i", "ii"):
        traces["joint"] = train_joint(wm, window_data, cfg, rng)
        if v == "i":
            traces["finetune"] = train_finetune_propagator(wm, window_data, cfg, rng)
        else:
            traces["finetune"] = train_displacement_propagator(wm, window_data, cfg, rng, cfg.epochs_finetune)
    else:
        traces["joint"] = train_joint(wm, window_data, cfg, rng, lam=0.0, train_propagator=False)
        if v == "iii":
            traces["finetune"] = train_finetune_propagator(wm, window_data, cfg, rng, cfg.propagator_epochs)
        else:
            traces["finetune"] = train_displacement_propagator(wm, window_data, cfg, rng, cfg.propagator_epochs)
    return wm, traces


def max_workers(n_tasks: int) -> int:
    cap = os.environ.get("WELD_THREADS")
    cores = os.cpu_count() or 1
    workers = min(n_tasks, cores)
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def train_weldnet(train_values: np.ndarray, time: TimeGrid, coder_kind: str = "ff", W: int = 4, d: int = 4,
                  cfg: TrainConfig | None = None, parallel_windows: bool = False) -> WeldModel:
    """Train on trajectories ``[N, T, D]`` (the training split)."""
    cfg = cfg or TrainConfig()
    if coder_kind not in CODER_KINDS:
        raise ValueError(f"coder kind must be one of {CODER_KINDS}")
    values = np.asarray(train_values, dtype=np.float64)
    n, t, dim = values.shape
    if t != time.n_steps:
        raise ValueError(f"data has {t} time steps, time grid has {time.n_steps}")
    layout = split_windows(time, W)
    scale = float(np.sqrt(np.mean(values ** 2))) if cfg.normalize else 1.0
    if not scale > 0:
        scale = 1.0
    scaled = values / scale
    tasks = [(i, scaled[:, layout.boundaries[i]:layout.boundaries[i + 1] + 1], layout, time.dt, scale, d,
              coder_kind, cfg) for i in range(W)]
    workers = max_workers(W) if parallel_windows else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_window, tasks))
    else:
        results = [_train_window(task) for task in tasks]
    windows = [r[0] for r in results]
    traces = {f"window{i}": r[1] for i, r in enumerate(results)}
    transcoders = []
    for i in range(W - 1):
        tc, tr = train_transcoder(windows[i], windows[i + 1], scaled, cfg)
        transcoders.append(tc)
        traces[f"transcoder{i}"] = tr
    meta = {"config": cfg.to_dict(), "traces": traces, "data_scale": scale, "n_train": n}
    return WeldModel(layout, windows, transcoders, d, time.dt, coder_kind, meta)


# --- persistence -------------------------------------------------------------------------

MANIFEST = "manifest.json"


def save_weldnet(model: WeldModel, directory, extra: dict | None = None) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for wm in model.windows:
        i = wm.index
        if isinstance(wm.coder, PcaModel):
            name = f"window{i}_pca.ckpt"
            write_container(out / name, {"kind": "pca", "window": i}, wm.coder.arrays())
            files.append(name)
        else:
            for role, net in (("encoder", wm.coder.encoder), ("decoder", wm.coder.decoder)):
                name = f"window{i}_{role}.ckpt"
                save_net(out / name, net, role=role, window=i)
                files.append(name)
        name = f"window{i}_propagator.ckpt"
        save_net(out / name, wm.propagator, role="propagator", window=i)
        files.append(name)
    for i, tc in enumerate(model.transcoders):
        name = f"transcoder{i}.ckpt"
        save_net(out / name, tc, role="transcoder", window=i)
        files.append(name)
    manifest = {
        "kind": "weldnet",
        "coder": model.coder_kind,
        "layout": {"n_windows": model.layout.n_windows, "boundaries": list(model.layout.boundaries)},
        "latent_dim": model.latent_dim,
        "delta_t": model.delta_t,
        "ambient_dim": model.ambient_dim,
        "n_times": model.n_times,
        "files": files,
        **model.train_meta,
        **(extra or {}),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_weldnet(directory) -> WeldModel:
    src = Path(directory)
    m = json.loads((src / MANIFEST).read_text())
    if m.get("kind") != "weldnet":
        raise ValueError(f"{src} does not hold a WeldNet model (kind={m.get('kind')})")
    layout = WindowLayout(m["layout"]["n_windows"], tuple(m["layout"]["boundaries"]))
    scale = m.get("data_scale", 1.0)
    windows = []
    for i in range(layout.n_windows):
        if m["coder"] == "pca":
            _, arr = read_container(src / f"window{i}_pca.ckpt")
            coder = PcaModel(arr["mean"], arr["components"], arr["eigenvalues"])
        else:
            enc, _ = load_net(src / f"window{i}_encoder.ckpt")
            dec, _ = load_net(src / f"window{i}_decoder.ckpt")
            coder = NeuralCoder(enc, dec)
        prop, _ = load_net(src / f"window{i}_propagator.ckpt")
        windows.append(WindowModel(coder, prop, i, layout.boundaries[i], layout.boundaries[i + 1],
                                   m["delta_t"], scale))
    transcoders = [load_net(src / f"transcoder{i}.ckpt")[0] for i in range(layout.n_windows - 1)]
    meta = {k: m[k] for k in ("config", "traces", "data_scale", "n_train") if k in m}
    return WeldModel(layout, windows, transcoders, m["latent_dim"], m["delta_t"], m["coder"], meta)
