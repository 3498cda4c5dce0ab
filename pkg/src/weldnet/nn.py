"""Dense ReLU networks with hand-written backpropagation, AdamW and a plateau schedule.

Arrays are float64 numpy matrices with one sample per row.  A layer maps
``x @ W + b`` so ``weights[l]`` has shape ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        dims = self.dims
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer widths must be >= 1, got {dims}")

    @property
    def dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_widths, self.output_dim]

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_widths": list(self.hidden_widths),
                "output_dim": self.output_dim, "activation": "relu"}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(d["input_dim"], tuple(d["hidden_widths"]), d["output_dim"])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]      # input to each affine layer (post-activation of previous)
    pre: list[np.ndarray]         # pre-activations of hidden layers
    version: int
    owner: int


class MlpNet:
    """ReLU feedforward network ``W_{L+1} relu(... relu(W_1 x + b_1) ...) + b_{L+1}``."""

    def __init__(self, spec: MlpSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        dims = spec.dims
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise ShapeError("layer count does not match spec")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ShapeError(f"layer {l}: got W{w.shape} b{b.shape}, "
                                 f"expected W{(dims[l], dims[l + 1])} b{(dims[l + 1],)}")
        self.spec = spec
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.version = 0

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MlpNet":
        return MlpNet(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        return mlp_forward(self, x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return mlp_forward(self, x)[0]

    def backward(self, cache: ForwardCache, grad_output: np.ndarray):
        return mlp_backward(self, cache, grad_output)


def mlp_init(spec: MlpSpec, seed: int) -> MlpNet:
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = spec.dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpNet(spec, weights, biases)


def identity_net(d: int, n_hidden: int = 1, width: int | None = None) -> MlpNet:
    """ReLU network that reproduces its input exactly, via relu(x) - relu(-x) = x.

    Hidden layers have width ``width >= 2d``; extra units are zero-padded.
    """
    width = 2 * d if width is None else width
    if width < 2 * d:
        raise ValueError("identity construction needs width >= 2d")
    eye = np.eye(d)
    first = np.zeros((d, width))
    first[:, :d] = eye
    first[:, d:2 * d] = -eye
    last = np.zeros((width, d))
    last[:d] = eye
    last[d:2 * d] = -eye
    middle = np.zeros((width, width))
    middle[:2 * d, :2 * d] = np.eye(2 * d)
    weights = [first] + [middle.copy() for _ in range(n_hidden - 1)] + [last]
    biases = [np.zeros(width) for _ in range(n_hidden)] + [np.zeros(d)]
    return MlpNet(MlpSpec(d, (width,) * n_hidden, d), weights, biases)


def mlp_forward(net: MlpNet, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise ShapeError(f"expected batch with {net.spec.input_dim} columns, got shape {x.shape}")
    inputs, pre = [], []
    h = x
    n_layers = len(net.weights)
    for l in range(n_layers):
        inputs.append(h)
        a = h @ net.weights[l]
        a += net.biases[l]
        if l < n_layers - 1:
            pre.append(a)
            h = np.maximum(a, 0.0)
        else:
            h = a
    return h, ForwardCache(inputs, pre, net.version, id(net))


def mlp_backward(net: MlpNet, cache: ForwardCache, grad_output: np.ndarray):
    """Reverse pass.  Returns ``(grads, grad_input)`` where ``grads`` lines up with ``net.params``."""
    if cache.owner != id(net) or cache.version != net.version:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    g = np.asarray(grad_output, dtype=np.float64)
    batch = cache.inputs[0].shape[0]
    if g.shape != (batch, net.spec.output_dim):
        raise ShapeError(f"grad_output shape {g.shape} != {(batch, net.spec.output_dim)}")
    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        gw[l] = cache.inputs[l].T @ g
        gb[l] = g.sum(axis=0)
        g = g @ net.weights[l].T
        if l > 0:
            # relu'(0) := 0
            g = g * (cache.pre[l - 1] > 0.0)
    return gw + gb, g


class ResidualNet:
    """Displacement map ``z -> z + inner(z)`` on a square inner network."""

    def __init__(self, inner: MlpNet):
        if inner.spec.input_dim != inner.spec.output_dim:
            raise ShapeError("residual wrapper needs input_dim == output_dim")
        self.inner = inner

    @property
    def spec(self) -> MlpSpec:
        return self.inner.spec

    @property
    def params(self) -> list[np.ndarray]:
        return self.inner.params

    def copy(self) -> "ResidualNet":
        return ResidualNet(self.inner.copy())

    def forward(self, z: np.ndarray):
        out, cache = mlp_forward(self.inner, z)
        return out + cache.inputs[0], cache

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.forward(z)[0]

    def backward(self, cache: ForwardCache, grad_output: np.ndarray):
        grads, g_in = mlp_backward(self.inner, cache, grad_output)
        return grads, g_in + grad_output


def residual_forward(rnet: ResidualNet, z: np.ndarray):
    return rnet.forward(z)


def residual_backward(rnet: ResidualNet, cache: ForwardCache, grad_output: np.ndarray):
    return rnet.backward(cache, grad_output)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch mean of squared row norms, and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    batch = pred.shape[0]
    return float(np.sum(diff * diff) / batch), (2.0 / batch) * diff


@dataclass
class AdamWState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-4, **kw) -> "AdamWState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr=lr, **kw)


# Moments of parameters whose gradient stays exactly zero (dead units, all-zero input
# columns) decay geometrically into the subnormal range, where float arithmetic is
# orders of magnitude slower.  Such entries contribute updates far below one ulp of
# any parameter, so they are periodically set to zero.
FLUSH_EVERY = 256
FLUSH_BELOW = 1e-200


def _flush_tiny(a: np.ndarray) -> None:
    a[np.abs(a) < FLUSH_BELOW] = 0.0


def adamw_step(net, grads: list[np.ndarray], state: AdamWState) -> None:
    """In-place AdamW update with decoupled weight decay (bias-corrected moments)."""
    params = net.params
    if len(grads) != len(params):
        raise ShapeError("gradient list does not match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    step_size = state.lr / c1
    inv_sqrt_c2 = 1.0 / math.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"grad {g.shape} vs param {p.shape}")
        if state.weight_decay:
            p *= 1.0 - state.lr * state.weight_decay
        # in-place arithmetic on one scratch buffer; the optimizer dominates small-network step time
        tmp = np.multiply(g, 1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp *= inv_sqrt_c2
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p -= tmp
        if state.step % FLUSH_EVERY == 0:
            _flush_tiny(m)
            _flush_tiny(v)
    inner = getattr(net, "inner", net)
    inner.version += 1


@dataclass
class PlateauSchedule:
    lr: float = 1e-4
    factor: float = 0.3
    patience: int = 15
    min_lr: float = 1e-6
    best_loss: float = math.inf
    epochs_since_improve: int = 0
    history: list[float] = field(default_factory=list)

    def update(self, epoch_loss: float) -> float:
        return plateau_update(self, epoch_loss)


def plateau_update(sched: PlateauSchedule, epoch_loss: float) -> float:
    """Record one epoch loss; decay the rate after ``patience`` epochs without strict improvement."""
    if not math.isfinite(epoch_loss):
        raise FloatingPointError(f"non-finite epoch loss {epoch_loss}")
    if epoch_loss < sched.best_loss:
        sched.best_loss = epoch_loss
        sched.epochs_since_improve = 0
    else:
        sched.epochs_since_improve += 1
        if sched.epochs_since_improve > sched.patience:
            sched.lr = max(sched.lr * sched.factor, sched.min_lr)
            sched.epochs_since_improve = 0
    sched.history.append(sched.lr)
    return sched.lr
