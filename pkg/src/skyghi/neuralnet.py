"""Small feed-forward network engine with hand-written backpropagation.

Hidden layers run dense -> batch norm (optional) -> activation -> dropout
(optional, train mode only). All arithmetic is float64.

Trainable parameters of a :class:`NetworkModel` live in a single flat
vector (``model.params``); the per-layer arrays are views into it, so
optimizers can work on flat vectors directly. Gradients use the same
layout.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBatch,
    DimensionMismatch,
    InvalidDistribution,
    LengthMismatch,
    StaleCache,
)

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class LayerSpec:
    units: int
    activation: str = "linear"
    dropout_rate: float = 0.0
    batch_norm: bool = False

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("units must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


def _trainable_shapes(spec: LayerSpec, fan_in: int):
    shapes = [("weights", (fan_in, spec.units))]
    if spec.batch_norm:
        # beta already shifts each unit, so a dense bias would be redundant
        shapes += [("gamma", (spec.units,)), ("beta", (spec.units,))]
    else:
        shapes.append(("biases", (spec.units,)))
    return shapes


class _ParamBuffer:
    """Flat float64 buffer exposing per-layer named views."""

    def __init__(self, specs, input_dim, data=None):
        self.layout = []
        offset = 0
        fan_in = input_dim
        for i, spec in enumerate(specs):
            for name, shape in _trainable_shapes(spec, fan_in):
                size = int(np.prod(shape))
                self.layout.append((i, name, shape, offset, size))
                offset += size
            fan_in = spec.units
        self.size = offset
        self.flat = np.zeros(offset) if data is None else data
        self.layers = [dict() for _ in specs]
        for i, name, shape, off, size in self.layout:
            self.layers[i][name] = self.flat[off:off + size].reshape(shape)
            if data is None and name == "gamma":
                self.layers[i][name][:] = 1.0

    def weight_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        for _, name, _, off, size in self.layout:
            if name == "weights":
                mask[off:off + size] = True
        return mask


class NetworkModel:
    """Layer specs plus their parameters and batch-norm running statistics.

    ``target_shift``/``target_scale`` undo any target standardization applied
    during training: the public prediction is ``shift + scale * output``.
    """

    def __init__(self, specs, input_dim: int):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
        if not self.specs:
            raise ValueError("a network needs at least one layer")
        self.input_dim = int(input_dim)
        self._buf = _ParamBuffer(self.specs, self.input_dim)
        self.running_mean = [np.zeros(s.units) if s.batch_norm else None for s in self.specs]
        self.running_var = [np.ones(s.units) if s.batch_norm else None for s in self.specs]
        self.mode = "train"
        self.trained = False
        self.task = None  # "classifier" or "regressor" once trained
        self.target_shift = 0.0
        self.target_scale = 1.0
        self._version = 0

    @property
    def params(self) -> np.ndarray:
        return self._buf.flat

    @property
    def layers(self) -> list[dict]:
        return self._buf.layers

    @property
    def output_dim(self) -> int:
        return self.specs[-1].units

    def fan_in(self, i: int) -> int:
        return self.input_dim if i == 0 else self.specs[i - 1].units

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise DimensionMismatch(f"expected {self.params.shape[0]} parameters, got {flat.shape}")
        self._buf.flat[:] = flat
        self._version += 1

    def mark_modified(self) -> None:
        self._version += 1

    def weight_mask(self) -> np.ndarray:
        return self._buf.weight_mask()

    def copy(self) -> "NetworkModel":
        clone = copy.copy(self)
        clone._buf = _ParamBuffer(self.specs, self.input_dim, self._buf.flat.copy())
        clone.running_mean = [None if a is None else a.copy() for a in self.running_mean]
        clone.running_var = [None if a is None else a.copy() for a in self.running_var]
        return clone

    def train(self) -> "NetworkModel":
        self.mode = "train"
        return self

    def eval(self) -> "NetworkModel":
        self.mode = "infer"
        return self


class GradientSet:
    """Gradients laid out exactly like a model's trainable parameters."""

    def __init__(self, model: NetworkModel):
        self._buf = _ParamBuffer(model.specs, model.input_dim)

    @property
    def flat(self) -> np.ndarray:
        return self._buf.flat

    @property
    def layers(self) -> list[dict]:
        return self._buf.layers


@dataclass
class ForwardCache:
    model_id: int
    version: int
    train: bool
    steps: list


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z, h):
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return h * (1.0 - h)
    if name == "tanh":
        return 1.0 - h * h
    return None


def forward(model: NetworkModel, batch, rng=None, mode: str | None = None,
            update_stats: bool = True):
    """Run a batch through the network.

    Returns ``(outputs, cache)``. In train mode batch norm normalizes with the
    batch's own mean and (biased) variance and, if ``update_stats``, folds them
    into the running statistics; dropout draws from ``rng`` and rescales the
    kept units by ``1 / (1 - rate)``. Infer mode uses the running statistics,
    skips dropout and consumes no randomness.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected (n, {model.input_dim}) input, got {x.shape}")
    train = (mode or model.mode) == "train"
    steps = []
    a = x
    for i, (spec, p) in enumerate(zip(model.specs, model.layers)):
        step = {"input": a}
        z = a @ p["weights"]
        if spec.batch_norm:
            if train:
                if len(z) < 2:
                    raise DegenerateBatch("batch norm needs at least 2 rows in train mode")
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_stats:
                    model.running_mean[i] *= BN_MOMENTUM
                    model.running_mean[i] += (1 - BN_MOMENTUM) * mu
                    model.running_var[i] *= BN_MOMENTUM
                    model.running_var[i] += (1 - BN_MOMENTUM) * var
            else:
                mu, var = model.running_mean[i], model.running_var[i]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv_std
            step["xhat"] = xhat
            step["inv_std"] = inv_std
            z = p["gamma"] * xhat + p["beta"]
        else:
            z = z + p["biases"]
        h = _activate(spec.activation, z)
        step["pre"] = z
        step["act"] = h
        if train and spec.dropout_rate > 0:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng")
            keep = 1.0 - spec.dropout_rate
            drop = (rng.random(h.shape) < keep) / keep
            step["drop"] = drop
            h = h * drop
        steps.append(step)
        a = h
    return a, ForwardCache(id(model), model._version, train, steps)


def backward(model: NetworkModel, cache: ForwardCache, loss_grad) -> GradientSet:
    """Exact parameter gradients given d(loss)/d(outputs) for the cached pass."""
    if cache.model_id != id(model) or cache.version != model._version:
        raise StaleCache("cache does not belong to the model's current parameters")
    g = np.asarray(loss_grad, dtype=np.float64)
    out_shape = cache.steps[-1]["act"].shape
    if g.ndim == 1 and out_shape[1] == 1:
        g = g[:, None]
    if g.shape != out_shape:
        raise DimensionMismatch(f"loss gradient shape {g.shape} != output shape {out_shape}")
    grads = GradientSet(model)
    for i in reversed(range(len(model.specs))):
        spec, p, step, gp = model.specs[i], model.layers[i], cache.steps[i], grads.layers[i]
        if "drop" in step:
            g = g * step["drop"]
        dact = _activation_grad(spec.activation, step["pre"], step["act"])
        if dact is not None:
            g = g * dact
        if spec.batch_norm:
            xhat = step["xhat"]
            gp["gamma"][:] = (g * xhat).sum(axis=0)
            gp["beta"][:] = g.sum(axis=0)
            dxhat = g * p["gamma"]
            if cache.train:
                n = len(dxhat)
                g = (step["inv_std"] / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            else:
                g = dxhat * step["inv_std"]
        else:
            gp["biases"][:] = g.sum(axis=0)
        gp["weights"][:] = step["input"].T @ g
        if i > 0:
            g = g @ p["weights"].T
    return grads


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape[0] != target.shape[0] or pred.size != target.size:
        raise LengthMismatch(f"pred has {pred.size} entries, target {target.size}")
    diff = pred - target.reshape(pred.shape)
    n = pred.shape[0]
    return float((diff * diff).sum() / n), 2.0 * diff / n


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(probabilities, one_hot):
    """Mean negative log-likelihood of softmax probabilities.

    The gradient is taken with respect to the scores fed to the softmax,
    i.e. ``(probabilities - one_hot) / n``.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(one_hot, dtype=np.float64)
    if p.shape != t.shape:
        raise LengthMismatch(f"shape {p.shape} != {t.shape}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidDistribution("probability rows must be non-negative and sum to 1")
    n = len(p)
    logs = np.log(np.maximum(p, np.finfo(np.float64).tiny))
    value = -float(np.where(t > 0, t * logs, 0.0).sum() / n)
    return value, (p - t) / n


def l2_penalty(model: NetworkModel, lam: float):
    """``lam * sum(W**2)`` over dense weights only, and its flat gradient."""
    mask = model.weight_mask()
    w = np.where(mask, model.params, 0.0)
    return float(lam * (w * w).sum()), 2.0 * lam * w


def init_params(specs, input_dim: int, seed: int) -> NetworkModel:
    """He-uniform weights for relu layers, Xavier-uniform otherwise."""
    model = NetworkModel(specs, input_dim)
    rng = np.random.default_rng(seed)
    for i, (spec, p) in enumerate(zip(model.specs, model.layers)):
        fan_in = model.fan_in(i)
        if spec.activation == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + spec.units))
        p["weights"][:] = rng.uniform(-limit, limit, size=p["weights"].shape)
    model.mark_modified()
    return model


def predict(model: NetworkModel, batch) -> np.ndarray:
    """Raw network outputs in infer mode (no target rescaling)."""
    out, _ = forward(model, batch, mode="infer")
    return out
