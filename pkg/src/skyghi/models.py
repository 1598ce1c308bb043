"""Sky classifier, GHI regressor, their metrics and k-fold cross-validation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySet,
    InsufficientData,
    LengthMismatch,
    SingleClassData,
    TooFewRows,
    UntrainedModel,
    ZeroVariance,
)
from .features import fit_scaler
from .neuralnet import (
    LayerSpec,
    NetworkModel,
    backward,
    cross_entropy_loss,
    forward,
    init_params,
    l2_penalty,
    mse_loss,
    softmax,
)
from .optim import SgdNesterovState, lbfgs_minimize, sgd_nesterov_step

CLEAR, CLOUDY = 0, 1
LABELS = ("clear", "cloudy")


@dataclass(frozen=True)
class ClassifierConfig:
    input_dim: int = 64
    hidden_units: int = 27
    activation: str = "sigmoid"
    l2: float = 0.01
    lbfgs_memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6

    def layer_specs(self):
        return [LayerSpec(self.hidden_units, self.activation), LayerSpec(2, "linear")]


@dataclass(frozen=True)
class RegressorConfig:
    input_dim: int = 256
    hidden_units: tuple = (256, 128, 128, 64, 37)
    activation: str = "relu"
    dropout: tuple = (0.5, 0.5, 0.5, 0.5, 0.3)
    batch_norm: bool = True
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 128
    standardize_target: bool = True

    def layer_specs(self):
        if len(self.dropout) != len(self.hidden_units):
            raise ValueError("one dropout rate per hidden layer is required")
        hidden = [LayerSpec(u, self.activation, r, self.batch_norm)
                  for u, r in zip(self.hidden_units, self.dropout)]
        return hidden + [LayerSpec(1, "linear")]


def _matrix(features, input_dim):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != input_dim:
        raise DimensionMismatch(f"expected {input_dim} features, got {x.shape[1]}")
    return x


def _child_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def train_classifier(features, labels, config: ClassifierConfig = ClassifierConfig(),
                     seed: int = 0) -> NetworkModel:
    """Fit the one-hidden-layer clear/cloudy network with full-batch L-BFGS.

    The objective is the cross-entropy of the softmax output summed over the
    training rows plus ``config.l2 * sum(W**2)`` over the dense weights, so
    the penalty's weight relative to the data shrinks as rows are added.
    """
    x = _matrix(features, config.input_dim)
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    if len(y) != len(x):
        raise LengthMismatch("features and labels differ in length")
    if len(x) < 2 or len(np.unique(y)) < 2:
        raise SingleClassData("training data must contain both classes")
    if not np.all((y == CLEAR) | (y == CLOUDY)):
        raise ValueError("labels must be 0 (clear) or 1 (cloudy)")
    one_hot = np.eye(2)[y]
    n = len(x)
    model = init_params(config.layer_specs(), config.input_dim, seed)

    def objective(theta):
        model.set_params(theta)
        out, cache = forward(model, x, mode="train")
        ce, dscores = cross_entropy_loss(softmax(out), one_hot)
        grads = backward(model, cache, n * dscores)
        pen, dpen = l2_penalty(model, config.l2)
        return n * ce + pen, grads.flat + dpen

    result = lbfgs_minimize(objective, model.params.copy(), memory=config.lbfgs_memory,
                            max_iters=config.max_iters, grad_tol=config.grad_tol)
    model.set_params(result.x)
    model.eval()
    model.trained = True
    model.task = "classifier"
    return model


def _require_trained(model):
    if not getattr(model, "trained", False):
        raise UntrainedModel("model has not been trained")


def class_probabilities(model: NetworkModel, features) -> np.ndarray:
    _require_trained(model)
    out, _ = forward(model, _matrix(features, model.input_dim), mode="infer")
    return softmax(out)


def classify_batch(model: NetworkModel, features):
    probs = class_probabilities(model, features)
    # exact 0.5/0.5 ties go to clear
    labels = (probs[:, CLOUDY] > probs[:, CLEAR]).astype(np.int64)
    return labels, probs


def classify(model: NetworkModel, pcnp_row):
    """Return ``(label, probabilities)`` for one standardized PCNP row."""
    labels, probs = classify_batch(model, pcnp_row)
    return int(labels[0]), probs[0]


def train_regressor(features, targets, config: RegressorConfig = RegressorConfig(),
                    seed: int = 0, progress=None) -> NetworkModel:
    """Fit the deep GHI network with mini-batch SGD and Nesterov momentum.

    Targets are standardized internally (the model stores the shift and
    scale). Each epoch reshuffles the rows; a trailing batch of a single
    row is skipped because batch norm cannot normalize it.
    """
    x = _matrix(features, config.input_dim)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(y) != len(x):
        raise LengthMismatch("features and targets differ in length")
    if len(x) < 2 * config.batch_size:
        raise InsufficientData(
            f"need at least {2 * config.batch_size} rows, got {len(x)}")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise ValueError("GHI targets must be finite and non-negative")
    init_seed, shuffle_seed = _child_seeds(seed, 2)
    model = init_params(config.layer_specs(), config.input_dim, init_seed)
    if config.standardize_target:
        shift = float(y.mean())
        scale = float(y.std()) or 1.0
    else:
        shift, scale = 0.0, 1.0
    ys = ((y - shift) / scale)[:, None]
    rng = np.random.default_rng(shuffle_seed)
    state = SgdNesterovState(config.learning_rate, config.momentum)
    n = len(x)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            xb, yb = x[idx], ys[idx]

            def grad_fn(theta):
                model.set_params(theta)
                out, cache = forward(model, xb, rng=rng, mode="train")
                _, dout = mse_loss(out, yb)
                return backward(model, cache, dout).flat

            new_params, state = sgd_nesterov_step(state, model.params.copy(), grad_fn)
            model.set_params(new_params)
        if progress is not None:
            progress(epoch, model)
    model.target_shift = shift
    model.target_scale = scale
    model.eval()
    model.trained = True
    model.task = "regressor"
    return model


def estimate_ghi_batch(model: NetworkModel, features) -> np.ndarray:
    _require_trained(model)
    out, _ = forward(model, _matrix(features, model.input_dim), mode="infer")
    ghi = model.target_shift + model.target_scale * out[:, 0]
    return np.maximum(ghi, 0.0)


def estimate_ghi(model: NetworkModel, pcnp_row) -> float:
    """GHI in W/m^2 for one standardized PCNP row, floored at zero."""
    return float(estimate_ghi_batch(model, pcnp_row)[0])


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions).reshape(-1)
    t = np.asarray(labels).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch("predictions and labels differ in length")
    if len(p) == 0:
        raise EmptySet("no predictions")
    return float((p == t).mean())


def r2_score(pred, target) -> float:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch("pred and target differ in length")
    ss_tot = ((t - t.mean()) ** 2).sum()
    if len(t) == 0 or ss_tot == 0:
        raise ZeroVariance("target has zero variance")
    return float(1.0 - ((t - p) ** 2).sum() / ss_tot)


def mae(pred, target) -> float:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch("pred and target differ in length")
    if len(p) == 0:
        raise EmptySet("no values")
    return float(np.abs(p - t).mean())


def classifier_metrics(model, features, labels) -> dict:
    pred, _ = classify_batch(model, features)
    return {"accuracy": accuracy(pred, labels)}


def regressor_metrics(model, features, targets) -> dict:
    pred = estimate_ghi_batch(model, features)
    return {"r2": r2_score(pred, targets), "mae": mae(pred, targets)}


METRICS = ("accuracy", "r2", "mae")


@dataclass
class EvalReport:
    folds: list = field(default_factory=list)       # one metric dict per fold
    fold_sizes: list = field(default_factory=list)
    fold_indices: list = field(default_factory=list)

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def values(self, metric) -> np.ndarray:
        return np.array([f[metric] for f in self.folds if metric in f], dtype=np.float64)

    def mean(self, metric) -> float:
        return float(self.values(metric).mean())

    def std(self, metric) -> float:
        return float(self.values(metric).std())

    @property
    def accuracy(self):
        return self.mean("accuracy")

    @property
    def r2(self):
        return self.mean("r2")

    @property
    def mae(self):
        return self.mean("mae")

    def metric_names(self):
        return [m for m in METRICS if any(m in f for f in self.folds)]

    def rows(self):
        names = self.metric_names()
        out = [[str(i)] + [repr(float(f[m])) if m in f else "" for m in names]
               for i, f in enumerate(self.folds)]
        out.append(["mean"] + [repr(self.mean(m)) for m in names])
        out.append(["std"] + [repr(self.std(m)) for m in names])
        return ["fold"] + names, out

    def to_csv(self, path) -> None:
        header, rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


def kfold_indices(n: int, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Validation indices of each fold: a seeded shuffle cut into k contiguous runs."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if n < k:
        raise TooFewRows(f"{n} rows cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def kfold_cv(features, targets, train_fn, eval_fn, k: int = 10, seed: int = 0,
             scaler_fn=fit_scaler) -> EvalReport:
    """Cross-validate ``train_fn``/``eval_fn`` over k folds.

    For every fold the scaler is fitted on the training rows only and then
    applied to both portions. ``train_fn(x, y, seed)`` receives the fold seed
    ``seed + fold``; ``eval_fn(model, x, y)`` returns a dict of metrics.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets)
    if len(x) != len(y):
        raise LengthMismatch("features and targets differ in length")
    folds = kfold_indices(len(x), k, seed)
    report = EvalReport()
    for i, val in enumerate(folds):
        train = np.setdiff1d(np.arange(len(x)), val, assume_unique=True)
        scaler = scaler_fn(x[train])
        model = train_fn(scaler.transform(x[train]), y[train], seed + i)
        metrics = eval_fn(model, scaler.transform(x[val]), y[val])
        report.folds.append(dict(metrics))
        report.fold_sizes.append(len(val))
        report.fold_indices.append(val)
    return report


def train_test_split(n: int, train_fraction: float, seed: int):
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    return perm[:cut], perm[cut:]
