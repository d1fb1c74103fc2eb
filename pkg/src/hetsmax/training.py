"""Losses, optimizers, and training loops for the noisy-label experiments.

One training run is single-worker and fully deterministic given its seed:
parameter init, minibatch order, utility noise, and dropout masks each draw
from their own derived stream. Early stopping watches validation accuracy
with a fixed set of evaluation draws so the comparison across epochs is
free of Monte Carlo jitter; the best-validation checkpoint is restored
before returning.

Three noisy-label baselines share the loop: bootstrapped soft targets,
self-paced example weighting with an EMA loss threshold, and co-teaching
with crosswise small-loss selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    NonFiniteError,
    Tape,
    Tensor,
    add,
    index_select,
    leaky_relu,
    log,
    matmul,
    mean_reduce,
    mul,
    scale,
)
from .data import NoisyDataset
from .head import (
    HetHead,
    HetHeadConfig,
    init_het_head,
    latent_utilities,
    mc_class_probs,
)
from .metrics import GradVarTracker
from .rng import SeededRng

__all__ = [
    "MLPSpec",
    "OptimizerConfig",
    "TrainConfig",
    "BootstrapConfig",
    "MentorNetConfig",
    "CoTeachingConfig",
    "SelfPacedState",
    "TrainedModel",
    "TrainingDiverged",
    "MENTORNET_LAMBDA2_GRID",
    "MENTORNET_BURN_IN_GRID",
    "init_mlp",
    "mlp_forward",
    "mc_nll_loss",
    "mc_nll_per_example",
    "hetero_regression_nll",
    "bootstrap_targets",
    "soft_cross_entropy",
    "selfpaced_weights",
    "mentornet_het_equivalence_check",
    "coteaching_select",
    "fit",
]

# Probability floor inside the NLL: keeps log finite even if a class
# probability collapses to the smallest positive float.
NLL_FLOOR = 1e-323

# Search grids used for the self-paced baseline in the original recipe.
MENTORNET_LAMBDA2_GRID = (0.0, 0.5, 1.0, 2.0)
MENTORNET_BURN_IN_GRID = (0, 5, 10)


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite value; carries epoch and batch index."""

    def __init__(self, epoch: int, batch: int, cause: Exception):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {cause}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class MLPSpec:
    """Fully-connected backbone; the last width is the representation dim."""

    in_dim: int
    hidden: tuple = (32, 32)
    slope: float = 0.01
    dropout: tuple = ()  # per hidden block, optional

    def __post_init__(self):
        self.hidden = tuple(int(w) for w in self.hidden)
        self.dropout = tuple(float(p) for p in self.dropout)
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be positive")
        if any(not 0.0 <= p < 1.0 for p in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.dropout and len(self.dropout) != len(self.hidden):
            raise ValueError("dropout needs one rate per hidden block")

    @property
    def repr_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.in_dim


@dataclass
class OptimizerConfig:
    kind: str = "adam"  # or "sgd"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    momentum: float = 0.9

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


@dataclass
class BootstrapConfig:
    beta: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("bootstrap beta must lie in [0, 1]")


@dataclass
class MentorNetConfig:
    lambda2: float = 1.0
    burn_in_epochs: int = 5
    ema_decay: float = 0.9
    noise_rate: float | None = None  # filled from the corruption spec if None

    def __post_init__(self):
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")
        if self.lambda2 < 0:
            raise ValueError("lambda2 must be non-negative")
        if self.noise_rate is not None and not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must lie in [0, 1)")


@dataclass
class CoTeachingConfig:
    noise_rate: float | None = None
    ramp_epochs: int = 10  # epochs to linearly lower the keep fraction

    def __post_init__(self):
        if self.ramp_epochs < 1:
            raise ValueError("ramp_epochs must be positive")
        if self.noise_rate is not None and not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must lie in [0, 1)")


@dataclass
class TrainConfig:
    max_epochs: int = 1000
    patience: int = 10
    batch_size: int = 128
    baseline: str = "none"  # none | bootstrap | mentornet | coteaching
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    mentornet: MentorNetConfig = field(default_factory=MentorNetConfig)
    coteaching: CoTeachingConfig = field(default_factory=CoTeachingConfig)
    early_stop_samples: int = 100  # MC draws for the per-epoch accuracy check
    track_gradients: bool = True
    grad_ema_decay: float = 0.9

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.baseline not in ("none", "bootstrap", "mentornet", "coteaching"):
            raise ValueError(f"unknown baseline {self.baseline!r}")


def init_mlp(spec: MLPSpec, rng: SeededRng) -> list:
    """He-initialised (W, b) pairs for every hidden block."""
    layers = []
    fan_in = spec.in_dim
    for width in spec.hidden:
        std = math.sqrt(2.0 / fan_in)
        w = Tensor(std * rng.gaussian(fan_in * width).reshape(fan_in, width))
        b = Tensor(np.zeros(width))
        layers.append((w, b))
        fan_in = width
    return layers


def mlp_forward(layers: list, x: Tensor, spec: MLPSpec,
                dropout_rng: SeededRng | None = None) -> Tensor:
    """Leaky-ReLU MLP representation; inverted dropout only when rng given."""
    h = x
    for i, (w, b) in enumerate(layers):
        h = leaky_relu(add(matmul(h, w), b), slope=spec.slope)
        if dropout_rng is not None and spec.dropout and spec.dropout[i] > 0:
            p = spec.dropout[i]
            keep = dropout_rng.uniform(h.size).reshape(h.shape) >= p
            h = mul(h, Tensor(keep / (1.0 - p)))
    return h


@dataclass
class TrainedModel:
    """A backbone plus head with enough config to rebuild its predictions."""

    mlp: list
    head: HetHead
    mlp_spec: MLPSpec
    head_cfg: HetHeadConfig

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.mlp):
            out[f"mlp.{i}.w"] = w
            out[f"mlp.{i}.b"] = b
        out.update(self.head.params())
        return out

    def snapshot(self) -> dict:
        return {name: t.data.copy() for name, t in self.params().items()}

    def restore(self, state: dict) -> None:
        for name, t in self.params().items():
            np.copyto(t.data, state[name])

    def representation(self, x: np.ndarray) -> Tensor:
        return mlp_forward(self.mlp, Tensor(x), self.mlp_spec)


def _init_model(mlp_spec: MLPSpec, head_cfg: HetHeadConfig,
                rng: SeededRng) -> TrainedModel:
    layers = init_mlp(mlp_spec, rng.child("mlp"))
    head = init_het_head(mlp_spec.repr_dim, head_cfg.num_classes, rng.child("head"))
    return TrainedModel(mlp=layers, head=head, mlp_spec=mlp_spec, head_cfg=head_cfg)


def _floor_probs(p: Tensor, floor: float) -> Tensor:
    # max(p, floor) composed from recorded primitives:
    # relu(p - floor) + floor, with relu = leaky-relu at slope 0.
    shifted = add(p, Tensor(np.full((), -floor)))
    return add(leaky_relu(shifted, slope=0.0), Tensor(np.full((), floor)))


def _check_prob_rows(p: Tensor) -> None:
    sums = p.data.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-8):
        raise ValueError("probability rows must sum to 1 within 1e-8")


def mc_nll_per_example(p: Tensor, labels) -> Tensor:
    """Per-example negative log of the (floored) predicted label probability."""
    labels = np.asarray(labels, dtype=np.int64)
    picked = index_select(p, labels)
    return scale(log(_floor_probs(picked, NLL_FLOOR)), -1.0)


def mc_nll_loss(p: Tensor, labels) -> Tensor:
    """Mean NLL of Monte Carlo class probabilities; differentiable through p."""
    _check_prob_rows(p)
    return mean_reduce(mc_nll_per_example(p, labels))


def soft_cross_entropy(p: Tensor, targets: np.ndarray) -> Tensor:
    """Mean of -sum_c t_c log p_c against constant soft targets."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != p.shape:
        raise ValueError("targets shape must match probabilities")
    k = targets.shape[-1]
    logp = log(_floor_probs(p, NLL_FLOOR))
    return scale(mean_reduce(mul(logp, Tensor(targets))), -float(k))


def hetero_regression_nll(y, f, sigma) -> float:
    """Gaussian heteroscedastic regression NLL: mean of r^2/(2s^2) + log(s^2)/2.

    With sigma identically 1 this is exactly half the mean squared error.
    """
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    var = sigma ** 2
    return float(np.mean((y - f) ** 2 / (2.0 * var) + 0.5 * np.log(var)))


def bootstrap_targets(labels_onehot: np.ndarray, model_probs: np.ndarray,
                      beta: float) -> np.ndarray:
    """Soft targets: beta * observed one-hot + (1 - beta) * model prediction."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return beta * np.asarray(labels_onehot) + (1.0 - beta) * np.asarray(model_probs)


def mentornet_het_equivalence_check(residuals, m_values) -> float:
    """Max gap between the self-paced and heteroscedastic regression objectives.

    With per-example weight v = exp(-m)/2 and penalty
    G(v) = -(log v + log 2)/2, the weighted squared error objective
    v r^2 + G(v) coincides with the Gaussian objective exp(-m) r^2 / 2 + m/2
    identically; the returned value is the largest per-example discrepancy.
    """
    r = np.asarray(residuals, dtype=np.float64)
    m = np.asarray(m_values, dtype=np.float64)
    v = 0.5 * np.exp(-m)
    penalty = -0.5 * (np.log(v) + np.log(2.0))
    mentornet = v * r ** 2 + penalty
    hetero = 0.5 * np.exp(-m) * r ** 2 + 0.5 * m
    return float(np.max(np.abs(mentornet - hetero)))


class SelfPacedState:
    """EMA loss-threshold state for the self-paced weighting baseline."""

    def __init__(self, cfg: MentorNetConfig):
        if cfg.noise_rate is None:
            raise ValueError("mentornet baseline needs a noise_rate")
        self.cfg = cfg
        self.lambda1: float | None = None

    def update(self, losses: np.ndarray, epoch: int) -> np.ndarray:
        """Update the threshold EMA and return per-example weights in [0, 1]."""
        losses = np.asarray(losses, dtype=np.float64)
        if losses.size == 0:
            raise ValueError("empty batch")
        q = float(np.quantile(losses, 1.0 - self.cfg.noise_rate))
        if self.lambda1 is None:
            self.lambda1 = q
        else:
            d = self.cfg.ema_decay
            self.lambda1 = d * self.lambda1 + (1.0 - d) * q
        if epoch < self.cfg.burn_in_epochs:
            return np.ones_like(losses)
        v = np.ones_like(losses)
        over = losses > self.lambda1
        if self.cfg.lambda2 > 0:
            v[over] = np.maximum(0.0, 1.0 - (losses[over] - self.lambda1) / self.cfg.lambda2)
        else:
            v[over] = 0.0
        return v


def selfpaced_weights(losses, state: SelfPacedState, epoch: int = 0) -> np.ndarray:
    """Functional wrapper over SelfPacedState.update."""
    return state.update(losses, epoch)


def coteaching_select(losses_a, losses_b, epoch: int,
                      cfg: CoTeachingConfig) -> tuple:
    """Crosswise small-loss selection: A trains on B's picks and vice versa.

    The keep fraction ramps down linearly from 1 to 1 - noise_rate over
    ramp_epochs and stays there; selection size is ceil(fraction * batch).
    """
    la = np.asarray(losses_a, dtype=np.float64)
    lb = np.asarray(losses_b, dtype=np.float64)
    if la.shape != lb.shape or la.ndim != 1:
        raise ValueError("loss vectors must be 1-D and equal length")
    if la.size == 0:
        raise ValueError("empty batch")
    if cfg.noise_rate is None:
        raise ValueError("coteaching baseline needs a noise_rate")
    keep = 1.0 - cfg.noise_rate * min(epoch / cfg.ramp_epochs, 1.0)
    k = math.ceil(keep * la.size)
    idx_for_a = np.argsort(lb, kind="stable")[:k]
    idx_for_b = np.argsort(la, kind="stable")[:k]
    return idx_for_a, idx_for_b


class Adam:
    """Adam with bias correction; epsilon sits outside the square root."""

    def __init__(self, params: dict, cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            p.data -= c.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


class SGDMomentum:
    def __init__(self, params: dict, cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.buf = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict) -> None:
        c = self.cfg
        for k, p in self.params.items():
            self.buf[k] = c.momentum * self.buf[k] + grads[k]
            p.data -= c.lr * self.buf[k]


def make_optimizer(params: dict, cfg: OptimizerConfig):
    if cfg.kind == "adam":
        return Adam(params, cfg)
    return SGDMomentum(params, cfg)


def _forward_probs(model: TrainedModel, x: np.ndarray, n_samples: int,
                   rng: SeededRng | None = None, draws: np.ndarray | None = None,
                   dropout_rng: SeededRng | None = None) -> Tensor:
    repr_t = mlp_forward(model.mlp, Tensor(x), model.mlp_spec, dropout_rng)
    sample = latent_utilities(repr_t, model.head, model.head_cfg, rng=rng,
                              n_samples=n_samples, draws=draws)
    return mc_class_probs(sample, model.head_cfg.tau)


def _train_sample_count(model: TrainedModel) -> int:
    # With zero scale every utility sample is identical, so one suffices.
    return 1 if model.head_cfg.homoscedastic else model.head_cfg.train_samples


def _predict_probs_fixed(model: TrainedModel, x: np.ndarray,
                         draws: np.ndarray) -> np.ndarray:
    """Probabilities with frozen draws and no tape (early-stop evaluation)."""
    return _forward_probs(model, x, draws.shape[0], draws=draws).data


def _batch_loss(model: TrainedModel, x, y, train_cfg: TrainConfig,
                noise_rng, dropout_rng, epoch: int,
                selfpaced: SelfPacedState | None):
    n_mc = _train_sample_count(model)
    probs = _forward_probs(model, x, n_mc, rng=noise_rng, dropout_rng=dropout_rng)
    if train_cfg.baseline == "bootstrap":
        onehot = np.zeros(probs.shape)
        onehot[np.arange(len(y)), y] = 1.0
        targets = bootstrap_targets(onehot, probs.data, train_cfg.bootstrap.beta)
        return soft_cross_entropy(probs, targets)
    if train_cfg.baseline == "mentornet":
        per_ex = mc_nll_per_example(probs, y)
        weights = selfpaced.update(per_ex.data, epoch)
        return mean_reduce(mul(per_ex, Tensor(weights)))
    return mc_nll_loss(probs, y)


def _valid_accuracy(model, xv, yv, draws) -> float:
    probs = _predict_probs_fixed(model, xv, draws)
    return float(np.mean(np.argmax(probs, axis=1) == yv))


def fit(mlp_spec: MLPSpec, head_cfg: HetHeadConfig, data: NoisyDataset,
        train_cfg: TrainConfig, opt_cfg: OptimizerConfig, seed: int):
    """Minibatch training with early stopping on validation accuracy.

    Returns (TrainedModel, history): the model carries the best-validation
    parameters and history holds one dict per epoch (train loss, validation
    accuracy and NLL, gradient log index of dispersion). Identical
    arguments reproduce bitwise-identical trajectories.
    """
    train_idx = data.indices("train")
    valid_idx = data.indices("valid")
    if train_cfg.max_epochs > 0 and (len(train_idx) == 0 or len(valid_idx) == 0):
        raise ValueError("training requires nonempty train and valid splits")
    root = SeededRng(seed)
    model = _init_model(mlp_spec, head_cfg, root.child("init"))
    if train_cfg.baseline == "coteaching":
        return _fit_coteaching(model, mlp_spec, head_cfg, data, train_cfg,
                               opt_cfg, root)

    opt = make_optimizer(model.params(), opt_cfg)
    tracker = GradVarTracker(decay=train_cfg.grad_ema_decay) \
        if train_cfg.track_gradients else None
    selfpaced = SelfPacedState(train_cfg.mentornet) \
        if train_cfg.baseline == "mentornet" else None

    xt = data.features[train_idx]
    yt = data.observed_labels[train_idx]
    xv = data.features[valid_idx]
    yv = data.observed_labels[valid_idx]
    es_rng = root.child("early-stop")
    n_es = 1 if head_cfg.homoscedastic else train_cfg.early_stop_samples
    es_draws = es_rng.standard(head_cfg.family,
                               n_es * len(valid_idx) * head_cfg.num_classes
                               ).reshape(n_es, len(valid_idx), head_cfg.num_classes)

    shuffle_rng = root.child("shuffle")
    noise_rng = root.child("noise")
    dropout_rng = root.child("dropout") if mlp_spec.dropout else None

    history = []
    best_acc = -np.inf
    best_state = None
    stale = 0
    for epoch in range(train_cfg.max_epochs):
        perm = shuffle_rng.permutation(len(train_idx))
        losses = []
        for b0 in range(0, len(perm), train_cfg.batch_size):
            batch = perm[b0:b0 + train_cfg.batch_size]
            try:
                with Tape() as tape:
                    loss = _batch_loss(model, xt[batch], yt[batch], train_cfg,
                                       noise_rng, dropout_rng, epoch, selfpaced)
                grads = tape.gradients(loss)
            except NonFiniteError as exc:
                raise TrainingDiverged(epoch, b0 // train_cfg.batch_size, exc) from exc
            gmap = {name: grads[p.node_id].data for name, p in model.params().items()}
            opt.step(gmap)
            if tracker is not None:
                tracker.update(gmap)
            losses.append(loss.item())
        valid_acc = _valid_accuracy(model, xv, yv, es_draws)
        valid_nll = _fixed_draw_nll(model, xv, yv, es_draws)
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "valid_acc": valid_acc,
            "valid_nll": valid_nll,
            "log_dispersion": tracker.log_index_of_dispersion()
            if tracker is not None else float("nan"),
        })
        if valid_acc > best_acc:
            best_acc = valid_acc
            best_state = model.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                break
    if best_state is not None:
        model.restore(best_state)
    return model, history


def _fixed_draw_nll(model, xv, yv, draws) -> float:
    probs = _predict_probs_fixed(model, xv, draws)
    picked = probs[np.arange(len(yv)), yv]
    return float(np.mean(-np.log(np.maximum(picked, NLL_FLOOR))))


def _per_example_nll_nograd(model, x, y, n_mc, rng) -> np.ndarray:
    probs = _forward_probs(model, x, n_mc, rng=rng).data
    picked = probs[np.arange(len(y)), y]
    return -np.log(np.maximum(picked, NLL_FLOOR))


def _fit_coteaching(model_a: TrainedModel, mlp_spec, head_cfg, data,
                    train_cfg: TrainConfig, opt_cfg, root: SeededRng):
    """Two networks exchange small-loss examples; network A is returned."""
    cfg = train_cfg.coteaching
    if cfg.noise_rate is None:
        raise ValueError("coteaching baseline needs a noise_rate")
    model_b = _init_model(mlp_spec, head_cfg, root.child("init-b"))
    opt_a = make_optimizer(model_a.params(), opt_cfg)
    opt_b = make_optimizer(model_b.params(), opt_cfg)
    tracker = GradVarTracker(decay=train_cfg.grad_ema_decay) \
        if train_cfg.track_gradients else None

    train_idx = data.indices("train")
    valid_idx = data.indices("valid")
    xt = data.features[train_idx]
    yt = data.observed_labels[train_idx]
    xv = data.features[valid_idx]
    yv = data.observed_labels[valid_idx]
    n_es = 1 if head_cfg.homoscedastic else train_cfg.early_stop_samples
    es_draws = root.child("early-stop").standard(
        head_cfg.family, n_es * len(valid_idx) * head_cfg.num_classes
    ).reshape(n_es, len(valid_idx), head_cfg.num_classes)

    shuffle_rng = root.child("shuffle")
    noise_rng = root.child("noise")
    dropout_rng = root.child("dropout") if mlp_spec.dropout else None
    n_mc = _train_sample_count(model_a)

    history = []
    best_acc = -np.inf
    best_state = None
    stale = 0
    for epoch in range(train_cfg.max_epochs):
        perm = shuffle_rng.permutation(len(train_idx))
        losses = []
        for b0 in range(0, len(perm), train_cfg.batch_size):
            batch = perm[b0:b0 + train_cfg.batch_size]
            x, y = xt[batch], yt[batch]
            try:
                la = _per_example_nll_nograd(model_a, x, y, n_mc, noise_rng)
                lb = _per_example_nll_nograd(model_b, x, y, n_mc, noise_rng)
                idx_a, idx_b = coteaching_select(la, lb, epoch, cfg)
                for model, opt, idx, track in ((model_a, opt_a, idx_a, True),
                                               (model_b, opt_b, idx_b, False)):
                    with Tape() as tape:
                        probs = _forward_probs(model, x[idx], n_mc,
                                               rng=noise_rng,
                                               dropout_rng=dropout_rng)
                        loss = mc_nll_loss(probs, y[idx])
                    grads = tape.gradients(loss)
                    gmap = {name: grads[p.node_id].data
                            for name, p in model.params().items()}
                    opt.step(gmap)
                    if track:
                        losses.append(loss.item())
                        if tracker is not None:
                            tracker.update(gmap)
            except NonFiniteError as exc:
                raise TrainingDiverged(epoch, b0 // train_cfg.batch_size, exc) from exc
        valid_acc = _valid_accuracy(model_a, xv, yv, es_draws)
        valid_nll = _fixed_draw_nll(model_a, xv, yv, es_draws)
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "valid_acc": valid_acc,
            "valid_nll": valid_nll,
            "log_dispersion": tracker.log_index_of_dispersion()
            if tracker is not None else float("nan"),
        })
        if valid_acc > best_acc:
            best_acc = valid_acc
            best_state = model_a.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                break
    if best_state is not None:
        model_a.restore(best_state)
    return model_a, history
