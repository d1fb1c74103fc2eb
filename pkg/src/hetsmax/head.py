"""Heteroscedastic output layer: latent utilities and MC class probabilities.

The generative story: each class carries a latent utility, a deterministic
location plus input-dependent noise, and the observed label is the argmax.
Training smooths the argmax with a temperature softmax and estimates class
probabilities by averaging the softmax over reparameterized noise draws.
The hard-argmax estimator (the zero-temperature limit) is kept as a
non-differentiable oracle, and a sigmoid variant covers binary problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    add,
    matmul,
    mean_reduce,
    softplus,
    tempered_softmax,
    _sigmoid,
)
from .rng import NoiseFamily, SeededRng, reparameterize

__all__ = [
    "HetHeadConfig",
    "HetHead",
    "BinaryHead",
    "UtilitySample",
    "init_het_head",
    "init_binary_head",
    "head_loc_scale",
    "latent_utilities",
    "mc_class_probs",
    "predict_proba_mc",
    "predict_proba_hard",
    "predict_binary_mc",
]

_HARD_CHUNK = 200_000  # draws per block when tallying argmax frequencies


@dataclass
class HetHeadConfig:
    """Temperature, sample counts, noise family, and modelling mode."""

    num_classes: int
    tau: float = 1.0
    train_samples: int = 100
    eval_samples: int = 1000
    family: NoiseFamily = NoiseFamily.GAUSSIAN
    mode: str = "heteroscedastic"  # or "homoscedastic"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if not self.tau > 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.train_samples < 1 or self.eval_samples < 1:
            raise ValueError("sample counts must be at least 1")
        if self.mode not in ("heteroscedastic", "homoscedastic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if isinstance(self.family, str):
            self.family = NoiseFamily.from_name(self.family)

    @property
    def homoscedastic(self) -> bool:
        return self.mode == "homoscedastic"


@dataclass
class HetHead:
    """Linear location and scale branches over a shared representation.

    The scale branch passes through softplus, so per-class noise scales are
    strictly positive; homoscedastic mode bypasses it entirely (scale 0).
    """

    mu_w: Tensor
    mu_b: Tensor
    sigma_w: Tensor
    sigma_b: Tensor

    @property
    def in_dim(self) -> int:
        return self.mu_w.shape[0]

    @property
    def num_classes(self) -> int:
        return self.mu_w.shape[1]

    def params(self) -> dict:
        return {
            "head.mu.w": self.mu_w,
            "head.mu.b": self.mu_b,
            "head.sigma.w": self.sigma_w,
            "head.sigma.b": self.sigma_b,
        }


@dataclass
class BinaryHead:
    """Location/scale of the single utility difference for binary problems."""

    mu_w: Tensor
    mu_b: Tensor
    sigma_w: Tensor
    sigma_b: Tensor


@dataclass
class UtilitySample:
    """Latent utilities for one input: sample axis first, classes last."""

    u: Tensor

    @property
    def num_samples(self) -> int:
        return self.u.shape[0]


def init_het_head(in_dim: int, num_classes: int, rng: SeededRng,
                  sigma_bias: float = -3.0) -> HetHead:
    """Random head; the scale branch starts near zero (softplus(-3) ~ 0.049)."""
    std = (2.0 / in_dim) ** 0.5
    return HetHead(
        mu_w=Tensor(std * rng.gaussian(in_dim * num_classes).reshape(in_dim, num_classes)),
        mu_b=Tensor(np.zeros(num_classes)),
        sigma_w=Tensor(0.01 * rng.gaussian(in_dim * num_classes).reshape(in_dim, num_classes)),
        sigma_b=Tensor(np.full(num_classes, sigma_bias)),
    )


def init_binary_head(in_dim: int, rng: SeededRng,
                     sigma_bias: float = -3.0) -> BinaryHead:
    std = (2.0 / in_dim) ** 0.5
    return BinaryHead(
        mu_w=Tensor(std * rng.gaussian(in_dim)),
        mu_b=Tensor(0.0),
        sigma_w=Tensor(0.01 * rng.gaussian(in_dim)),
        sigma_b=Tensor(float(sigma_bias)),
    )


def _as_batch(repr_t: Tensor) -> tuple[Tensor, bool]:
    if repr_t.data.ndim == 1:
        return Tensor(repr_t.data[None, :]), True
    if repr_t.data.ndim == 2:
        return repr_t, False
    raise ValueError(f"representation must be 1-D or 2-D, got {repr_t.shape}")


def head_loc_scale(repr_t: Tensor, head: HetHead, cfg: HetHeadConfig):
    """Per-class locations and noise scales for a (B, D) representation.

    Returns (mu, sigma) tensors of shape (B, K); sigma is exactly zero in
    homoscedastic mode so both modes share one prediction path.
    """
    if repr_t.shape[-1] != head.in_dim:
        raise ValueError(
            f"representation dim {repr_t.shape[-1]} != head input dim {head.in_dim}"
        )
    mu = add(matmul(repr_t, head.mu_w), head.mu_b)
    if cfg.homoscedastic:
        sigma = Tensor(np.zeros(mu.shape))
    else:
        sigma = softplus(add(matmul(repr_t, head.sigma_w), head.sigma_b))
    return mu, sigma


def _draw_standard(cfg: HetHeadConfig, rng: SeededRng, shape: tuple) -> np.ndarray:
    n = int(np.prod(shape))
    return rng.standard(cfg.family, n).reshape(shape)


def latent_utilities(repr_t: Tensor, head: HetHead, cfg: HetHeadConfig,
                     rng: SeededRng | None = None, n_samples: int | None = None,
                     draws: np.ndarray | None = None) -> UtilitySample:
    """Sampled latent utilities: location + scale * standard draw.

    For a (D,) representation the result is (S, K); for a (B, D) batch it
    is (S, B, K). Pass `draws` to freeze the noise (gradient checks, shared
    comparisons); otherwise `rng` supplies fresh draws.
    """
    batch, squeeze = _as_batch(repr_t)
    mu, sigma = head_loc_scale(batch, head, cfg)
    n = int(n_samples if n_samples is not None else cfg.train_samples)
    if n < 1:
        raise ValueError("sample count must be at least 1")
    shape = (n,) + mu.shape
    if draws is None:
        if rng is None:
            raise ValueError("either rng or frozen draws are required")
        eps = _draw_standard(cfg, rng, shape)
    else:
        eps = np.asarray(draws, dtype=np.float64)
        if squeeze and eps.ndim == 2:
            eps = eps[:, None, :]
        if eps.shape != shape:
            raise ValueError(f"draws shape {eps.shape} != expected {shape}")
    u = reparameterize(mu, sigma, Tensor(eps))
    if squeeze:
        return UtilitySample(u=_squeeze_mid(u))
    return UtilitySample(u=u)


def _squeeze_mid(u: Tensor) -> Tensor:
    # (S, 1, K) -> (S, K): mean over the singleton axis is an exact squeeze
    # and keeps the gradient path on the tape.
    return mean_reduce(u, axis=1)


def mc_class_probs(utilities: UtilitySample, tau: float) -> Tensor:
    """Average of tempered softmax rows over the sample axis (the MC estimate)."""
    return mean_reduce(tempered_softmax(utilities.u, tau), axis=0)


def predict_proba_mc(repr_t: Tensor, head: HetHead, cfg: HetHeadConfig,
                     rng: SeededRng | None = None, n_samples: int | None = None,
                     draws: np.ndarray | None = None) -> np.ndarray:
    """Smoothed predictive probabilities for one input (or a batch).

    Homoscedastic mode collapses to a single sample: with zero scale every
    utility row is identical, so the estimate equals the tempered softmax
    of the locations exactly, for any nominal sample count.
    """
    n = int(n_samples if n_samples is not None else cfg.eval_samples)
    if cfg.homoscedastic and draws is None:
        n = 1
    sample = latent_utilities(repr_t, head, cfg, rng=rng, n_samples=n, draws=draws)
    return mc_class_probs(sample, cfg.tau).data


def predict_proba_hard(repr_t: Tensor, head: HetHead, cfg: HetHeadConfig,
                       rng: SeededRng | None = None, n_samples: int | None = None,
                       draws: np.ndarray | None = None) -> np.ndarray:
    """Argmax-frequency estimate of the class probabilities for one input.

    Unbiased for the generative process and free of smoothing bias, but
    non-differentiable; used as the evaluation/oracle counterpart of
    predict_proba_mc.
    """
    data = repr_t.data if isinstance(repr_t, Tensor) else np.asarray(repr_t)
    if data.ndim != 1:
        raise ValueError("hard prediction expects a single (D,) representation")
    mu = data @ head.mu_w.data + head.mu_b.data
    if cfg.homoscedastic:
        sigma = np.zeros_like(mu)
    else:
        sigma = np.logaddexp(0.0, data @ head.sigma_w.data + head.sigma_b.data)
    k = mu.shape[0]
    n = int(n_samples if n_samples is not None else cfg.eval_samples)
    if cfg.homoscedastic and draws is None:
        out = np.zeros(k)
        out[int(np.argmax(mu))] = 1.0
        return out
    counts = np.zeros(k, dtype=np.int64)
    if draws is not None:
        eps = np.asarray(draws, dtype=np.float64)
        if eps.shape != (n, k):
            raise ValueError(f"draws shape {eps.shape} != expected {(n, k)}")
        winners = np.argmax(mu + sigma * eps, axis=1)
        counts += np.bincount(winners, minlength=k)
        return counts / n
    if rng is None:
        raise ValueError("either rng or frozen draws are required")
    done = 0
    while done < n:
        block = min(_HARD_CHUNK, n - done)
        eps = rng.standard(cfg.family, block * k).reshape(block, k)
        winners = np.argmax(mu + sigma * eps, axis=1)
        counts += np.bincount(winners, minlength=k)
        done += block
    return counts / n


def predict_binary_mc(repr_t: Tensor, head: BinaryHead, cfg: HetHeadConfig,
                      rng: SeededRng | None = None, n_samples: int | None = None,
                      draws: np.ndarray | None = None) -> float:
    """P(class 1) via sigmoid smoothing of the single utility difference."""
    if not cfg.tau > 0:
        raise ValueError(f"temperature must be positive, got {cfg.tau}")
    data = repr_t.data if isinstance(repr_t, Tensor) else np.asarray(repr_t)
    if data.ndim != 1:
        raise ValueError("binary prediction expects a single (D,) representation")
    f = float(data @ head.mu_w.data + head.mu_b.data)
    s = float(np.logaddexp(0.0, data @ head.sigma_w.data + head.sigma_b.data))
    n = int(n_samples if n_samples is not None else cfg.eval_samples)
    if draws is not None:
        eps = np.asarray(draws, dtype=np.float64)
    else:
        if rng is None:
            raise ValueError("either rng or frozen draws are required")
        eps = rng.standard(cfg.family, n)
    u = f + s * eps
    return float(np.mean(_sigmoid(u / cfg.tau)))
