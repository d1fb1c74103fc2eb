"""Evaluation metrics, post-hoc temperature scaling, and diagnostics.

Covers the reporting quantities (NLL and calibration error on noisy labels,
accuracy on clean labels), the smoothing-bias estimate (expected KL between
hard argmax samples and tempered softmax samples), a gradient-variance
tracker summarised as the log index of dispersion, and the paired t-test
used to compare methods across matched seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from .autodiff import Tensor
from .head import latent_utilities, mc_class_probs
from .rng import NoiseFamily, SeededRng

__all__ = [
    "MetricsReport",
    "BiasEstimate",
    "GradVarTracker",
    "ZeroVarianceError",
    "expected_calibration_error",
    "predict_dataset_probs",
    "evaluate",
    "report_from_probs",
    "fit_platt_temperature",
    "apply_platt",
    "estimate_bias",
    "paired_t_test",
]

_NLL_FLOOR = 1e-323
_EVAL_BATCH = 256


class ZeroVarianceError(ValueError):
    """Paired differences have zero variance; the t statistic is undefined."""


@dataclass
class MetricsReport:
    """Headline numbers for one trained model on one split."""

    noisy_nll: float
    noisy_accuracy: float
    clean_accuracy: float
    ece: float
    n_examples: int
    eval_samples: int

    def to_dict(self) -> dict:
        return {
            "noisy_nll": self.noisy_nll,
            "noisy_accuracy": self.noisy_accuracy,
            "clean_accuracy": self.clean_accuracy,
            "ece": self.ece,
            "n_examples": self.n_examples,
            "eval_samples": self.eval_samples,
        }


@dataclass
class BiasEstimate:
    """Monte Carlo estimate of the smoothing bias at one temperature."""

    value: float
    stderr: float
    samples: int
    tau: float


def expected_calibration_error(confidences, correct, bins: int = 15) -> float:
    """Binned gap between confidence and accuracy over equal-width bins.

    Bin b covers (b/bins, (b+1)/bins]; empty bins contribute nothing.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    hits = np.asarray(correct, dtype=np.float64)
    if conf.size == 0:
        raise ValueError("expected_calibration_error needs at least one prediction")
    if conf.shape != hits.shape:
        raise ValueError("confidences and correct flags must align")
    if np.any(conf < 0) or np.any(conf > 1):
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.clip(np.ceil(conf * bins).astype(np.int64) - 1, 0, bins - 1)
    n = conf.size
    ece = 0.0
    for b in range(bins):
        mask = idx == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        ece += (cnt / n) * abs(hits[mask].mean() - conf[mask].mean())
    return float(ece)


def predict_dataset_probs(model, x: np.ndarray, eval_samples: int,
                          rng: SeededRng, batch: int = _EVAL_BATCH) -> np.ndarray:
    """MC class probabilities for every row, batched to bound memory."""
    n_mc = 1 if model.head_cfg.homoscedastic else int(eval_samples)
    out = np.empty((x.shape[0], model.head_cfg.num_classes))
    for b0 in range(0, x.shape[0], batch):
        xb = x[b0:b0 + batch]
        repr_t = model.representation(xb)
        sample = latent_utilities(repr_t, model.head, model.head_cfg,
                                  rng=rng, n_samples=n_mc)
        out[b0:b0 + batch] = mc_class_probs(sample, model.head_cfg.tau).data
    return out


def report_from_probs(probs: np.ndarray, observed: np.ndarray,
                      clean: np.ndarray, eval_samples: int,
                      bins: int = 15) -> MetricsReport:
    """Assemble the standard report from precomputed probabilities."""
    pred = np.argmax(probs, axis=1)
    picked = probs[np.arange(len(observed)), observed]
    nll = float(np.mean(-np.log(np.maximum(picked, _NLL_FLOOR))))
    return MetricsReport(
        noisy_nll=nll,
        noisy_accuracy=float(np.mean(pred == observed)),
        clean_accuracy=float(np.mean(pred == clean)),
        ece=expected_calibration_error(probs.max(axis=1), pred == observed, bins),
        n_examples=int(len(observed)),
        eval_samples=int(eval_samples),
    )


def evaluate(model, data, split: str, eval_seed: int,
             eval_samples: int | None = None) -> MetricsReport:
    """Metrics on one split: NLL/ECE against observed labels, clean accuracy.

    Deterministic given eval_seed; predictions use the configured number of
    evaluation samples (1000 by default in the head config).
    """
    sub = data.subset(split)
    if sub.n_examples == 0:
        raise ValueError(f"split {split!r} is empty")
    s = int(eval_samples if eval_samples is not None else model.head_cfg.eval_samples)
    probs = predict_dataset_probs(model, sub.features, s, SeededRng(eval_seed))
    return report_from_probs(probs, sub.observed_labels, sub.clean_labels, s)


def apply_platt(probs: np.ndarray, temperature: float) -> np.ndarray:
    """Power-renormalise probability rows: p^(1/T) / sum p^(1/T).

    Equivalent to dividing logits by T for softmax outputs; monotone per
    row, so the argmax (and hence accuracy) never changes.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    p = np.asarray(probs, dtype=np.float64)
    rowsum = p.sum(axis=-1)
    if np.any(rowsum <= 0):
        raise ValueError("probability rows must have positive mass")
    q = np.power(p, 1.0 / temperature)
    return q / q.sum(axis=-1, keepdims=True)


def _nll_of(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, _NLL_FLOOR))))


def fit_platt_temperature(valid_probs: np.ndarray, valid_labels: np.ndarray,
                          t_lo: float = 0.05, t_hi: float = 20.0,
                          tol: float = 1e-10) -> float:
    """Post-hoc temperature minimising validation NLL, by golden section.

    The search runs over log-temperature in [log t_lo, log t_hi]; the
    returned temperature never has higher validation NLL than 1.0 (the
    identity), so rescaling cannot hurt the likelihood it optimises.
    """
    probs = np.asarray(valid_probs, dtype=np.float64)
    labels = np.asarray(valid_labels, dtype=np.int64)
    if np.any(probs.sum(axis=-1) <= 0):
        raise ValueError("degenerate predictions: a probability row has no mass")

    def objective(log_t: float) -> float:
        return _nll_of(apply_platt(probs, math.exp(log_t)), labels)

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(t_lo), math.log(t_hi)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = objective(d)
    t_star = math.exp((a + b) / 2.0)
    if _nll_of(apply_platt(probs, t_star), labels) > _nll_of(probs, labels):
        return 1.0
    return t_star


def estimate_bias(head, repr_t, tau: float, n_samples: int, rng: SeededRng,
                  family: NoiseFamily = NoiseFamily.GAUSSIAN) -> BiasEstimate:
    """Expected KL from hard argmax samples to tempered softmax samples.

    Because the reference is one-hot, each sample's KL collapses to
    -log softmax(u/tau)[argmax u], computed here in stable log-space.
    """
    if not tau > 0:
        raise ValueError("temperature must be positive")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    data = repr_t.data if isinstance(repr_t, Tensor) else np.asarray(repr_t)
    if data.ndim != 1:
        raise ValueError("bias estimation expects a single (D,) representation")
    mu = data @ head.mu_w.data + head.mu_b.data
    sigma = np.logaddexp(0.0, data @ head.sigma_w.data + head.sigma_b.data)
    k = mu.shape[0]
    eps = rng.standard(family, n_samples * k).reshape(n_samples, k)
    z = (mu + sigma * eps) / tau
    zmax = z.max(axis=1, keepdims=True)
    kl = np.log(np.exp(z - zmax).sum(axis=1))
    value = float(kl.mean())
    stderr = float(kl.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return BiasEstimate(value=value, stderr=stderr, samples=n_samples, tau=tau)


class GradVarTracker:
    """EMA first/second moments of gradients, read as log index of dispersion.

    The metric is log(var / |mean|) per parameter entry, averaged over all
    entries; both moments are bias-corrected and the variance is floored so
    a constant gradient stream reads as a large negative value rather than
    minus infinity.
    """

    def __init__(self, decay: float = 0.9, eps: float = 1e-12):
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        self.decay = decay
        self.eps = eps
        self.steps = 0
        self._m1: dict = {}
        self._m2: dict = {}

    def update(self, grads: dict) -> None:
        d = self.decay
        self.steps += 1
        for name, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            if name not in self._m1:
                self._m1[name] = np.zeros_like(g)
                self._m2[name] = np.zeros_like(g)
            self._m1[name] = d * self._m1[name] + (1.0 - d) * g
            self._m2[name] = d * self._m2[name] + (1.0 - d) * g * g

    def log_index_of_dispersion(self) -> float:
        if self.steps == 0:
            raise RuntimeError("tracker has seen no gradients yet")
        bc = 1.0 - self.decay ** self.steps
        total = 0.0
        count = 0
        for name, m1 in self._m1.items():
            mu = m1 / bc
            var = np.maximum(self._m2[name] / bc - mu ** 2, 0.0)
            vals = np.log(np.maximum(var, self.eps) / (np.abs(mu) + self.eps))
            total += float(vals.sum())
            count += vals.size
        return total / count


def track_gradients(tracker: GradVarTracker, grads: dict) -> GradVarTracker:
    """Functional wrapper over GradVarTracker.update."""
    tracker.update(grads)
    return tracker


def paired_t_test(values_a, values_b) -> tuple:
    """Two-tailed paired t-test over matched replicates.

    Returns (t, p) with p from the Student-t CDF via the regularised
    incomplete beta; raises ZeroVarianceError when all differences agree
    exactly (callers typically map that to p = 1).
    """
    a = np.asarray(values_a, dtype=np.float64)
    b = np.asarray(values_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise ZeroVarianceError("paired differences have zero variance")
    t = float(diff.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = float(scipy.special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p


def significance_marker(p: float) -> str:
    """Table-style marker: * for p<0.05, dagger for p<0.01, double for p<0.001."""
    if p < 0.001:
        return "‡"  # double dagger
    if p < 0.01:
        return "†"  # dagger
    if p < 0.05:
        return "*"
    return ""
