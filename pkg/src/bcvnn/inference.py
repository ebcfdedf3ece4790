"""Monte-Carlo dropout prediction and calibration metrics.

A Bayesian forward pass is repeated T times with fresh dropout masks;
the mean probability vector is the prediction and the per-class
standard deviation across the T vectors is the uncertainty signal.
With every keep_rate at 1.0 the passes coincide and the std must come
out exactly zero, so the variance is accumulated from pairwise sample
differences instead of deviations from the float mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .layers import NetworkSpec, forward
from .tensor import ComplexTensor
from .train import softmax_magnitude

DEFAULT_SAMPLES = 3  # stochastic forward passes per prediction
DEFAULT_BINS = 15


@dataclass(frozen=True)
class MCPrediction:
    """Aggregate of T stochastic forward passes (vector per sample, or matrices for a batch)."""

    mean_probs: np.ndarray
    std_probs: np.ndarray
    predicted_class: np.ndarray
    samples_used: int

    @property
    def confidence(self):
        """Probability the mean assigns to the predicted class."""
        return self.mean_probs.max(axis=-1)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    ece: float
    bins: tuple  # (mean confidence, accuracy, count) per bin; zeros when empty
    n: int
    mean_std: float


def _pass_generators(rng, t):
    # one child generator per pass, derived deterministically so the
    # passes could run in any order (or in parallel) without changing results
    if isinstance(rng, np.random.Generator):
        return rng.spawn(t)
    seq = np.random.SeedSequence(rng)
    return [np.random.default_rng(child) for child in seq.spawn(t)]


def mc_predict(spec: NetworkSpec, weights, input: ComplexTensor, t=DEFAULT_SAMPLES,
               rng=None) -> MCPrediction:
    """Predict with uncertainty from ``t`` stochastic forward passes.

    ``rng`` may be a seed or a Generator; each pass gets its own child
    generator. Per-class std uses the population formula (divide by t),
    so a single pass reports zero uncertainty.
    """
    if t < 1:
        raise ConfigError(f"sample count must be >= 1, got {t}")
    generators = _pass_generators(rng, t)
    samples = []
    for gen in generators:
        logits = forward(spec, weights, input, stochastic=True, rng=gen)
        samples.append(softmax_magnitude(logits))
    # mean anchored at the first sample: coinciding samples return it unchanged
    delta = np.zeros_like(samples[0])
    for s in samples[1:]:
        delta += s - samples[0]
    mean = samples[0] + delta / t
    # population variance from pairwise differences: identical samples
    # cancel exactly, so keep_rate=1.0 yields a std of exactly zero
    acc = np.zeros_like(mean)
    for a in range(t):
        for b in range(a + 1, t):
            d = samples[a] - samples[b]
            acc += d * d
    std = np.sqrt(acc) / t
    if len(input.shape) == len(spec.input_shape):  # single sample in, vectors out
        mean, std = mean[0], std[0]
    predicted = mean.argmax(axis=-1)
    return MCPrediction(mean, std, predicted, t)


def accuracy(predicted, labels) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise ConfigError(f"prediction/label length mismatch: {predicted.shape} vs {labels.shape}")
    return float((predicted == labels).mean())


def bin_index(confidences, n_bins) -> np.ndarray:
    """1-based bin of each confidence under equal-width bins ((k-1)/B, k/B].

    Confidence 0 joins the first bin so every value in [0,1] lands somewhere.
    """
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.searchsorted(edges, confidences, side="left")
    return np.clip(idx, 1, n_bins)


def calibration_bins(confidences, correct, n_bins=DEFAULT_BINS):
    """Per-bin (mean confidence, accuracy, count) rows; zeros for empty bins."""
    confidences = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    if confidences.shape != correct.shape or confidences.ndim != 1:
        raise ConfigError("confidences and correct must be equal-length vectors")
    if confidences.size and (confidences.min() < 0.0 or confidences.max() > 1.0):
        raise ConfigError("confidences must lie in [0, 1]")
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    idx = bin_index(confidences, n_bins)
    rows = []
    for k in range(1, n_bins + 1):
        members = idx == k
        count = int(members.sum())
        if count == 0:
            rows.append((0.0, 0.0, 0))
        else:
            rows.append((float(confidences[members].mean()),
                         float(correct[members].mean()), count))
    return rows


def ece(confidences, correct, n_bins=DEFAULT_BINS) -> float:
    """Expected calibration error: count-weighted |accuracy - confidence| over bins."""
    rows = calibration_bins(confidences, correct, n_bins)
    n = sum(count for _, _, count in rows)
    if n == 0:
        raise ConfigError("ece needs at least one prediction")
    return float(sum(count * abs(acc - conf) for conf, acc, count in rows) / n)


def evaluate_dataset(spec: NetworkSpec, weights, dataset, t=DEFAULT_SAMPLES, rng=None,
                     n_bins=DEFAULT_BINS, batch_size=None):
    """Score a labelled dataset; returns (EvalReport, MCPrediction over all samples).

    Dropout masks are shared within one forward pass, so results depend
    on ``batch_size``; the default (one pass over everything) is the
    reproducible reference setting.
    """
    images, labels = dataset.images, dataset.labels
    n = labels.shape[0]
    if batch_size is None or batch_size >= n:
        pred = mc_predict(spec, weights, images, t, rng)
    else:
        base = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        parts = []
        for start in range(0, n, batch_size):
            chunk = ComplexTensor(images.real[start:start + batch_size],
                                  images.imag[start:start + batch_size])
            parts.append(mc_predict(spec, weights, chunk, t, base))
        pred = MCPrediction(np.concatenate([p.mean_probs for p in parts]),
                            np.concatenate([p.std_probs for p in parts]),
                            np.concatenate([p.predicted_class for p in parts]), t)
    correct = pred.predicted_class == labels
    rows = calibration_bins(pred.confidence, correct, n_bins)
    value = float(sum(c * abs(a - m) for m, a, c in rows) / n)
    report = EvalReport(accuracy=float(correct.mean()), ece=value, bins=tuple(rows),
                        n=n, mean_std=float(pred.std_probs.mean()))
    return report, pred
