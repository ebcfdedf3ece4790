"""Training: magnitude-softmax loss head, manual gradients, SGD loop.

The classification head takes complex logits, reduces each class entry
to its magnitude, and applies softmax over the magnitudes. Gradients
are composed from the per-layer backward kernels in ``bcvnn.layers``;
dropout masks drawn during a batch's forward pass are the ones the
backward pass sees, so each batch is one consistent stochastic network.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, TrainingDiverged
from .layers import (ComplexWeights, LayerKind, NetworkSpec,
                     _activation_backward, _conv_backward, _dense_backward,
                     _dropout_backward, _pool_backward, forward_with_cache,
                     init_weights, network_from_doc, network_to_doc,
                     weight_shapes)
from .tensor import ComplexTensor, read_tensor, write_tensor

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:  # zero is allowed: a no-op run is still well-defined
            raise ConfigError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")


def softmax_magnitude(logits: ComplexTensor) -> np.ndarray:
    """Class probabilities from complex logits: softmax over per-class magnitudes."""
    mag = np.hypot(logits.real, logits.imag)
    if mag.ndim == 1:
        mag = mag[None, :]
    shifted = mag - mag.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, classes):
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ConfigError(f"labels must lie in [0, {classes})")


def _decay_term(weights, weight_decay):
    if weight_decay == 0.0:
        return 0.0
    total = 0.0
    for w in weights:
        if w is not None:
            total += np.sum(w.m_real * w.m_real) + np.sum(w.m_imag * w.m_imag)
    return weight_decay * total


def loss(logits: ComplexTensor, labels, weights=(), weight_decay=0.0) -> float:
    """Mean cross-entropy of magnitude-softmax probabilities plus L2 weight decay.

    The decay term sums squared matrix entries of both parts over all
    parametric layers; biases are excluded.
    """
    labels = np.atleast_1d(np.asarray(labels))
    mag = np.hypot(logits.real, logits.imag)
    if mag.ndim == 1:
        mag = mag[None, :]
    if labels.shape[0] != mag.shape[0]:
        raise ConfigError(f"label count {labels.shape[0]} != batch size {mag.shape[0]}")
    _check_labels(labels, mag.shape[1])
    shifted = mag - mag.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    nll = -log_probs[np.arange(labels.shape[0]), labels]
    return float(nll.mean() + _decay_term(weights, weight_decay))


def _head_gradient(logits: ComplexTensor, labels):
    """Gradient of the mean cross-entropy w.r.t. the two logit parts."""
    n, k = logits.real.shape
    mag = np.hypot(logits.real, logits.imag)
    shifted = mag - mag.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(e.sum(axis=1, keepdims=True))
    nll = -log_probs[np.arange(n), labels]
    d_mag = probs.copy()
    d_mag[np.arange(n), labels] -= 1.0
    d_mag /= n
    # d|z|/dRe = Re/|z|; at the origin both parts get subgradient 0
    safe = np.where(mag > 0, mag, 1.0)
    gr = d_mag * np.where(mag > 0, logits.real / safe, 0.0)
    gi = d_mag * np.where(mag > 0, logits.imag / safe, 0.0)
    return float(nll.mean()), gr, gi


def network_loss(spec: NetworkSpec, weights, x: ComplexTensor, labels, weight_decay=0.0,
                 stochastic=False, rng=None, fixed_masks=None) -> float:
    """Full-network loss on a batch; fixed_masks replays a stochastic pass exactly."""
    logits, _, _ = forward_with_cache(spec, weights, x, stochastic, rng, fixed_masks)
    return loss(logits, labels, weights, weight_decay)


def backward(spec: NetworkSpec, weights, x: ComplexTensor, labels, weight_decay=0.0,
             stochastic=False, rng=None, fixed_masks=None):
    """Forward plus manual backward over the whole network.

    Returns (loss value, per-layer gradients, logits, drawn dropout masks).
    Gradients are None for non-parametric layers and a
    (d_m_real, d_m_imag, d_bias_real, d_bias_imag) tuple otherwise.
    """
    labels = np.atleast_1d(np.asarray(labels))
    logits, caches, drawn = forward_with_cache(spec, weights, x, stochastic, rng, fixed_masks)
    _check_labels(labels, logits.real.shape[1])
    nll, gr, gi = _head_gradient(logits, labels)
    value = nll + _decay_term(weights, weight_decay)

    grads = [None] * len(spec.layers)
    drop_idx = len(drawn)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        cache = caches[i]
        if layer.kind is LayerKind.CONV2D:
            shape = (gr.shape[0],) + tuple(spec.layer_shapes[i])
            gr, gi, wg = _conv_backward(gr.reshape(shape), gi.reshape(shape), layer,
                                        weights[i], cache)
            grads[i] = wg
        elif layer.kind is LayerKind.DENSE:
            gr, gi, wg = _dense_backward(gr, gi, layer, weights[i], cache)
            grads[i] = wg
        elif layer.kind is LayerKind.POOL:
            shape = (gr.shape[0],) + tuple(spec.layer_shapes[i])
            gr, gi = _pool_backward(gr.reshape(shape), gi.reshape(shape), layer, cache)
        elif layer.kind is LayerKind.ACTIVATION:
            gr, gi = _activation_backward(gr, gi, cache)
        else:
            drop_idx -= 1
            gr, gi = _dropout_backward(gr, gi, cache)
    if weight_decay:
        for i, wg in enumerate(grads):
            if wg is not None:
                d_mr, d_mi, d_br, d_bi = wg
                w = weights[i]
                grads[i] = (d_mr + 2.0 * weight_decay * w.m_real,
                            d_mi + 2.0 * weight_decay * w.m_imag, d_br, d_bi)
    return value, grads, logits, drawn


def _zero_velocity(weights):
    vel = []
    for w in weights:
        if w is None:
            vel.append(None)
        else:
            vel.append([np.zeros_like(a) if a is not None else None
                        for a in (w.m_real, w.m_imag, w.bias_real, w.bias_imag)])
    return vel


def _sgd_step(weights, grads, velocity, lr, momentum):
    new_weights = []
    for w, g, v in zip(weights, grads, velocity):
        if w is None:
            new_weights.append(None)
            continue
        arrays = (w.m_real, w.m_imag, w.bias_real, w.bias_imag)
        updated = []
        for slot, (arr, grad) in enumerate(zip(arrays, g)):
            if arr is None:
                updated.append(None)
                continue
            v[slot] = momentum * v[slot] - lr * grad
            updated.append(arr + v[slot])
        new_weights.append(ComplexWeights(*updated))
    return new_weights


def train(spec: NetworkSpec, dataset, config: TrainConfig, weights=None, progress=None):
    """SGD training loop; returns (weights, trace rows).

    Trace rows are (epoch, mean loss, train accuracy) tuples, one per
    epoch, with accuracy read off the stochastic training passes. The
    whole run is a deterministic function of (spec, dataset, config):
    weight init, shuffling, and dropout all consume one seeded generator.
    """
    rng = np.random.default_rng(config.seed)
    if weights is None:
        weights = init_weights(spec, rng)
    velocity = _zero_velocity(weights)
    images, labels = dataset.images, dataset.labels
    n = labels.shape[0]
    if n < 1:
        raise ConfigError("dataset is empty")
    stochastic = any(l.kind is LayerKind.DROPOUT for l in spec.layers)
    rows = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = ComplexTensor(images.real[idx], images.imag[idx])
            try:
                value, grads, logits, _ = backward(spec, weights, batch, labels[idx],
                                                   config.weight_decay, stochastic, rng)
            except ValueError as exc:
                # overflow inside the pass trips the tensor finiteness check
                raise TrainingDiverged(f"non-finite values at epoch {epoch}: {exc}") from None
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            weights = _sgd_step(weights, grads, velocity, config.learning_rate, config.momentum)
            loss_sum += value * len(idx)
            pred = np.hypot(logits.real, logits.imag).argmax(axis=1)
            correct += int((pred == labels[idx]).sum())
        rows.append((epoch, float(loss_sum / n), correct / n))
        if progress is not None:
            progress(rows[-1])
    return weights, rows


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(directory, spec: NetworkSpec, weights, meta=None):
    """Write manifest.json plus one tensor container per parametric array pair."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, w in enumerate(weights):
        if w is None:
            continue
        matrix_name = f"layer{i:02d}_matrix.bcvt"
        write_tensor(os.path.join(directory, matrix_name), ComplexTensor(w.m_real, w.m_imag))
        bias_name = None
        if w.bias_real is not None:
            bias_name = f"layer{i:02d}_bias.bcvt"
            write_tensor(os.path.join(directory, bias_name),
                         ComplexTensor(w.bias_real, w.bias_imag))
        entries.append({"layer": i, "matrix": matrix_name, "bias": bias_name})
    manifest = {"schema_version": CHECKPOINT_SCHEMA_VERSION,
                "network": network_to_doc(spec), "weights": entries,
                "meta": dict(meta) if meta else {}}
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_checkpoint(directory):
    """Read a checkpoint directory back into (spec, weights, meta); validates shapes."""
    manifest_path = os.path.join(directory, "manifest.json")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"no manifest.json in {directory}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest.json is not valid JSON: {exc}") from None
    if manifest.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise FormatError(f"unsupported checkpoint schema_version {manifest.get('schema_version')!r}")
    spec = network_from_doc(manifest["network"])
    expected = weight_shapes(spec)
    weights = [None] * len(spec.layers)
    for entry in manifest.get("weights", []):
        i = entry["layer"]
        if not 0 <= i < len(spec.layers) or expected[i] is None:
            raise FormatError(f"manifest names layer {i} which takes no weights")
        m_shape, bias_len = expected[i]
        matrix = read_tensor(os.path.join(directory, entry["matrix"]))
        if matrix.shape != m_shape:
            raise FormatError(f"layer {i} matrix shape {matrix.shape} != expected {m_shape}")
        bias_real = bias_imag = None
        if entry.get("bias"):
            bias = read_tensor(os.path.join(directory, entry["bias"]))
            if bias_len is None or bias.shape != (bias_len,):
                raise FormatError(f"layer {i} bias shape {bias.shape} != expected ({bias_len},)")
            bias_real, bias_imag = bias.real, bias.imag
        weights[i] = ComplexWeights(matrix.real, matrix.imag, bias_real, bias_imag)
    for i, shapes in enumerate(expected):
        if shapes is not None and weights[i] is None:
            raise FormatError(f"checkpoint missing weights for layer {i}")
    return spec, weights, manifest.get("meta", {})
