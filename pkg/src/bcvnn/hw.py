"""Analytical hardware cost model for complex networks.

Layers fall into three engine classes: linear layers (conv, dense) run
the four real sub-operations of a complex product, elementwise layers
(pool, activation) process the two parts independently, and dropout
layers mask parts. Two mapping schemes are modeled: one deploys enough
engines to run a layer's parallel work at once, the other halves the
engines and serializes the parts, exactly doubling latency.

Latency is counted in abstract units: 1 unit = one engine-pass over one
real-valued sub-operation workload. Dropout latency is elements-touched
and deliberately uncalibrated against the compute engines; within the
model it is scheme-independent. The numbers order designs, they do not
predict cycle counts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .layers import LayerKind, NetworkSpec, PartMode, apply_genome, weight_shapes


class MappingScheme(enum.Enum):
    LATENCY_OPT = "latency-opt"
    RESOURCE_OPT = "resource-opt"


class LayerClass(enum.Enum):
    LINEAR = "linear"          # complex conv / dense: four-sub-operation MAC work
    ELEMENTWISE = "elementwise"  # pool / activation: per-part, per-element work
    DROPOUT = "dropout"


@dataclass(frozen=True)
class CostEstimate:
    latency_units: float
    engine_count: int
    mac_ops: int
    dropout_engines: int
    memory_words: int

    def __post_init__(self):
        if (self.latency_units < 0 or self.engine_count < 0 or self.mac_ops < 0
                or self.dropout_engines < 0 or self.memory_words < 0):
            raise ConfigError("cost components must be nonnegative")

    def __add__(self, other):
        return CostEstimate(self.latency_units + other.latency_units,
                            self.engine_count + other.engine_count,
                            self.mac_ops + other.mac_ops,
                            self.dropout_engines + other.dropout_engines,
                            self.memory_words + other.memory_words)


ZERO_COST = CostEstimate(0.0, 0, 0, 0, 0)


@dataclass(frozen=True)
class LayerCost:
    index: int
    layer_class: LayerClass
    estimate: CostEstimate


@dataclass(frozen=True)
class NetworkCost:
    scheme: MappingScheme
    total: CostEstimate
    layers: tuple


def classify_layer(layer) -> LayerClass:
    if layer.kind in (LayerKind.CONV2D, LayerKind.DENSE):
        return LayerClass.LINEAR
    if layer.kind in (LayerKind.POOL, LayerKind.ACTIVATION):
        return LayerClass.ELEMENTWISE
    return LayerClass.DROPOUT


def _linear_workload(layer, input_shape):
    """MACs of one real sub-operation (the base latency unit L)."""
    if layer.kind is LayerKind.CONV2D:
        if len(input_shape) != 3:
            raise ConfigError(f"conv cost needs a (C,H,W) input shape, got {input_shape}")
        c, h, w = input_shape
        kh, kw = layer.kernel
        oh = (h - kh) // layer.stride + 1
        ow = (w - kw) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ConfigError(f"kernel {layer.kernel} does not fit input {input_shape}")
        return layer.out_channels * oh * ow * c * kh * kw
    return layer.out_features * int(np.prod(input_shape))


def _linear_memory(layer, input_shape):
    # dual-part storage doubles the real parameter count
    if layer.kind is LayerKind.CONV2D:
        params = layer.out_channels * input_shape[0] * layer.kernel[0] * layer.kernel[1]
        bias = layer.out_channels if layer.bias else 0
    else:
        params = layer.out_features * int(np.prod(input_shape))
        bias = layer.out_features if layer.bias else 0
    return 2 * (params + bias)


def estimate_layer(layer, scheme: MappingScheme, input_shape) -> CostEstimate:
    """Cost of one layer given its per-sample input shape.

    Linear layers: base workload L; the parallel scheme spends 4 engines
    for latency L, the serialized scheme 2 engines for latency 2L.
    Elementwise layers: the same trade at 2 engines vs 1. Dropout: two
    switched engines under either scheme, with one or both active and
    latency equal to elements touched.
    """
    if input_shape is None:
        raise ConfigError("layer cost needs a resolved input shape")
    input_shape = tuple(int(s) for s in input_shape)
    if not input_shape or min(input_shape) < 1:
        raise ConfigError(f"input extents must be >= 1, got {input_shape}")
    cls = classify_layer(layer)
    if cls is LayerClass.LINEAR:
        base = _linear_workload(layer, input_shape)
        memory = _linear_memory(layer, input_shape)
        if scheme is MappingScheme.LATENCY_OPT:
            return CostEstimate(float(base), 4, 4 * base, 0, memory)
        return CostEstimate(2.0 * base, 2, 4 * base, 0, memory)
    if cls is LayerClass.ELEMENTWISE:
        base = int(np.prod(input_shape))
        if scheme is MappingScheme.LATENCY_OPT:
            return CostEstimate(float(base), 2, 0, 0, 0)
        return CostEstimate(2.0 * base, 1, 0, 0, 0)
    if layer.part_mode is None:
        raise ConfigError("dropout layer has no part mode assigned")
    parts = 2 if layer.part_mode is PartMode.BOTH else 1
    elements = int(np.prod(input_shape))
    return CostEstimate(float(parts * elements), 2, 0, parts, 0)


def estimate_network(spec: NetworkSpec, genome, scheme: MappingScheme) -> NetworkCost:
    """Sum per-layer costs under a sequential execution model.

    ``genome`` overrides the spec's dropout part modes when given; pass
    None to cost the spec as written.
    """
    if genome is not None:
        spec = apply_genome(spec, genome)
    layers = []
    total = ZERO_COST
    for i, layer in enumerate(spec.layers):
        est = estimate_layer(layer, scheme, spec.layer_input_shape(i))
        layers.append(LayerCost(i, classify_layer(layer), est))
        total = total + est
    return NetworkCost(scheme, total, tuple(layers))


@dataclass(frozen=True)
class SchemeComparison:
    latency_opt: NetworkCost
    resource_opt: NetworkCost

    @property
    def latency_ratio(self) -> float:
        """ResourceOpt latency over LatencyOpt latency."""
        return self.resource_opt.total.latency_units / self.latency_opt.total.latency_units

    @property
    def engine_ratio(self) -> float:
        return self.resource_opt.total.engine_count / self.latency_opt.total.engine_count


def compare_schemes(spec: NetworkSpec, genome=None) -> SchemeComparison:
    """Side-by-side network costs under both mapping schemes."""
    return SchemeComparison(
        estimate_network(spec, genome, MappingScheme.LATENCY_OPT),
        estimate_network(spec, genome, MappingScheme.RESOURCE_OPT))


COST_COLUMNS = ("layer_index", "layer_class", "scheme", "latency_units",
                "engines", "mac_ops", "dropout_engines", "memory_words")


def cost_rows(comparison: SchemeComparison):
    """Flatten a comparison into CSV rows (string layer_index 'total' for the sums)."""
    rows = []
    for net in (comparison.latency_opt, comparison.resource_opt):
        for lc in net.layers:
            e = lc.estimate
            rows.append((str(lc.index), lc.layer_class.value, net.scheme.value,
                         repr(e.latency_units), str(e.engine_count), str(e.mac_ops),
                         str(e.dropout_engines), str(e.memory_words)))
        t = net.total
        rows.append(("total", "-", net.scheme.value, repr(t.latency_units),
                     str(t.engine_count), str(t.mac_ops), str(t.dropout_engines),
                     str(t.memory_words)))
    return rows


def comparison_from_rows(rows) -> SchemeComparison:
    """Inverse of cost_rows; used to prove the CSV emitter is lossless."""
    nets = {}
    for row in rows:
        idx, cls, scheme, latency, engines, macs, drops, mem = row
        est = CostEstimate(float(latency), int(engines), int(macs), int(drops), int(mem))
        bucket = nets.setdefault(scheme, {"layers": [], "total": None})
        if idx == "total":
            bucket["total"] = est
        else:
            bucket["layers"].append(LayerCost(int(idx), LayerClass(cls), est))
    out = {}
    for scheme_value, bucket in nets.items():
        scheme = MappingScheme(scheme_value)
        layers = tuple(sorted(bucket["layers"], key=lambda lc: lc.index))
        total = bucket["total"]
        if total is None:
            total = ZERO_COST
            for lc in layers:
                total = total + lc.estimate
        out[scheme] = NetworkCost(scheme, total, layers)
    try:
        return SchemeComparison(out[MappingScheme.LATENCY_OPT], out[MappingScheme.RESOURCE_OPT])
    except KeyError as exc:
        raise ConfigError(f"cost table is missing scheme {exc}") from None
