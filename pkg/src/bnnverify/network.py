"""Feed-forward network representation: typed layers, exact evaluation,
structural validation, weighted-sum merging, and the JSON file format.

Layer kinds: input, weighted_sum, relu, sign, max. Consecutive-layer
wiring only; sign(0) = 1 throughout.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import affine_interval

INPUT = "input"
WEIGHTED_SUM = "weighted_sum"
RELU = "relu"
SIGN = "sign"
MAX = "max"

LAYER_KINDS = (INPUT, WEIGHTED_SUM, RELU, SIGN, MAX)


class NetworkError(Exception):
    """Structural problem in a network or an evaluation input."""


@dataclass
class Layer:
    kind: str
    size: int
    weights: np.ndarray | None = None  # (size, prev_size), weighted_sum only
    biases: np.ndarray | None = None  # (size,), weighted_sum only
    sources: list[list[int]] | None = None  # 1-based indices, max only


@dataclass
class Network:
    layers: list[Layer]
    metadata: str = ""

    @property
    def input_size(self):
        return self.layers[0].size

    @property
    def output_size(self):
        return self.layers[-1].size


def sign_fn(x):
    """Elementwise sign with sign(0) = 1."""
    return np.where(np.asarray(x, dtype=float) < 0.0, -1.0, 1.0)


def validate(net):
    """Return a list of structural violations (empty list means ok)."""
    problems = []
    layers = net.layers
    if len(layers) < 2:
        problems.append("network must have at least 2 layers")
        return problems
    if layers[0].kind != INPUT:
        problems.append("layer 1: first layer must be input")
    if layers[-1].kind != WEIGHTED_SUM:
        problems.append(f"layer {len(layers)}: output layer must be weighted_sum")
    for idx, layer in enumerate(layers):
        where = f"layer {idx + 1}"
        if layer.kind not in LAYER_KINDS:
            problems.append(f"{where}: unknown kind {layer.kind!r}")
            continue
        if layer.size < 1:
            problems.append(f"{where}: size must be positive")
        if idx > 0 and layer.kind == INPUT:
            problems.append(f"{where}: input layer only allowed at position 1")
        if idx == 0:
            continue
        prev = layers[idx - 1].size
        if layer.kind == WEIGHTED_SUM:
            if layer.weights is None or layer.biases is None:
                problems.append(f"{where}: weighted_sum needs weights and biases")
            else:
                if layer.weights.shape != (layer.size, prev):
                    problems.append(
                        f"{where}: weights shape {layer.weights.shape} != "
                        f"({layer.size}, {prev})"
                    )
                if layer.biases.shape != (layer.size,):
                    problems.append(
                        f"{where}: biases length {layer.biases.shape[0]} != {layer.size}"
                    )
        elif layer.kind in (RELU, SIGN):
            if layer.size != prev:
                problems.append(
                    f"{where}: {layer.kind} size {layer.size} != preceding size {prev}"
                )
        elif layer.kind == MAX:
            if not layer.sources or len(layer.sources) != layer.size:
                problems.append(f"{where}: max needs one source list per neuron")
            else:
                for j, src in enumerate(layer.sources):
                    if not src:
                        problems.append(f"{where}: neuron {j + 1} has empty sources")
                    elif any(s < 1 or s > prev for s in src):
                        problems.append(
                            f"{where}: neuron {j + 1} source index out of [1, {prev}]"
                        )
    return problems


def check_valid(net):
    problems = validate(net)
    if problems:
        raise NetworkError("; ".join(problems))


def evaluate_layers(net, x):
    """Exact forward pass; returns the value vector of every layer."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_size,):
        raise NetworkError(
            f"layer 1: input length {x.shape} does not match size {net.input_size}"
        )
    per_layer = [x]
    values = x
    for idx, layer in enumerate(net.layers[1:], start=2):
        if layer.kind == WEIGHTED_SUM:
            values = layer.weights @ values + layer.biases
        elif layer.kind == RELU:
            values = np.maximum(values, 0.0)
        elif layer.kind == SIGN:
            values = sign_fn(values)
        elif layer.kind == MAX:
            values = np.array(
                [max(values[s - 1] for s in src) for src in layer.sources]
            )
        else:
            raise NetworkError(f"layer {idx}: cannot evaluate kind {layer.kind!r}")
        per_layer.append(values)
    return per_layer


def evaluate(net, x):
    """Exact forward pass; returns the output-layer vector."""
    return evaluate_layers(net, x)[-1]


def layer_intervals(layer, lo, hi):
    """Interval image of one (non-input) layer over box [lo, hi]."""
    if layer.kind == WEIGHTED_SUM:
        return affine_interval(
            np.ascontiguousarray(layer.weights, dtype=float),
            np.asarray(layer.biases, dtype=float),
            np.ascontiguousarray(lo, dtype=float),
            np.ascontiguousarray(hi, dtype=float),
        )
    if layer.kind == RELU:
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    if layer.kind == SIGN:
        out_lo = np.where(lo >= 0.0, 1.0, -1.0)
        out_hi = np.where(hi < 0.0, -1.0, 1.0)
        return out_lo, out_hi
    if layer.kind == MAX:
        out_lo = np.array([max(lo[s - 1] for s in src) for src in layer.sources])
        out_hi = np.array([max(hi[s - 1] for s in src) for src in layer.sources])
        return out_lo, out_hi
    raise NetworkError(f"cannot propagate through kind {layer.kind!r}")


def merge_weighted_sums(net):
    """Fuse consecutive weighted-sum layers until none remain adjacent.

    Semantics are preserved exactly in real arithmetic:
    W3 = W2 @ W1, B3 = W2 @ B1 + B2.
    """
    layers = list(net.layers)
    changed = True
    while changed:
        changed = False
        out = [layers[0]]
        i = 1
        while i < len(layers):
            cur = layers[i]
            if (
                cur.kind == WEIGHTED_SUM
                and out[-1].kind == WEIGHTED_SUM
            ):
                prev = out.pop()
                out.append(
                    Layer(
                        kind=WEIGHTED_SUM,
                        size=cur.size,
                        weights=cur.weights @ prev.weights,
                        biases=cur.weights @ prev.biases + cur.biases,
                    )
                )
                changed = True
            else:
                out.append(cur)
            i += 1
        layers = out
    return Network(layers=layers, metadata=net.metadata)


def to_dict(net):
    layers = []
    for layer in net.layers:
        entry = {"kind": layer.kind, "size": layer.size}
        if layer.kind == WEIGHTED_SUM:
            entry["weights"] = layer.weights.tolist()
            entry["biases"] = layer.biases.tolist()
        elif layer.kind == MAX:
            entry["sources"] = layer.sources
        layers.append(entry)
    doc = {"layers": layers}
    if net.metadata:
        doc["metadata"] = net.metadata
    return doc


def from_dict(doc):
    if not isinstance(doc, dict) or "layers" not in doc:
        raise NetworkError('network JSON must be an object with a "layers" array')
    layers = []
    for idx, entry in enumerate(doc["layers"], start=1):
        kind = entry.get("kind")
        if kind not in LAYER_KINDS:
            raise NetworkError(f"layer {idx}: unknown kind {kind!r}")
        layer = Layer(kind=kind, size=int(entry["size"]))
        if kind == WEIGHTED_SUM:
            layer.weights = np.asarray(entry["weights"], dtype=float)
            layer.biases = np.asarray(entry["biases"], dtype=float)
        elif kind == MAX:
            layer.sources = [[int(s) for s in src] for src in entry["sources"]]
        layers.append(layer)
    return Network(layers=layers, metadata=str(doc.get("metadata", "")))


def save_json(net, path):
    with open(path, "w") as fh:
        json.dump(to_dict(net), fh)


def load_json(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    net = from_dict(doc)
    problems = validate(net)
    if problems:
        raise NetworkError(f"{path}: " + "; ".join(problems))
    return net
