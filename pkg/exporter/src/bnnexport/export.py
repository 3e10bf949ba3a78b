"""Lower a Keras-style model to the verifier's network JSON.

Supported source layers: Dense and Conv2D (binary or real weights, with
linear / relu / sign activations), BatchNormalization, MaxPooling2D,
ReLU, Activation, and Flatten. Convolutions are unrolled into explicit
dense weighted-sum matrices, batch normalization becomes a diagonal
weighted-sum (which the engine can merge with its neighbours), max
pooling becomes a max layer with explicit source indices, and Flatten is
index bookkeeping only (the flat ordering is already row-major over
height, width, channels).

The export is checked end to end: the emitted JSON is evaluated through
the verifier's command-line interface on random inputs and compared
against the source model's forward pass.
"""

import dataclasses
import json
import math
import shutil
import subprocess
import sys
import tempfile
import warnings
from pathlib import Path

import keras
import numpy as np

from .activations import ste_sign

AGREEMENT_TOL = 1e-4


class ExportError(Exception):
    """Unsupported source model or round-trip disagreement."""


@dataclasses.dataclass
class ExportManifest:
    source_model: str
    output: str
    layer_map: list  # {"source": name, "emitted": [indices]} or "dropped"
    agreement: dict  # {"samples": n, "max_abs_diff": float}

    def to_json(self):
        return dataclasses.asdict(self)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def _activation_name(fn):
    if fn is None:
        return "linear"
    name = getattr(fn, "__name__", str(fn))
    return name


def _check_sign_convention(fn, layer_name):
    """The verifier defines sign(0) = +1; warn when the source differs."""
    at_zero = np.asarray(keras.ops.convert_to_numpy(fn(np.zeros(1))))
    if not np.all(at_zero == 1.0):
        warnings.warn(
            f"layer {layer_name!r}: source sign activation maps 0 to "
            f"{at_zero.tolist()}, but the verifier uses sign(0) = +1"
        )


def _conv_to_dense(kernel, bias, in_shape, strides, padding):
    """Unroll a channels-last 2-D convolution into a dense matrix."""
    kh, kw, cin, cout = kernel.shape
    H, W, C = in_shape
    if C != cin:
        raise ExportError(f"conv kernel expects {cin} channels, input has {C}")
    sh, sw = strides
    if padding == "same":
        Ho, Wo = math.ceil(H / sh), math.ceil(W / sw)
        pad_top = max((Ho - 1) * sh + kh - H, 0) // 2
        pad_left = max((Wo - 1) * sw + kw - W, 0) // 2
    else:
        Ho, Wo = (H - kh) // sh + 1, (W - kw) // sw + 1
        pad_top = pad_left = 0
    if Ho < 1 or Wo < 1:
        raise ExportError("convolution output is empty")
    mat = np.zeros((Ho * Wo * cout, H * W * C))
    vec = np.zeros(Ho * Wo * cout)
    for i in range(Ho):
        for j in range(Wo):
            for co in range(cout):
                out = (i * Wo + j) * cout + co
                vec[out] = 0.0 if bias is None else bias[co]
                for di in range(kh):
                    si = i * sh + di - pad_top
                    if not 0 <= si < H:
                        continue
                    for dj in range(kw):
                        sj = j * sw + dj - pad_left
                        if not 0 <= sj < W:
                            continue
                        for ci in range(cin):
                            mat[out, (si * W + sj) * C + ci] += kernel[
                                di, dj, ci, co
                            ]
    return mat, vec, (Ho, Wo, cout)


def _pool_sources(in_shape, pool, strides):
    """1-based source index lists for a channels-last valid max pool."""
    H, W, C = in_shape
    ph, pw = pool
    sh, sw = strides
    Ho, Wo = (H - ph) // sh + 1, (W - pw) // sw + 1
    if Ho < 1 or Wo < 1:
        raise ExportError("max-pool output is empty")
    sources = []
    for i in range(Ho):
        for j in range(Wo):
            for c in range(C):
                sources.append(
                    [
                        ((i * sh + di) * W + (j * sw + dj)) * C + c + 1
                        for di in range(ph)
                        for dj in range(pw)
                    ]
                )
    return sources, (Ho, Wo, C)


def _fold_batch_norm(layer):
    """Diagonal weighted-sum equivalent of inference-mode batch norm."""
    var = np.asarray(layer.moving_variance)
    mean = np.asarray(layer.moving_mean)
    gamma = np.asarray(layer.gamma) if layer.scale else np.ones_like(var)
    beta = np.asarray(layer.beta) if layer.center else np.zeros_like(var)
    scale = gamma / np.sqrt(var + layer.epsilon)
    return scale, beta - mean * scale


def _ws_entry(mat, vec):
    return {
        "kind": "weighted_sum",
        "size": mat.shape[0],
        "weights": np.asarray(mat, dtype=float).tolist(),
        "biases": np.asarray(vec, dtype=float).tolist(),
    }


def _lower(model):
    """(layer entries, layer mapping table). Shapes are channels-last."""
    if not isinstance(model, keras.Sequential):
        raise ExportError(
            f"only sequential models are supported, got {type(model).__name__}"
        )
    in_shape = tuple(model.inputs[0].shape[1:])
    if any(d is None for d in in_shape):
        raise ExportError(f"input shape {in_shape} is not fully specified")
    spatial = in_shape if len(in_shape) == 3 else None
    flat = int(np.prod(in_shape))
    entries = [{"kind": "input", "size": flat}]
    layer_map = []

    def emit(entry):
        entries.append(entry)
        return len(entries) - 1

    def emit_activation(fn, name):
        act = _activation_name(fn)
        if act == "linear":
            return []
        if act == "relu":
            return [emit({"kind": "relu", "size": entries[-1]["size"]})]
        if act == "ste_sign":
            _check_sign_convention(fn, name)
            return [emit({"kind": "sign", "size": entries[-1]["size"]})]
        raise ExportError(f"layer {name!r}: unsupported activation {act!r}")

    for layer in model.layers:
        name = layer.name
        emitted = []
        if isinstance(layer, keras.layers.Dense):
            if spatial is not None:
                # Keras applies Dense to the channel axis only; a flat
                # dense over spatial data needs an explicit Flatten
                raise ExportError(
                    f"layer {name!r}: Dense on spatial input; add Flatten"
                )
            kernel = np.asarray(layer.kernel)
            bias = (
                np.asarray(layer.bias)
                if layer.use_bias
                else np.zeros(kernel.shape[1])
            )
            emitted.append(emit(_ws_entry(kernel.T, bias)))
            spatial = None
            emitted += emit_activation(layer.activation, name)
        elif isinstance(layer, keras.layers.Conv2D):
            if spatial is None:
                raise ExportError(f"layer {name!r}: conv input is not spatial")
            if layer.data_format != "channels_last":
                raise ExportError(f"layer {name!r}: channels_last only")
            mat, vec, spatial = _conv_to_dense(
                np.asarray(layer.kernel),
                np.asarray(layer.bias) if layer.use_bias else None,
                spatial,
                layer.strides,
                layer.padding,
            )
            emitted.append(emit(_ws_entry(mat, vec)))
            emitted += emit_activation(layer.activation, name)
        elif isinstance(layer, keras.layers.BatchNormalization):
            scale, shift = _fold_batch_norm(layer)
            size = entries[-1]["size"]
            per = size // len(scale)  # broadcast over spatial positions
            diag = np.diag(np.tile(scale, per))
            emitted.append(emit(_ws_entry(diag, np.tile(shift, per))))
        elif isinstance(layer, keras.layers.MaxPooling2D):
            if spatial is None:
                raise ExportError(f"layer {name!r}: pool input is not spatial")
            if layer.padding != "valid":
                raise ExportError(f"layer {name!r}: valid padding only")
            sources, spatial = _pool_sources(
                spatial, layer.pool_size, layer.strides or layer.pool_size
            )
            emitted.append(
                emit({"kind": "max", "size": len(sources), "sources": sources})
            )
        elif isinstance(layer, keras.layers.ReLU):
            emitted.append(emit({"kind": "relu", "size": entries[-1]["size"]}))
        elif isinstance(layer, keras.layers.Activation):
            emitted += emit_activation(layer.activation, name)
            if not emitted:
                layer_map.append({"source": name, "emitted": "dropped"})
                continue
        elif isinstance(layer, keras.layers.Flatten):
            spatial = None
            layer_map.append({"source": name, "emitted": "dropped"})
            continue
        else:
            raise ExportError(
                f"unsupported layer {name!r} of type {type(layer).__name__}"
            )
        layer_map.append({"source": name, "emitted": emitted})
    return entries, layer_map


def _engine_eval(net_path, inputs):
    """Batch-evaluate inputs through the verifier's command line."""
    exe = shutil.which("bnnverify")
    cmd = [exe] if exe else [sys.executable, "-m", "bnnverify.cli"]
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(np.asarray(inputs, dtype=float).tolist(), fh)
        tmp = fh.name
    try:
        proc = subprocess.run(
            cmd + ["eval", "--net", str(net_path), "--input", tmp],
            capture_output=True,
            text=True,
        )
    finally:
        Path(tmp).unlink(missing_ok=True)
    if proc.returncode != 0:
        raise ExportError(f"engine evaluation failed: {proc.stderr.strip()}")
    return np.asarray(json.loads(proc.stdout))


def export(model_path, out_path, check_samples=100, seed=0):
    """Lower the model, write network JSON, and verify forward agreement.

    Returns an ExportManifest; also writes it beside the output as
    <out_path>.manifest.json. Raises ExportError for unsupported layers
    or when any of check_samples random inputs disagrees beyond 1e-4.
    """
    model = keras.saving.load_model(
        model_path, custom_objects={"ste_sign": ste_sign}
    )
    entries, layer_map = _lower(model)
    out_path = Path(out_path)
    with open(out_path, "w") as fh:
        json.dump({"layers": entries, "metadata": {"source": str(model_path)}}, fh)

    agreement = {"samples": 0, "max_abs_diff": 0.0}
    if check_samples > 0:
        rng = np.random.default_rng(seed)
        shape = (check_samples,) + tuple(model.inputs[0].shape[1:])
        x = rng.uniform(-1.0, 1.0, size=shape)
        want = np.asarray(model.predict(x, verbose=0))
        got = _engine_eval(out_path, x.reshape(check_samples, -1))
        diffs = np.abs(want - got).max(axis=tuple(range(1, want.ndim)))
        worst = int(np.argmax(diffs))
        agreement = {
            "samples": check_samples,
            "max_abs_diff": float(diffs[worst]),
        }
        if diffs[worst] > AGREEMENT_TOL:
            raise ExportError(
                f"round-trip disagreement {diffs[worst]:.3e} > "
                f"{AGREEMENT_TOL} on sample {worst}: "
                f"input {x[worst].ravel().tolist()}"
            )

    manifest = ExportManifest(
        source_model=str(model_path),
        output=str(out_path),
        layer_map=layer_map,
        agreement=agreement,
    )
    manifest.save(f"{out_path}.manifest.json")
    return manifest
