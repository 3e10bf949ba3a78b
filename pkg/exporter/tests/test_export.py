import json

import keras
import numpy as np
import pytest

from bnnexport import ExportError, export, ste_sign
from bnnexport.export import (
    _conv_to_dense,
    _fold_batch_norm,
    _lower,
    _pool_sources,
)


def _save(tmp_path, model, name="model.keras"):
    path = tmp_path / name
    model.save(path)
    return path


def _dense_bnn():
    rng = np.random.default_rng(7)
    model = keras.Sequential(
        [
            keras.layers.Input(shape=(2,)),
            keras.layers.Dense(3, activation=ste_sign),
            keras.layers.Dense(2),
        ]
    )
    model.layers[0].set_weights(
        [rng.choice([-1.0, 1.0], size=(2, 3)), rng.uniform(-1, 1, 3)]
    )
    model.layers[1].set_weights(
        [rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, 2)]
    )
    return model


def _conv_bnn():
    rng = np.random.default_rng(9)
    model = keras.Sequential(
        [
            keras.layers.Input(shape=(4, 4, 1)),
            keras.layers.Conv2D(2, 2, padding="same", use_bias=True),
            keras.layers.BatchNormalization(),
            keras.layers.Activation(ste_sign),
            keras.layers.MaxPooling2D(2),
            keras.layers.Flatten(),
            keras.layers.Dense(2),
        ]
    )
    conv = model.layers[0]
    conv.set_weights(
        [rng.choice([-1.0, 1.0], size=(2, 2, 1, 2)), rng.uniform(-1, 1, 2)]
    )
    bn = model.layers[1]
    bn.set_weights(
        [
            rng.uniform(0.5, 1.5, 2),  # gamma
            rng.uniform(-0.5, 0.5, 2),  # beta
            rng.uniform(-0.5, 0.5, 2),  # moving mean
            rng.uniform(0.5, 1.5, 2),  # moving variance
        ]
    )
    model.layers[-1].set_weights(
        [rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, 2)]
    )
    return model


def test_dense_bnn_structure_and_binary_weights(tmp_path):
    path = _save(tmp_path, _dense_bnn())
    out = tmp_path / "net.json"
    export(path, out, check_samples=0)
    net = json.load(open(out))
    kinds = [e["kind"] for e in net["layers"]]
    assert kinds == ["input", "weighted_sum", "sign", "weighted_sum"]
    binary = np.asarray(net["layers"][1]["weights"])
    assert np.all(np.isin(binary, (-1.0, 1.0)))


def test_pool_sources_4x4_2x2():
    sources, shape = _pool_sources((4, 4, 1), (2, 2), (2, 2))
    assert shape == (2, 2, 1)
    assert len(sources) == 4
    assert all(len(s) == 4 for s in sources)
    assert sources[0] == [1, 2, 5, 6]
    assert sources[3] == [11, 12, 15, 16]


def test_conv_to_dense_matches_keras():
    rng = np.random.default_rng(3)
    kernel = rng.standard_normal((3, 3, 2, 4))
    bias = rng.standard_normal(4)
    for padding, strides in [("valid", (1, 1)), ("same", (2, 2))]:
        layer = keras.layers.Conv2D(
            4, 3, strides=strides, padding=padding, use_bias=True
        )
        layer.build((None, 5, 6, 2))
        layer.set_weights([kernel, bias])
        x = rng.standard_normal((1, 5, 6, 2))
        want = np.asarray(layer(x))[0]
        mat, vec, shape = _conv_to_dense(
            kernel, bias, (5, 6, 2), strides, padding
        )
        assert shape == want.shape
        got = (mat @ x.reshape(-1) + vec).reshape(shape)
        np.testing.assert_allclose(got, want, atol=1e-6)


def test_batch_norm_folding_identity():
    layer = keras.layers.BatchNormalization(epsilon=1e-3)
    layer.build((None, 3))
    gamma = np.array([1.5, 0.5, 2.0])
    beta = np.array([0.1, -0.2, 0.3])
    mean = np.array([0.4, -0.1, 0.0])
    var = np.array([0.9, 1.1, 0.25])
    layer.set_weights([gamma, beta, mean, var])
    scale, shift = _fold_batch_norm(layer)
    x = np.random.default_rng(0).standard_normal((10, 3))
    want = np.asarray(layer(x, training=False))
    np.testing.assert_allclose(x * scale + shift, want, atol=1e-6)


def test_unsupported_layer_is_named(tmp_path):
    model = keras.Sequential(
        [
            keras.layers.Input(shape=(3,)),
            keras.layers.Dropout(0.5, name="drop_me"),
            keras.layers.Dense(1),
        ]
    )
    path = _save(tmp_path, model)
    with pytest.raises(ExportError, match="drop_me"):
        export(path, tmp_path / "net.json", check_samples=0)


def test_dense_on_spatial_requires_flatten():
    model = keras.Sequential(
        [keras.layers.Input(shape=(2, 2, 1)), keras.layers.Dense(1)]
    )
    with pytest.raises(ExportError, match="Flatten"):
        _lower(model)


def test_sign_zero_convention_warning(tmp_path):
    @keras.saving.register_keras_serializable(package="tests")
    def ste_sign(x):  # sign(0) = -1, unlike the verifier
        return keras.ops.where(x > 0, keras.ops.ones_like(x), -keras.ops.ones_like(x))

    model = keras.Sequential(
        [
            keras.layers.Input(shape=(2,)),
            keras.layers.Dense(1, activation=ste_sign),
        ]
    )
    path = _save(tmp_path, model)
    with pytest.warns(UserWarning, match="sign"):
        export(path, tmp_path / "net.json", check_samples=0)


def test_manifest_layer_map(tmp_path):
    path = _save(tmp_path, _conv_bnn())
    out = tmp_path / "net.json"
    manifest = export(path, out, check_samples=10)
    assert manifest.agreement["samples"] == 10
    flat = [m for m in manifest.layer_map if m["emitted"] == "dropped"]
    assert len(flat) == 1  # the Flatten layer is bookkeeping only
    emitted = [
        i
        for m in manifest.layer_map
        if m["emitted"] != "dropped"
        for i in m["emitted"]
    ]
    assert emitted == sorted(emitted)
    saved = json.load(open(f"{out}.manifest.json"))
    assert saved["layer_map"] == manifest.layer_map


def test_roundtrip_dense_bnn(tmp_path):
    # acceptance: 100 random inputs agree within 1e-4; binary weights exact
    path = _save(tmp_path, _dense_bnn())
    out = tmp_path / "net.json"
    manifest = export(path, out, check_samples=100)
    assert manifest.agreement["samples"] == 100
    assert manifest.agreement["max_abs_diff"] <= 1e-4
    net = json.load(open(out))
    binary = np.asarray(net["layers"][1]["weights"])
    assert np.all(np.isin(binary, (-1.0, 1.0)))
    print(
        "\n[PASS] exporter round-trip, dense bnn "
        f"(max |diff| {manifest.agreement['max_abs_diff']:.2e} over 100 inputs)"
    )


def test_roundtrip_conv_maxpool_bnn(tmp_path):
    path = _save(tmp_path, _conv_bnn())
    out = tmp_path / "net.json"
    manifest = export(path, out, check_samples=100)
    assert manifest.agreement["samples"] == 100
    assert manifest.agreement["max_abs_diff"] <= 1e-4
    net = json.load(open(out))
    kinds = [e["kind"] for e in net["layers"]]
    assert kinds == [
        "input",
        "weighted_sum",  # conv, unrolled
        "weighted_sum",  # batch norm, diagonal
        "sign",
        "max",
        "weighted_sum",
    ]
    conv = np.asarray(net["layers"][1]["weights"])
    assert np.all(np.isin(conv[conv != 0.0], (-1.0, 1.0)))
    print(
        "\n[PASS] exporter round-trip, conv+max-pool bnn "
        f"(max |diff| {manifest.agreement['max_abs_diff']:.2e} over 100 inputs)"
    )
