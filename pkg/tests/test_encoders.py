import math

import numpy as np
import pytest

from conftest import tiny_config, tiny_model
from mmda.config import ConfigError, ModelConfig
from mmda.encoders import (AcousticInput, InputTooShortError, SymbolicInput, encode_acoustic,
                           encode_augmenting, output_length)


def _ref_lstm(x, cell, reverse=False):
    """Plain numpy LSTM over ``x: [L, D]`` from zero state."""
    wx, wh, b = cell.w_x.data, cell.w_h.data, cell.b.data
    hd = wh.shape[0]
    h = np.zeros(hd)
    c = np.zeros(hd)
    out = np.zeros((len(x), hd))
    steps = range(len(x) - 1, -1, -1) if reverse else range(len(x))
    for t in steps:
        z = x[t] @ wx + h @ wh + b
        i = 1 / (1 + np.exp(-z[:hd]))
        f = 1 / (1 + np.exp(-z[hd:2 * hd]))
        g = np.tanh(z[2 * hd:3 * hd])
        o = 1 / (1 + np.exp(-z[3 * hd:]))
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def _ref_acoustic(encoder, feats):
    x = feats
    for i, (layer, proj) in enumerate(zip(encoder.layers, encoder.projections)):
        h = np.concatenate([_ref_lstm(x, layer.fwd), _ref_lstm(x, layer.bwd, reverse=True)], axis=1)
        if i in encoder.pyramid:
            if len(h) % 2:
                h = np.vstack([h, np.zeros((1, h.shape[1]))])
            h = h.reshape(len(h) // 2, -1)
        x = h @ proj.weight.data + proj.bias.data
    return x


@pytest.mark.parametrize("n_frames", [4, 5, 7, 12])
def test_acoustic_encoder_matches_numpy_composition(n_frames):
    model = tiny_model(64)
    feats = np.random.default_rng(n_frames).normal(size=(n_frames, 5))
    out = encode_acoustic(model.acoustic_encoder, AcousticInput(feats)).data
    np.testing.assert_allclose(out, _ref_acoustic(model.acoustic_encoder, feats), atol=1e-12)


def test_augmenting_encoder_matches_numpy_composition():
    model = tiny_model(64)
    enc = model.augmenting_encoder
    tokens = [3, 1, 4, 1, 2]
    out = encode_augmenting(enc, SymbolicInput(tokens)).data
    z = enc.embedding.table.data[tokens]
    h = np.concatenate([_ref_lstm(z, enc.layer.fwd), _ref_lstm(z, enc.layer.bwd, reverse=True)], axis=1)
    ref = h @ enc.projection.weight.data + enc.projection.bias.data
    np.testing.assert_allclose(out, ref, atol=1e-12)
    assert out.shape == (len(tokens), model.config.projection_dim)


@pytest.mark.parametrize("n_frames", list(range(4, 40)))
def test_pyramid_output_length(n_frames):
    model = tiny_model(32)
    feats = np.zeros((n_frames, 5), np.float32)
    out = encode_acoustic(model.acoustic_encoder, AcousticInput(feats))
    assert out.shape[0] == math.ceil(math.ceil(n_frames / 2) / 2) == output_length(n_frames)


def test_batched_encoding_equals_single():
    model = tiny_model(64)
    rng = np.random.default_rng(0)
    feats = [rng.normal(size=(n, 5)) for n in (9, 4, 14)]
    enc, lengths = model.encode_acoustic(feats)
    for f, n, row in zip(feats, lengths, enc.data):
        single = encode_acoustic(model.acoustic_encoder, AcousticInput(f)).data
        assert n == len(single)
        np.testing.assert_allclose(row[:n], single, atol=1e-12)


def test_too_short_input_raises():
    model = tiny_model(32)
    with pytest.raises(InputTooShortError):
        encode_acoustic(model.acoustic_encoder, AcousticInput(np.zeros((3, 5), np.float32)))


def test_feature_dim_mismatch_raises():
    model = tiny_model(32)
    with pytest.raises(ValueError):
        encode_acoustic(model.acoustic_encoder, AcousticInput(np.zeros((8, 6), np.float32)))


def test_embedding_dim_must_equal_input_dim():
    with pytest.raises(ConfigError):
        ModelConfig(input_dim=5, embedding_dim=4)


def test_unknown_symbol_id_raises():
    model = tiny_model(32)
    with pytest.raises(IndexError):
        encode_augmenting(model.augmenting_encoder, SymbolicInput([1, 99]))


def test_default_config_shapes():
    cfg = ModelConfig()
    assert (cfg.input_dim, cfg.hidden, cfg.acoustic_layers, cfg.embedding_dim) == (83, 320, 4, 83)
    assert cfg.downsampling == 4
    assert tiny_config().projection_dim == 4
