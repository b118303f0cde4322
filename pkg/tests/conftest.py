from __future__ import annotations

import numpy as np
import pytest

from mmda.config import ModelConfig
from mmda.training import AcousticExample, AugmentingExample, MmdaModel
from mmda.vocab import OutputVocab, SymbolVocab


def tiny_config(**overrides) -> ModelConfig:
    base = dict(input_dim=5, hidden=4, acoustic_layers=4, pyramid_layers=(2, 3), att_dim=6,
                att_channels=2, att_kernel=3, dec_layers=2, dec_hidden=5, seed=3)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(precision=64, **overrides) -> MmdaModel:
    return MmdaModel(tiny_config(**overrides), OutputVocab("AB"), SymbolVocab("ABCD"),
                     precision=precision)


def toy_batches(model: MmdaModel, seed: int = 0, n: int = 2):
    rng = np.random.default_rng(seed)
    dim = model.config.input_dim
    ov = model.output_vocab
    acoustic = [AcousticExample(f"a{i}", rng.normal(size=(int(rng.integers(6, 11)), dim)),
                                ov.encode("AB A"[:2 + i])) for i in range(n)]
    augmenting = [AugmentingExample(f"z{i}", list(rng.integers(0, 5, size=3 + i)),
                                    ov.encode("BA B"[:2 + i])) for i in range(n)]
    return acoustic, augmenting


@pytest.fixture
def model64():
    return tiny_model(64)


@pytest.fixture
def batches(model64):
    return toy_batches(model64)
