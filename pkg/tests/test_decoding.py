import numpy as np
import pytest

from conftest import tiny_config
from oracles import exhaustive_best
from mmda.attention_decoder import RnnLm
from mmda.config import BeamConfig
from mmda.decoding import (FORCED_EOS, Hypothesis, beam_search, beam_search_encoded, decode_line,
                           fuse_scores, greedy_search_encoded, length_bounds, parse_decode_line)
from mmda.encoders import AcousticInput, SymbolicInput, output_length
from mmda.training import MmdaModel
from mmda.vocab import OutputVocab, SymbolVocab


def tiny_decoder_model(seed: int, chars="", precision=64) -> MmdaModel:
    cfg = tiny_config(seed=seed, init_scale=1.0)
    return MmdaModel(cfg, OutputVocab(chars), SymbolVocab("ABCD"), precision=precision)


def test_length_bounds_examples():
    assert length_bounds(10) == (3, 8)
    assert length_bounds(15) == (4, 12)  # 0.8 * 15 is 12.000000000000002 in floating point
    assert length_bounds(6) == (1, 5)
    assert length_bounds(1) == (0, 1)


@pytest.mark.parametrize("seed", range(8))
def test_beam_matches_exhaustive_search(seed):
    model = tiny_decoder_model(seed)
    assert len(model.output_vocab) == 4
    feats = np.random.default_rng(100 + seed).normal(size=(22, 5))
    assert output_length(22) == 6
    best, score = exhaustive_best(model, feats)
    hyps = beam_search(model, AcousticInput(feats), BeamConfig(beam_size=64, lm_weight=0.0))
    assert hyps[0].tokens == best
    assert hyps[0].score == pytest.approx(score, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_beam_one_equals_greedy(seed):
    model = tiny_decoder_model(seed, chars="AB")
    feats = np.random.default_rng(seed).normal(size=(int(8 + 3 * seed), 5))
    cfg = BeamConfig(beam_size=1)
    enc, _ = model.encode_acoustic([feats])
    greedy = greedy_search_encoded(model.attention, model.decoder, enc, cfg)
    beam = beam_search(model, AcousticInput(feats), cfg)
    assert beam[0].tokens == greedy.tokens
    assert beam[0].score == pytest.approx(greedy.score, abs=1e-9)
    assert beam[0].flags == greedy.flags


@pytest.mark.parametrize("seed", range(10))
def test_hypotheses_respect_bounds_and_ranking(seed):
    model = tiny_decoder_model(seed, chars="ABC")
    feats = np.random.default_rng(seed).normal(size=(int(10 + 4 * seed), 5))
    f = output_length(len(feats))
    lo, hi = length_bounds(f)
    hyps = beam_search(model, AcousticInput(feats), BeamConfig(beam_size=5))
    assert hyps
    for h in hyps:
        assert lo <= len(h) <= hi
        assert np.isfinite(h.score)
        if FORCED_EOS in h.flags:
            assert len(h) == hi
    scores = [h.score for h in hyps]
    assert scores == sorted(scores, reverse=True)


def test_forced_eos_flagged_when_max_length_reached():
    model = tiny_decoder_model(0, chars="AB")
    feats = np.random.default_rng(0).normal(size=(12, 5))
    hyps = beam_search(model, AcousticInput(feats), BeamConfig(beam_size=3, min_ratio=0.8, max_ratio=0.8))
    assert all(FORCED_EOS in h.flags for h in hyps)
    assert all(len(h) == length_bounds(3, 0.8, 0.8)[1] for h in hyps)


def test_symbolic_input_uses_same_search():
    model = tiny_decoder_model(1, chars="AB")
    hyps = beam_search(model, SymbolicInput([1, 2, 3, 4, 1, 2]), BeamConfig(beam_size=4))
    enc, _ = model.encode_augmenting([[1, 2, 3, 4, 1, 2]])
    direct = beam_search_encoded(model.attention, model.decoder, enc, BeamConfig(beam_size=4))
    assert [h.tokens for h in hyps] == [h.tokens for h in direct]
    with pytest.raises(TypeError):
        beam_search(model, [1, 2, 3], BeamConfig())


def test_fuse_scores():
    asr = np.log(np.array([0.5, 0.3, 0.2]))
    lm = np.log(np.array([0.1, 0.6, 0.3]))
    np.testing.assert_array_equal(fuse_scores(asr, lm, 0.0), asr)
    np.testing.assert_allclose(fuse_scores(asr, lm, 0.3), [asr[i] + 0.3 * lm[i] for i in range(3)])
    uniform = np.full(3, np.log(1 / 3))
    assert np.argsort(fuse_scores(asr, uniform, 1.0)).tolist() == np.argsort(asr).tolist()
    with pytest.raises(ValueError):
        fuse_scores(asr, lm, -1.0)


def test_zero_lm_weight_ignores_lm():
    model = tiny_decoder_model(2, chars="AB")
    feats = np.random.default_rng(2).normal(size=(20, 5))
    lm = RnnLm(len(model.output_vocab), hidden=3, layers=1, seed=0)
    cfg = BeamConfig(beam_size=3, lm_weight=0.0)
    a = beam_search(model, AcousticInput(feats), cfg)
    b = beam_search(model, AcousticInput(feats), cfg, lm)
    assert [(h.tokens, h.score) for h in a] == [(h.tokens, h.score) for h in b]


def test_lm_fusion_changes_scores():
    model = tiny_decoder_model(2, chars="AB")
    feats = np.random.default_rng(2).normal(size=(20, 5))
    lm = RnnLm(len(model.output_vocab), hidden=3, layers=1, seed=0)
    a = beam_search(model, AcousticInput(feats), BeamConfig(beam_size=3, lm_weight=0.0))
    b = beam_search(model, AcousticInput(feats), BeamConfig(beam_size=3, lm_weight=0.5), lm)
    assert a[0].score != b[0].score
    with pytest.raises(ValueError):
        beam_search(model, AcousticInput(feats), BeamConfig(lm_weight=0.5), RnnLm(9, hidden=2, layers=1))


def test_decode_line_round_trip():
    line = decode_line("utt1", "AB BA", Hypothesis((4, 5), -1.25, [FORCED_EOS]), 0.3)
    assert line == "utt1\tAB BA\t-1.250000\tforced_eos,lm_weight=0.3\n"
    assert parse_decode_line(line) == ("utt1", "AB BA", -1.25, ["forced_eos", "lm_weight=0.3"])
