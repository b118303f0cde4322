"""Text-to-synthetic-input conversion for the augmenting encoder."""

from .durations import (DurationModel, estimate_durations, gen_repphonestream, map_durations,
                        read_mapping, repeat_count, strip_stress)
from .g2p import G2PModel, g2p_apply, g2p_train
from .lexicon import Lexicon
from .streams import (SCHEMES, AugmentingPair, CorpusStats, SkipSentence, filter_corpus,
                      gen_charstream, gen_phonestream, gen_repphonestream_pair, generate_corpus,
                      make_generator, read_corpus, write_corpus)
from .text import normalize_text

__all__ = [
    "DurationModel", "estimate_durations", "gen_repphonestream", "map_durations", "read_mapping",
    "repeat_count", "strip_stress", "G2PModel", "g2p_apply", "g2p_train", "Lexicon", "SCHEMES",
    "AugmentingPair", "CorpusStats", "SkipSentence", "filter_corpus", "gen_charstream",
    "gen_phonestream", "gen_repphonestream_pair", "generate_corpus", "make_generator",
    "read_corpus", "write_corpus", "normalize_text",
]
