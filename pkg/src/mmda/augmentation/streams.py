"""Synthetic input schemes: charstream, phonestream and rep-phonestream."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from ..vocab import SPACE, UNK, OutputVocab
from .durations import DurationModel, gen_repphonestream
from .g2p import G2PModel
from .lexicon import Lexicon
from .text import normalize_text

log = logging.getLogger(__name__)

SCHEMES = ("charstream", "phonestream", "rep-phonestream")


class SkipSentence(ValueError):
    """The sentence produces no usable pair (e.g. empty after normalization)."""


@dataclass(frozen=True)
class AugmentingPair:
    """Synthetic input ``z`` and the target sentence ``s`` it was derived from."""

    z: tuple
    s: str
    uttid: str = ""

    def __post_init__(self):
        if not self.z or not self.s:
            raise ValueError("augmenting pair needs nonempty z and s")

    @property
    def unk_count(self) -> int:
        return sum(1 for t in self.z if t == UNK)


def gen_charstream(sentence: str, uttid: str = "") -> AugmentingPair:
    """Input = the sentence's characters with word boundaries dropped."""
    s = normalize_text(sentence)
    if not s:
        raise SkipSentence("empty sentence")
    return AugmentingPair(tuple(ch for ch in s if ch != " "), s, uttid)


def pronounce(word: str, lex: Lexicon, g2p: Optional[G2PModel]) -> list[str]:
    """Lexicon first, then G2P, else a single ``<unk>``."""
    pron = lex.lookup(word)
    if pron is not None:
        return list(pron)
    if g2p is not None:
        phones = g2p.apply(word)
        if phones:
            return phones
    return [UNK]


def gen_phonestream(sentence: str, lex: Lexicon, g2p: Optional[G2PModel] = None,
                    uttid: str = "") -> AugmentingPair:
    s = normalize_text(sentence)
    if not s:
        raise SkipSentence("empty sentence")
    phones: list[str] = []
    for word in s.split(" "):
        phones.extend(pronounce(word, lex, g2p))
    return AugmentingPair(tuple(phones), s, uttid)


def gen_repphonestream_pair(sentence: str, lex: Lexicon, g2p: Optional[G2PModel],
                            dm: DurationModel, rng: np.random.Generator, uttid: str = "",
                            downsampling: int = 4, rounding: str = "quotient") -> AugmentingPair:
    pair = gen_phonestream(sentence, lex, g2p, uttid)
    return AugmentingPair(tuple(gen_repphonestream(pair.z, dm, rng, downsampling, rounding)),
                          pair.s, uttid)


def keep_pair(pair: AugmentingPair, max_chars: int = 250, max_unk: int = 1) -> bool:
    return pair.unk_count <= max_unk and len(pair.s) <= max_chars


def filter_corpus(pairs: Iterable[AugmentingPair], max_chars: int = 250,
                  max_unk: int = 1) -> Iterator[AugmentingPair]:
    """Drop pairs with more than ``max_unk`` ``<unk>`` symbols or over ``max_chars`` characters."""
    return (p for p in pairs if keep_pair(p, max_chars, max_unk))


def sentence_seed(global_seed: int, index: int) -> int:
    return int(global_seed) ^ int(index)


def make_generator(scheme: str, lex: Optional[Lexicon] = None, g2p: Optional[G2PModel] = None,
                   dm: Optional[DurationModel] = None, seed: int = 1, downsampling: int = 4,
                   rounding: str = "quotient") -> Callable[[int, str, str], AugmentingPair]:
    """``gen(index, uttid, sentence) -> AugmentingPair`` for ``scheme``.

    Rep-phonestream draws from a generator seeded with ``seed ^ index`` so the
    output does not depend on how sentences are split across workers.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme != "charstream" and lex is None:
        raise ValueError(f"{scheme} requires a lexicon")
    if scheme == "rep-phonestream" and dm is None:
        raise ValueError("rep-phonestream requires duration statistics")
    if scheme == "charstream":
        return lambda i, uttid, text: gen_charstream(text, uttid)
    if scheme == "phonestream":
        return lambda i, uttid, text: gen_phonestream(text, lex, g2p, uttid)
    return lambda i, uttid, text: gen_repphonestream_pair(
        text, lex, g2p, dm, np.random.default_rng(sentence_seed(seed, i)), uttid, downsampling, rounding)


@dataclass
class CorpusStats:
    kept: int = 0
    dropped: int = 0
    skipped: int = 0


def generate_corpus(sentences: Iterable[str], gen, max_chars: int = 250, max_unk: int = 1,
                    stats: Optional[CorpusStats] = None, prefix: str = "aug") -> Iterator[AugmentingPair]:
    """Stream sentences through ``gen`` and the corpus filter, counting what was dropped."""
    stats = stats if stats is not None else CorpusStats()
    for i, text in enumerate(sentences):
        try:
            pair = gen(i, f"{prefix}{i:08d}", text)
        except SkipSentence:
            stats.skipped += 1
            continue
        if keep_pair(pair, max_chars, max_unk):
            stats.kept += 1
            yield pair
        else:
            stats.dropped += 1


# ---------------------------------------------------------------- corpus file

def format_pair(pair: AugmentingPair) -> str:
    target = " ".join(OutputVocab().to_tokens(pair.s))
    return f"{pair.uttid}\t{' '.join(pair.z)}\t{target}\n"


def parse_pair(line: str) -> AugmentingPair:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 3:
        raise ValueError(f"augmenting corpus line needs 3 tab-separated fields: {line!r}")
    uttid, z, target = parts
    return AugmentingPair(tuple(z.split(" ")), OutputVocab.from_tokens(target.split(" ")), uttid)


def write_corpus(path: str, pairs: Iterable[AugmentingPair]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(format_pair(pair))
            n += 1
    return n


def read_corpus(path: str) -> list[AugmentingPair]:
    with open(path, encoding="utf-8") as fh:
        return [parse_pair(line) for line in fh if line.strip()]
