"""Toy task generator used by the tests and the ``make-toy`` command.

This is a test fixture, not a recognition method: a 200-word artificial
grammar, a lexicon with a fixed letter-to-phoneme map, TIMIT-like duration
statistics, and pseudo-acoustic features built from per-phoneme Gaussian
templates plus noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .augmentation.durations import DurationModel, strip_stress
from .augmentation.lexicon import Lexicon

# Mean and std of phone durations in 10 ms frames, roughly in line with
# hand-labelled read speech: vowels long, stops short.
_CLASS_STATS = {
    "vowel": (11.0, 4.0),
    "diphthong": (14.0, 4.5),
    "stop": (5.0, 2.0),
    "affricate": (8.0, 2.5),
    "fricative": (9.0, 3.0),
    "nasal": (6.5, 2.5),
    "liquid": (6.5, 2.5),
    "glide": (6.0, 2.0),
}
PHONE_CLASSES = {
    "AA": "vowel", "AE": "vowel", "AH": "vowel", "AO": "vowel", "EH": "vowel", "ER": "vowel",
    "IH": "vowel", "IY": "vowel", "UH": "vowel", "UW": "vowel",
    "AW": "diphthong", "AY": "diphthong", "EY": "diphthong", "OW": "diphthong", "OY": "diphthong",
    "B": "stop", "D": "stop", "G": "stop", "K": "stop", "P": "stop", "T": "stop",
    "CH": "affricate", "JH": "affricate",
    "DH": "fricative", "F": "fricative", "HH": "fricative", "S": "fricative", "SH": "fricative",
    "TH": "fricative", "V": "fricative", "Z": "fricative", "ZH": "fricative",
    "M": "nasal", "N": "nasal", "NG": "nasal",
    "L": "liquid", "R": "liquid",
    "W": "glide", "Y": "glide",
}


def timit_like_durations() -> DurationModel:
    """Duration statistics for every (stressless) ARPAbet phoneme, plus ``<unk>``."""
    return DurationModel({p: _CLASS_STATS[c] for p, c in PHONE_CLASSES.items()}).with_default()


def is_vowel(phone: str) -> bool:
    return PHONE_CLASSES.get(strip_stress(phone)) in ("vowel", "diphthong")


LETTER_TO_PHONE = {
    "A": "AE1", "E": "EH1", "I": "IH1", "O": "AA1", "U": "AH1",
    "B": "B", "D": "D", "G": "G", "K": "K", "P": "P", "T": "T",
    "F": "F", "S": "S", "M": "M", "N": "N", "L": "L", "R": "R",
}
VOWEL_LETTERS = "AEIOU"
CONSONANT_LETTERS = "BDGKPTFSMNLR"


@dataclass
class ToyGrammar:
    """Sentences ``DET ADJ? NOUN VERB (DET NOUN)?`` over 200 invented words."""

    determiners: list
    adjectives: list
    nouns: list
    verbs: list

    @classmethod
    def build(cls, seed: int = 0, n_words: int = 200) -> "ToyGrammar":
        rng = np.random.default_rng(seed)
        words: list[str] = []
        seen = set()
        while len(words) < n_words:
            syllables = int(rng.integers(1, 3))
            w = "".join(rng.choice(list(CONSONANT_LETTERS)) + rng.choice(list(VOWEL_LETTERS))
                        for _ in range(syllables))
            if rng.random() < 0.5:
                w += rng.choice(list(CONSONANT_LETTERS))
            if w not in seen:
                seen.add(w)
                words.append(w)
        n_det = 6
        n_adj = (n_words - n_det) // 4
        n_noun = (n_words - n_det - n_adj) // 2
        return cls(words[:n_det], words[n_det:n_det + n_adj],
                   words[n_det + n_adj:n_det + n_adj + n_noun], words[n_det + n_adj + n_noun:])

    @property
    def words(self) -> list[str]:
        return self.determiners + self.adjectives + self.nouns + self.verbs

    def sentence(self, rng: np.random.Generator) -> str:
        out = [rng.choice(self.determiners)]
        if rng.random() < 0.3:
            out.append(rng.choice(self.adjectives))
        out += [rng.choice(self.nouns), rng.choice(self.verbs)]
        if rng.random() < 0.3:
            out += [rng.choice(self.determiners), rng.choice(self.nouns)]
        return " ".join(str(w) for w in out)

    def sentences(self, n: int, seed: int) -> list[str]:
        rng = np.random.default_rng(seed)
        return [self.sentence(rng) for _ in range(n)]

    def lexicon(self) -> Lexicon:
        lex = Lexicon()
        for w in self.words:
            lex.add(w, [LETTER_TO_PHONE[ch] for ch in w])
        return lex


class FeatureSynthesizer:
    """Pseudo-acoustic frames: template[phone] + N(0, noise^2) for a sampled number of frames.

    Each phoneme gets a fixed random template vector; its duration is drawn
    from the duration model (truncated at 1 frame and scaled by
    ``frame_scale``).
    """

    def __init__(self, phones: Sequence[str], dim: int, durations: DurationModel,
                 noise: float = 0.3, frame_scale: float = 1.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.templates = {p: rng.normal(0.0, 1.0, dim).astype(np.float32) for p in sorted(set(phones))}
        self.dim = dim
        self.durations = durations
        self.noise = noise
        self.frame_scale = frame_scale

    def frames(self, phones: Sequence[str], rng: np.random.Generator, min_frames: int = 4) -> np.ndarray:
        chunks = []
        for p in phones:
            mu, sigma = self.durations.lookup(p)
            f = max(1.0, rng.normal(mu, sigma) if sigma > 0 else mu)
            n = max(1, int(round(f * self.frame_scale)))
            chunks.append(np.repeat(self.templates[p][None, :], n, axis=0))
        x = np.concatenate(chunks, axis=0)
        if len(x) < min_frames:
            x = np.concatenate([x, np.repeat(x[-1:], min_frames - len(x), axis=0)])
        return (x + rng.normal(0.0, self.noise, x.shape)).astype(np.float32)


@dataclass
class ToyTask:
    grammar: ToyGrammar
    lexicon: Lexicon
    durations: DurationModel
    synthesizer: FeatureSynthesizer

    @classmethod
    def build(cls, dim: int = 16, seed: int = 0, noise: float = 0.3,
              frame_scale: float = 1.0) -> "ToyTask":
        grammar = ToyGrammar.build(seed)
        lex = grammar.lexicon()
        dm = timit_like_durations()
        synth = FeatureSynthesizer(lex.inventory[1:], dim, dm, noise, frame_scale, seed)
        return cls(grammar, lex, dm, synth)

    def utterances(self, n: int, seed: int, prefix: str = "utt",
                   sentences: Optional[Sequence[str]] = None) -> tuple[dict, dict]:
        """``({uttid: features}, {uttid: text})`` for ``n`` grammar sentences."""
        rng = np.random.default_rng(seed)
        texts = list(sentences) if sentences is not None else self.grammar.sentences(n, seed + 7919)
        feats, trans = {}, {}
        for i, text in enumerate(texts):
            phones = [p for w in text.split() for p in self.lexicon.lookup(w)]
            uttid = f"{prefix}{i:05d}"
            feats[uttid] = self.synthesizer.frames(phones, rng)
            trans[uttid] = text
        return feats, trans
