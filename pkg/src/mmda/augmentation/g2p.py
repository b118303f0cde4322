"""Small joint-sequence (graphone) n-gram G2P.

Training aligns every letter of a word with zero, one or two phonemes using
EM over chunk co-occurrence, then estimates an interpolated Witten-Bell
n-gram model over the resulting letter/phoneme-chunk pairs.  Decoding is a
beam search over the letter positions of a new word.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from typing import Iterable, Optional, Sequence

from ..vocab import UNK
from .lexicon import Lexicon
from .text import normalize_word

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
MAX_CHUNK = 2
# prior weights for letter->0/1/2 phonemes used to seed EM
_PRIOR = {0: 0.2, 1: 1.0, 2: 0.2}
_UNSEEN_LOGP = -20.0


def _unit(letter: str, chunk: Sequence[str]) -> str:
    return letter + "}" + " ".join(chunk)


def _split_unit(unit: str) -> tuple[str, tuple[str, ...]]:
    letter, _, chunk = unit.partition("}")
    return letter, tuple(chunk.split()) if chunk else ()


def _forward_backward(letters: str, phones: Sequence[str], prob):
    n, m = len(letters), len(phones)
    alpha = [[0.0] * (m + 1) for _ in range(n + 1)]
    alpha[0][0] = 1.0
    for i in range(n):
        for j in range(m + 1):
            a = alpha[i][j]
            if not a:
                continue
            for k in range(MAX_CHUNK + 1):
                if j + k <= m:
                    alpha[i + 1][j + k] += a * prob(letters[i], tuple(phones[j:j + k]))
    beta = [[0.0] * (m + 1) for _ in range(n + 1)]
    beta[n][m] = 1.0
    for i in range(n - 1, -1, -1):
        for j in range(m + 1):
            total = 0.0
            for k in range(MAX_CHUNK + 1):
                if j + k <= m:
                    total += prob(letters[i], tuple(phones[j:j + k])) * beta[i + 1][j + k]
            beta[i][j] = total
    return alpha, beta


def _viterbi(letters: str, phones: Sequence[str], prob) -> Optional[list[str]]:
    n, m = len(letters), len(phones)
    best = {(0, 0): (0.0, None, None)}
    for i in range(n):
        for j in range(m + 1):
            if (i, j) not in best:
                continue
            score = best[(i, j)][0]
            # k ordered 1, 0, 2 so ties prefer one-to-one
            for k in (1, 0, 2):
                if j + k > m:
                    continue
                chunk = tuple(phones[j:j + k])
                p = prob(letters[i], chunk)
                if p <= 0:
                    continue
                cand = score + math.log(p)
                key = (i + 1, j + k)
                if key not in best or cand > best[key][0] + 1e-12:
                    best[key] = (cand, (i, j), _unit(letters[i], chunk))
    if (n, m) not in best:
        return None
    units = []
    key = (n, m)
    while key != (0, 0):
        _, prev, unit = best[key]
        units.append(unit)
        key = prev
    return units[::-1]


def align_lexicon(pairs: Sequence[tuple[str, Sequence[str]]], iterations: int = 8) -> list[list[str]]:
    """EM alignment of (letters, phones) pairs into graphone sequences.

    Words that cannot be aligned (more than two phonemes per letter) are
    returned as ``None``.
    """
    counts: dict[str, float] = defaultdict(float)
    for letters, phones in pairs:
        for i, letter in enumerate(letters):
            for j in range(len(phones) + 1):
                for k in range(MAX_CHUNK + 1):
                    if j + k <= len(phones):
                        counts[_unit(letter, phones[j:j + k])] += _PRIOR[k]
    probs = _normalize(counts)
    prob = lambda letter, chunk: probs.get(_unit(letter, chunk), 0.0)  # noqa: E731
    for _ in range(iterations):
        counts = defaultdict(float)
        for letters, phones in pairs:
            alpha, beta = _forward_backward(letters, phones, prob)
            z = alpha[len(letters)][len(phones)]
            if z <= 0:
                continue
            for i, letter in enumerate(letters):
                for j in range(len(phones) + 1):
                    a = alpha[i][j]
                    if not a:
                        continue
                    for k in range(MAX_CHUNK + 1):
                        if j + k > len(phones):
                            continue
                        chunk = tuple(phones[j:j + k])
                        c = a * prob(letter, chunk) * beta[i + 1][j + k] / z
                        if c > 0:
                            counts[_unit(letter, chunk)] += c
        probs = _normalize(counts)
    return [_viterbi(letters, phones, prob) for letters, phones in pairs]


def _normalize(counts: dict[str, float]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()} if total else {}


class G2PModel:
    """Interpolated Witten-Bell joint n-gram over letter/phoneme-chunk units."""

    def __init__(self, order: int = 4):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        # context tuple -> {unit: count}
        self.counts: dict[tuple, dict[str, int]] = defaultdict(dict)
        self.candidates: dict[str, list[str]] = {}
        self.train_per: Optional[float] = None

    # -- estimation ----------------------------------------------------------

    def fit(self, sequences: Iterable[Sequence[str]]) -> "G2PModel":
        cand: dict[str, dict[str, int]] = defaultdict(dict)
        for seq in sequences:
            toks = [BOS] * (self.order - 1) + list(seq) + [EOS]
            for pos in range(self.order - 1, len(toks)):
                tok = toks[pos]
                for n in range(self.order):
                    ctx = tuple(toks[pos - n:pos]) if n else ()
                    table = self.counts[ctx]
                    table[tok] = table.get(tok, 0) + 1
                if tok != EOS:
                    letter, _ = _split_unit(tok)
                    cand[letter][tok] = cand[letter].get(tok, 0) + 1
        self.candidates = {
            letter: [u for u, _ in sorted(units.items(), key=lambda kv: (-kv[1], kv[0]))]
            for letter, units in cand.items()
        }
        self._cache: dict = {}
        return self

    def _stats(self, ctx: tuple):
        cached = self._cache.get(ctx)
        if cached is None:
            table = self.counts.get(ctx, {})
            cached = (sum(table.values()), len(table))
            self._cache[ctx] = cached
        return cached

    def prob(self, unit: str, ctx: tuple) -> float:
        if not ctx:
            total, types = self._stats(())
            return (self.counts[()].get(unit, 0) + 1.0) / (total + types + 1.0)
        lower = self.prob(unit, ctx[1:])
        total, types = self._stats(ctx)
        if total == 0:
            return lower
        return (self.counts[ctx].get(unit, 0) + types * lower) / (total + types)

    # -- decoding ------------------------------------------------------------

    def apply(self, word: str, beam: int = 64) -> list[str]:
        """Pronounce ``word``; runs of untrained letters become a single ``<unk>``."""
        word = normalize_word(word)
        if not word:
            return [UNK]
        hyps = [(0.0, (BOS,) * (self.order - 1), ())]  # (logp, history, units)
        for letter in word:
            options = self.candidates.get(letter)
            new = []
            for score, hist, units in hyps:
                if not options:
                    unit = _unit(letter, (UNK,))
                    new.append((score + _UNSEEN_LOGP, (hist + (unit,))[1:] if hist else (), units + (unit,)))
                    continue
                for unit in options:
                    p = self.prob(unit, hist)
                    new.append((score + math.log(p), (hist + (unit,))[1:] if hist else (), units + (unit,)))
            new.sort(key=lambda h: -h[0])
            hyps = new[:beam]
        if not hyps:
            return self._longest_match(word)
        best = max(hyps, key=lambda h: h[0] + math.log(self.prob(EOS, h[1])))
        phones: list[str] = []
        for unit in best[2]:
            _, chunk = _split_unit(unit)
            for p in chunk:
                if p == UNK and phones and phones[-1] == UNK:
                    continue
                phones.append(p)
        return phones or [UNK]

    def _longest_match(self, word: str) -> list[str]:
        """Deterministic fallback: each letter takes its most frequent chunk."""
        phones = []
        for letter in word:
            opts = self.candidates.get(letter)
            chunk = _split_unit(opts[0])[1] if opts else (UNK,)
            phones.extend(chunk)
        return phones or [UNK]

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "order": self.order,
            "counts": [[list(ctx), table] for ctx, table in sorted(self.counts.items())],
            "train_per": self.train_per,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "G2PModel":
        data = json.loads(text)
        model = cls(data["order"])
        for ctx, table in data["counts"]:
            model.counts[tuple(ctx)] = dict(table)
        cand: dict[str, dict[str, int]] = defaultdict(dict)
        for unit, c in model.counts.get((), {}).items():
            if unit != EOS:
                cand[_split_unit(unit)[0]][unit] = c
        model.candidates = {
            letter: [u for u, _ in sorted(units.items(), key=lambda kv: (-kv[1], kv[0]))]
            for letter, units in cand.items()
        }
        model._cache = {}
        model.train_per = data.get("train_per")
        return model

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "G2PModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def phoneme_error_rate(model: G2PModel, pairs: Sequence[tuple[str, Sequence[str]]]) -> float:
    from ..evaluation import edit_distance
    errors = 0
    total = 0
    for word, phones in pairs:
        errors += edit_distance(list(phones), model.apply(word)).distance
        total += len(phones)
    return errors / max(total, 1)


def g2p_train(lex: Lexicon, order: int = 4, iterations: int = 8, per_sample: int = 500) -> G2PModel:
    """Train a joint n-gram G2P on ``lex`` and record its held-in phoneme error rate."""
    pairs = [(word, list(pron)) for word, pron in lex.items()]
    if not pairs:
        raise ValueError("cannot train G2P on an empty lexicon")
    aligned = align_lexicon(pairs, iterations)
    skipped = sum(a is None for a in aligned)
    if skipped:
        log.warning("g2p: %d of %d words could not be aligned", skipped, len(pairs))
    model = G2PModel(order).fit([a for a in aligned if a is not None])
    model.train_per = phoneme_error_rate(model, pairs[:per_sample])
    log.info("g2p: held-in phoneme error rate %.4f over %d words", model.train_per,
             min(per_sample, len(pairs)))
    return model


def g2p_apply(model: G2PModel, word: str) -> list[str]:
    return model.apply(word)
