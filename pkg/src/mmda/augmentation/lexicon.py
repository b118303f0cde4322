"""Pronunciation lexicon (CMUdict-style) loading and lookup."""

from __future__ import annotations

import re
from typing import Iterable, Mapping, Optional, Sequence

from ..vocab import UNK
from .text import normalize_word

_VARIANT = re.compile(r"\(\d+\)$")


class Lexicon:
    """Word -> pronunciations; the first pronunciation listed for a word wins."""

    def __init__(self, entries: Optional[Mapping[str, Sequence[Sequence[str]]]] = None):
        self.entries: dict[str, list[tuple[str, ...]]] = {}
        for word, prons in (entries or {}).items():
            for pron in prons:
                self.add(word, pron)

    def add(self, word: str, phones: Sequence[str]) -> None:
        word = normalize_word(_VARIANT.sub("", word))
        if not word or not phones:
            return
        self.entries.setdefault(word, []).append(tuple(phones))

    def __contains__(self, word: str) -> bool:
        return normalize_word(word) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def lookup(self, word: str) -> Optional[tuple[str, ...]]:
        prons = self.entries.get(normalize_word(word))
        return prons[0] if prons else None

    def items(self) -> Iterable[tuple[str, tuple[str, ...]]]:
        for word, prons in self.entries.items():
            yield word, prons[0]

    @property
    def inventory(self) -> list[str]:
        """All phonemes in the lexicon, sorted, plus the reserved ``<unk>``."""
        phones = {p for prons in self.entries.values() for pron in prons for p in pron}
        phones.discard(UNK)
        return [UNK] + sorted(phones)

    @classmethod
    def read(cls, path: str) -> "Lexicon":
        lex = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith(";;;"):
                    continue
                if "\t" in line:
                    word, pron = line.split("\t", 1)
                else:
                    # CMUdict separates with two spaces; accept any whitespace
                    parts = line.split(None, 1)
                    if len(parts) != 2:
                        raise ValueError(f"{path}:{lineno}: expected WORD<TAB>PHONES")
                    word, pron = parts
                lex.add(word, pron.split())
        return lex

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, prons in self.entries.items():
                for pron in prons:
                    fh.write(f"{word}\t{' '.join(pron)}\n")
