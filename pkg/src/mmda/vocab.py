"""Symbol inventories for decoder outputs and augmenting inputs."""

from __future__ import annotations

from typing import Iterable, Sequence

SOS = "<sos>"
EOS = "<eos>"
UNK = "<unk>"
SPACE = "<space>"

DEFAULT_CHARACTERS = tuple("ABCDEFGHIJKLMNOPQRSTUVWXYZ'")


class OutputVocab:
    """Character vocabulary of the decoder.

    Ids 0-3 are reserved for ``<sos>``, ``<eos>``, ``<unk>`` and the word
    boundary ``<space>``; characters follow in the given order.
    """

    RESERVED = (SOS, EOS, UNK, SPACE)

    def __init__(self, characters: Iterable[str] = DEFAULT_CHARACTERS):
        chars = []
        for ch in characters:
            if ch in self.RESERVED or ch == " ":
                continue
            if len(ch) != 1:
                raise ValueError(f"output symbols must be single characters, got {ch!r}")
            if ch not in chars:
                chars.append(ch)
        self.symbols: list[str] = list(self.RESERVED) + chars
        self._index = {s: i for i, s in enumerate(self.symbols)}
        self._index[" "] = self._index[SPACE]

    sos = property(lambda self: 0)
    eos = property(lambda self: 1)
    unk = property(lambda self: 2)
    space = property(lambda self: 3)

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, OutputVocab) and self.symbols == other.symbols

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "OutputVocab":
        seen = sorted({ch for t in texts for ch in t if ch != " "})
        return cls(seen)

    def encode(self, text: str, add_eos: bool = False) -> list[int]:
        ids = [self._index.get(ch, self.unk) for ch in text]
        if add_eos:
            ids.append(self.eos)
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == self.eos:
                break
            if i == self.sos:
                continue
            out.append(" " if i == self.space else self.symbols[i])
        return "".join(out)

    def to_tokens(self, text: str) -> list[str]:
        """Space-separated file representation with ``<space>`` for word boundaries."""
        return [SPACE if ch == " " else ch for ch in text]

    @staticmethod
    def from_tokens(tokens: Sequence[str]) -> str:
        return "".join(" " if t == SPACE else t for t in tokens)


class SymbolVocab:
    """Inventory ``Z`` of augmenting-input symbols; ``<unk>`` is always id 0."""

    def __init__(self, symbols: Iterable[str]):
        self.symbols: list[str] = [UNK]
        for s in symbols:
            if s not in self.symbols:
                self.symbols.append(s)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    unk = property(lambda self: 0)

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolVocab) and self.symbols == other.symbols

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def encode(self, symbols: Sequence[str]) -> list[int]:
        return [self._index.get(s, 0) for s in symbols]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.symbols[int(i)] for i in ids]
