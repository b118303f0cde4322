"""Levenshtein alignment, CER/WER scoring and the nonsense/legal word-error split."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


class Op(NamedTuple):
    kind: str
    ref: Optional[object] = None
    hyp: Optional[object] = None


@dataclass
class Alignment:
    ops: list

    @property
    def distance(self) -> int:
        return sum(op.kind != MATCH for op in self.ops)

    def count(self, kind: str) -> int:
        return sum(op.kind == kind for op in self.ops)

    def replay(self, ref: Sequence) -> list:
        """Apply the edit script to ``ref``; yields the hypothesis."""
        out = []
        it = iter(ref)
        for op in self.ops:
            if op.kind == INS:
                out.append(op.hyp)
                continue
            item = next(it)
            if op.kind == MATCH:
                out.append(item)
            elif op.kind == SUB:
                out.append(op.hyp)
        return out


def edit_distance(ref: Sequence, hyp: Sequence) -> Alignment:
    """Unit-cost Levenshtein alignment.

    Among optimal alignments the backtrace prefers match, then substitution,
    then deletion, then insertion at each cell, which makes the result
    deterministic.
    """
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    d = [prev]
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row = [i]
        left = i
        for j in range(1, m + 1):
            left = min(prev[j - 1] + (ri != hyp[j - 1]), prev[j] + 1, left + 1)
            row.append(left)
        d.append(row)
        prev = row
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = ref[i - 1] == hyp[j - 1]
            if same and d[i][j] == d[i - 1][j - 1]:
                ops.append(Op(MATCH, ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
            if not same and d[i][j] == d[i - 1][j - 1] + 1:
                ops.append(Op(SUB, ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(Op(DEL, ref[i - 1], None))
            i -= 1
        else:
            ops.append(Op(INS, None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return Alignment(ops)


def tokenize(text: str, unit: str) -> list[str]:
    if unit == "word":
        return text.split()
    if unit == "char":
        return list(" ".join(text.split()))
    raise ValueError(f"unit must be 'char' or 'word', got {unit!r}")


def classify_word_errors(alignment: Alignment, lexicon: Iterable[str]) -> tuple[int, int]:
    """(nonsense, legal) counts over substitutions and insertions; deletions are excluded."""
    words = lexicon if isinstance(lexicon, (set, frozenset)) else set(lexicon)
    nonsense = legal = 0
    for op in alignment.ops:
        if op.kind in (SUB, INS):
            if op.hyp in words:
                legal += 1
            else:
                nonsense += 1
    return nonsense, legal


@dataclass
class ErrorReport:
    unit: str
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_tokens: int = 0
    nonsense: int = 0
    legal: int = 0
    utterances: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def error_rate(self) -> float:
        """Percentage ``100 * (S + D + I) / N``."""
        if self.ref_tokens == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return 100.0 * self.errors / self.ref_tokens

    @property
    def nonsense_pct(self) -> Optional[float]:
        total = self.nonsense + self.legal
        return None if total == 0 else 100.0 * self.nonsense / total

    @property
    def legal_pct(self) -> Optional[float]:
        total = self.nonsense + self.legal
        return None if total == 0 else 100.0 * self.legal / total

    def merge(self, other: "ErrorReport") -> "ErrorReport":
        if other.unit != self.unit:
            raise ValueError("cannot merge reports of different units")
        return ErrorReport(self.unit, self.substitutions + other.substitutions,
                           self.deletions + other.deletions, self.insertions + other.insertions,
                           self.ref_tokens + other.ref_tokens, self.nonsense + other.nonsense,
                           self.legal + other.legal, self.utterances + other.utterances)


def score_corpus(refs: Mapping[str, str], hyps: Mapping[str, str], unit: str = "word",
                 lexicon: Optional[Iterable[str]] = None) -> ErrorReport:
    """Micro-averaged error counts over utterances keyed by id.

    With ``lexicon`` (word unit only) substitutions/insertions are also split
    into nonsense and legal errors.
    """
    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing or extra:
        raise KeyError(f"utterance id mismatch: missing hypotheses {missing[:10]}, "
                       f"unknown hypotheses {extra[:10]}")
    words = set(lexicon) if lexicon is not None else None
    report = ErrorReport(unit)
    for uttid in sorted(refs):
        ref = tokenize(refs[uttid], unit)
        ali = edit_distance(ref, tokenize(hyps[uttid], unit))
        report.substitutions += ali.count(SUB)
        report.deletions += ali.count(DEL)
        report.insertions += ali.count(INS)
        report.ref_tokens += len(ref)
        report.utterances += 1
        if words is not None and unit == "word":
            ns, lg = classify_word_errors(ali, words)
            report.nonsense += ns
            report.legal += lg
    return report


@dataclass
class ResultRow:
    """Per-system row: CER/WER per evaluation set plus the nonsense/legal split."""

    augmentation: str
    cer: dict = field(default_factory=dict)  # set name -> ErrorReport
    wer: dict = field(default_factory=dict)

    def pooled(self, kind: str) -> ErrorReport:
        reports = list((self.cer if kind == "char" else self.wer).values())
        out = reports[0]
        for r in reports[1:]:
            out = out.merge(r)
        return out

    def record(self) -> dict:
        rec = {"augmentation": self.augmentation}
        for name, rep in self.cer.items():
            rec[f"CER_{name}"] = round(rep.error_rate, 4)
        for name, rep in self.wer.items():
            rec[f"WER_{name}"] = round(rep.error_rate, 4)
        if self.wer:
            pooled = self.pooled("word")
            if len(self.wer) > 1:
                rec["CER_pooled"] = round(self.pooled("char").error_rate, 4)
                rec["WER_pooled"] = round(pooled.error_rate, 4)
            ns, lg = pooled.nonsense_pct, pooled.legal_pct
            rec["nonsense_pct"] = None if ns is None else round(ns, 2)
            rec["legal_pct"] = None if lg is None else round(lg, 2)
        return rec

    def table(self) -> str:
        rec = self.record()
        width = max(len(k) for k in rec)
        lines = []
        for k, v in rec.items():
            shown = "n/a" if v is None else (f"{v:.2f}" if isinstance(v, float) else str(v))
            lines.append(f"{k:<{width}}  {shown}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.record(), sort_keys=True)
