"""Per-phoneme Gaussian duration model and phoneme repetition."""

from __future__ import annotations

import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from ..vocab import UNK

log = logging.getLogger(__name__)

_STRESS = re.compile(r"\d+$")


def strip_stress(phone: str) -> str:
    return _STRESS.sub("", phone) or phone


@dataclass
class DurationModel:
    """``phoneme -> (mean, std)`` in frames; the ``<unk>`` row doubles as the default."""

    stats: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for p, (mu, sigma) in self.stats.items():
            if not mu > 0 or sigma < 0:
                raise ValueError(f"invalid duration stats for {p}: mu={mu}, sigma={sigma}")

    def __contains__(self, phone: str) -> bool:
        return phone in self.stats

    def lookup(self, phone: str) -> tuple[float, float]:
        """Exact match, then with stress digits stripped, then the ``<unk>`` row."""
        if phone in self.stats:
            return self.stats[phone]
        base = strip_stress(phone)
        if base in self.stats:
            return self.stats[base]
        if UNK in self.stats:
            return self.stats[UNK]
        raise KeyError(f"no duration statistics for phoneme {phone!r} and no default row")

    def with_default(self) -> "DurationModel":
        """Copy with an ``<unk>`` row set to the mean of all phoneme means and stds."""
        rows = {p: v for p, v in self.stats.items() if p != UNK}
        if not rows:
            return DurationModel(dict(self.stats))
        mu = float(np.mean([v[0] for v in rows.values()]))
        sigma = float(np.mean([v[1] for v in rows.values()]))
        return DurationModel({**rows, UNK: (mu, sigma)})

    @classmethod
    def read(cls, path: str) -> "DurationModel":
        stats = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected PHONEME MU SIGMA")
                stats[parts[0]] = (float(parts[1]), float(parts[2]))
        return cls(stats)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for p in sorted(self.stats):
                mu, sigma = self.stats[p]
                fh.write(f"{p} {mu!r} {sigma!r}\n")


def estimate_durations(observations: Iterable[tuple[str, float]]) -> DurationModel:
    """Sample mean and unbiased sample std of frame counts per phoneme.

    Phonemes seen once get ``sigma = 0`` with a warning.  An ``<unk>`` row
    holding the mean of the per-phoneme statistics is added.
    """
    frames: dict[str, list[float]] = defaultdict(list)
    for phone, count in observations:
        frames[phone].append(float(count))
    if not frames:
        raise ValueError("no duration observations")
    stats = {}
    for phone, values in frames.items():
        arr = np.asarray(values)
        if len(arr) < 2:
            log.warning("phoneme %s has a single observation; sigma set to 0", phone)
            sigma = 0.0
        else:
            sigma = float(arr.std(ddof=1))
        stats[phone] = (float(arr.mean()), sigma)
    return DurationModel(stats).with_default()


def map_durations(dm: DurationModel, mapping: Mapping[str, str]) -> DurationModel:
    """Model whose row for each target phoneme is the row of its mapped source phoneme."""
    stats = {}
    for target, source in mapping.items():
        try:
            stats[target] = dm.lookup(source)
        except KeyError:
            raise KeyError(f"mapping {target} -> {source}: source phoneme has no statistics") from None
    if UNK in dm.stats and UNK not in stats:
        stats[UNK] = dm.stats[UNK]
    return DurationModel(stats)


def read_mapping(path: str) -> dict[str, str]:
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected TARGET<TAB>SOURCE")
            mapping[parts[0]] = parts[1]
    return mapping


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def repeat_count(frames: float, downsampling: int = 4, rounding: str = "quotient") -> int:
    """``max(1, round(frames / downsampling))``; ``round_then_divide`` uses ``round(frames) // d``."""
    if rounding == "quotient":
        return max(1, round_half_away(frames / downsampling))
    if rounding == "round_then_divide":
        return max(1, round_half_away(frames) // downsampling)
    raise ValueError(f"unknown rounding {rounding!r}")


def gen_repphonestream(phones: Sequence[str], dm: DurationModel, rng: np.random.Generator,
                       downsampling: int = 4, rounding: str = "quotient") -> list[str]:
    """Repeat each phoneme by a duration sampled from its Gaussian (truncated at 1 frame)."""
    if not phones:
        raise ValueError("empty phoneme sequence")
    out: list[str] = []
    for p in phones:
        mu, sigma = dm.lookup(p)
        f = rng.normal(mu, sigma) if sigma > 0 else mu
        f = max(f, 1.0)
        out.extend([p] * repeat_count(f, downsampling, rounding))
    return out
