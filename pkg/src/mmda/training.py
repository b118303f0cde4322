"""Multi-task trainer alternating acoustic and augmenting batches.

The model owns four disjoint parameter partitions.  An acoustic step
updates ``enc``, ``att`` and ``dec``; an augmenting step updates ``aug``,
``att`` and ``dec``.  The attention and decoder objects are the same Python
objects on both paths, so sharing is by identity rather than by copying.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .attention_decoder import (Attention, Decoder, RnnLm, forward_teacher_forced, run_decoder,
                                teacher_forcing_arrays)
from .config import ModelConfig, TrainConfig
from .encoders import AcousticEncoder, AugmentingEncoder, pad_batch
from .nn import Adadelta, Module, NonFiniteError, Parameter, Tape, ops, resolve_dtype
from .nn.tensor import Tensor
from .vocab import OutputVocab, SymbolVocab

log = logging.getLogger(__name__)

PARTITIONS = ("enc", "aug", "att", "dec")
ACOUSTIC_PARTS = ("enc", "att", "dec")
AUGMENTING_PARTS = ("aug", "att", "dec")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class AcousticExample:
    uttid: str
    features: np.ndarray
    target: list  # output-vocab ids, no eos


@dataclass
class AugmentingExample:
    uttid: str
    tokens: list  # symbol-vocab ids
    target: list


class MmdaModel(Module):
    """Acoustic encoder, augmenting encoder, one shared attention and one shared decoder."""

    def __init__(self, cfg: ModelConfig, output_vocab: OutputVocab,
                 symbol_vocab: Optional[SymbolVocab] = None, precision=32):
        self.config = cfg
        self.output_vocab = output_vocab
        self.symbol_vocab = symbol_vocab or SymbolVocab([])
        rng = np.random.default_rng(cfg.seed)
        from .nn.tensor import precision as _precision
        with _precision(precision):
            self.acoustic_encoder = AcousticEncoder(cfg, rng)
            self.augmenting_encoder = AugmentingEncoder(cfg, len(self.symbol_vocab), rng)
            self.attention = Attention(cfg, rng)
            self.decoder = Decoder(cfg, len(output_vocab), rng)
        if cfg.init_scale != 0.1:
            for p in self.parameters():
                p.data *= p.data.dtype.type(cfg.init_scale / 0.1)

    @property
    def dtype(self):
        return self.decoder.output.weight.dtype

    def to(self, precision) -> "MmdaModel":
        for p in self.parameters():
            p.astype(resolve_dtype(precision))
        return self

    def partition(self, name: str) -> list[Parameter]:
        return [p for p in self.parameters() if p.partition == name]

    def partitions(self) -> dict[str, list[Parameter]]:
        return {name: self.partition(name) for name in PARTITIONS}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- forward paths -------------------------------------------------------

    def encode_acoustic(self, features: Sequence[np.ndarray]):
        x, lengths = pad_batch(features, dtype=self.dtype)
        return self.acoustic_encoder(Tensor(x), lengths)

    def encode_augmenting(self, tokens: Sequence[Sequence[int]]):
        ids, lengths = pad_batch([np.asarray(t, dtype=np.int64) for t in tokens])
        return self.augmenting_encoder(ids, lengths)

    def encode(self, batch) -> tuple[Tensor, np.ndarray]:
        if isinstance(batch[0], AcousticExample):
            return self.encode_acoustic([ex.features for ex in batch])
        return self.encode_augmenting([ex.tokens for ex in batch])

    def loss(self, batch) -> Tensor:
        """Mean per-token negative log-likelihood of a homogeneous batch."""
        enc, lengths = self.encode(batch)
        v = self.output_vocab
        return forward_teacher_forced(self.attention, self.decoder, enc, lengths,
                                      [ex.target for ex in batch], v.sos, v.eos)

    def logits(self, batch):
        enc, lengths = self.encode(batch)
        v = self.output_vocab
        inputs, outputs, weights = teacher_forcing_arrays([ex.target for ex in batch], v.sos, v.eos)
        return run_decoder(self.attention, self.decoder, enc, lengths, inputs), outputs, weights


# --------------------------------------------------------------------- steps

def _snapshot(params: Iterable[Parameter]) -> list[bytes]:
    return [p.data.tobytes() for p in params]


class PartitionViolation(AssertionError):
    pass


def _train_step(model: MmdaModel, batch, parts: Sequence[str], optimizer: Adadelta,
                check_partitions: bool) -> float:
    frozen = [p for name in PARTITIONS if name not in parts for p in model.partition(name)]
    before = _snapshot(frozen) if check_partitions else None
    model.zero_grad()
    with Tape() as tape:
        loss = model.loss(batch)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"non-finite loss {value} on batch {[ex.uttid for ex in batch][:4]}")
    try:
        tape.backward(loss)
    except NonFiniteError as exc:
        raise TrainingDivergedError(str(exc)) from exc
    optimizer.step([p for name in parts for p in model.partition(name)])
    if check_partitions and _snapshot(frozen) != before:
        raise PartitionViolation(f"a step on {parts} modified a frozen partition")
    return value


def train_step_acoustic(model: MmdaModel, batch: Sequence[AcousticExample],
                        optimizer: Optional[Adadelta] = None, check_partitions: bool = False) -> float:
    """Primary-objective step: updates the acoustic encoder, attention and decoder."""
    return _train_step(model, batch, ACOUSTIC_PARTS, optimizer or Adadelta(), check_partitions)


def train_step_augmenting(model: MmdaModel, batch: Sequence[AugmentingExample],
                          optimizer: Optional[Adadelta] = None, check_partitions: bool = False) -> float:
    """Secondary-objective step: updates the augmenting encoder, attention and decoder."""
    return _train_step(model, batch, AUGMENTING_PARTS, optimizer or Adadelta(), check_partitions)


# ---------------------------------------------------------------- validation

def validation_accuracy(model: MmdaModel, dev: Sequence[AcousticExample], batch_size: int = 16) -> float:
    """Teacher-forced next-token accuracy over every dev target token (eos included)."""
    if not dev:
        raise ValueError("empty dev set")
    correct = 0
    total = 0
    for start in range(0, len(dev), batch_size):
        batch = list(dev[start:start + batch_size])
        logits, outputs, weights = model.logits(batch)
        pred = logits.data.argmax(axis=-1)
        valid = weights > 0
        correct += int(((pred == outputs) & valid).sum())
        total += int(valid.sum())
    return correct / total


# ------------------------------------------------------------------ schedule

def length_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Bucket indices by length into batches, then shuffle the batch order."""
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


class AugmentingCursor:
    """Persistent shuffled pass over the augmenting set, reshuffled when exhausted."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.order: list[int] = []
        self.pos = 0
        self._rng = rng

    def take(self, k: int) -> list[int]:
        out = []
        while len(out) < k and self.n:
            if self.pos >= len(self.order):
                self.order = [int(i) for i in self._rng.permutation(self.n)]
                self.pos = 0
            out.append(self.order[self.pos])
            self.pos += 1
        return out

    def state(self) -> dict:
        return {"order": self.order, "pos": self.pos}

    def load_state(self, state: dict) -> None:
        self.order = list(state["order"])
        self.pos = int(state["pos"])


def epoch_schedule(n_acoustic_batches: int, ratio: int, have_augmenting: bool) -> list[str]:
    """``['acoustic', 'augmenting', 'acoustic', ...]`` with ``ratio`` augmenting batches per acoustic one."""
    plan = []
    for _ in range(n_acoustic_batches):
        plan.append("acoustic")
        if have_augmenting:
            plan.extend(["augmenting"] * ratio)
    return plan


@dataclass
class EpochLog:
    epoch: int
    loss_acoustic: float
    loss_augmenting: float
    dev_accuracy: float

    def line(self) -> str:
        aug = "nan" if math.isnan(self.loss_augmenting) else f"{self.loss_augmenting:.6f}"
        return f"{self.epoch}\t{self.loss_acoustic:.6f}\t{aug}\t{self.dev_accuracy:.6f}"


@dataclass
class Checkpoint:
    """Immutable snapshot of the trainer after an epoch."""

    epoch: int
    dev_accuracy: float
    model: MmdaModel
    rng_state: dict = field(default_factory=dict)
    cursor_state: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


def snapshot(model: MmdaModel, epoch: int, acc: float, rng, cursor, history) -> Checkpoint:
    return Checkpoint(epoch, acc, copy.deepcopy(model), copy.deepcopy(rng.bit_generator.state),
                      cursor.state() if cursor else {}, list(history))


class Trainer:
    """Runs epochs of alternating batches and keeps the best-by-dev-accuracy checkpoint.

    ``on_epoch`` is called with each epoch's :class:`Checkpoint` (the CLI uses
    it to write files); ``resume`` continues from a saved checkpoint so the
    remaining trajectory is identical to an uninterrupted run.
    """

    def __init__(self, model: MmdaModel, cfg: TrainConfig,
                 on_epoch: Optional[Callable[[Checkpoint, EpochLog], None]] = None):
        self.model = model
        self.cfg = cfg
        self.optimizer = Adadelta(rho=cfg.rho, eps=cfg.eps, clip_norm=cfg.clip_norm)
        self.rng = np.random.default_rng(cfg.seed)
        self.cursor: Optional[AugmentingCursor] = None
        self.history: list[EpochLog] = []
        self.start_epoch = 1
        self.on_epoch = on_epoch
        self.step_losses: list[tuple[str, float]] = []

    def resume(self, ckpt: Checkpoint, best: Optional[Checkpoint] = None) -> None:
        """Continue after ``ckpt``; ``best`` is the best checkpoint so far (defaults to ``ckpt``)."""
        self.model = copy.deepcopy(ckpt.model)
        self.rng.bit_generator.state = copy.deepcopy(ckpt.rng_state)
        self._cursor_state = ckpt.cursor_state
        self.history = list(ckpt.history)
        self.start_epoch = ckpt.epoch + 1
        self.best = best or ckpt

    best: Optional[Checkpoint] = None
    _cursor_state: Optional[dict] = None

    def run(self, train: Sequence[AcousticExample], augmenting: Sequence[AugmentingExample],
            dev: Sequence[AcousticExample]) -> Checkpoint:
        if not train:
            raise ValueError("acoustic training set is empty")
        cfg = self.cfg
        use_aug = bool(augmenting) and cfg.aug_ratio > 0
        self.cursor = AugmentingCursor(len(augmenting), self.rng) if use_aug else None
        if self.cursor is not None and self._cursor_state:
            self.cursor.load_state(self._cursor_state)
        best = self.best
        lengths = [len(ex.features) for ex in train]
        for epoch in range(self.start_epoch, cfg.epochs + 1):
            batches = length_batches(lengths, cfg.batch_size, self.rng)
            acoustic_losses, aug_losses = [], []
            queue = iter(batches)
            for kind in epoch_schedule(len(batches), cfg.aug_ratio, use_aug):
                if kind == "acoustic":
                    batch = [train[i] for i in next(queue)]
                    value = train_step_acoustic(self.model, batch, self.optimizer, cfg.check_partitions)
                    acoustic_losses.append(value)
                else:
                    batch = [augmenting[i] for i in self.cursor.take(cfg.aug_batch_size)]
                    value = train_step_augmenting(self.model, batch, self.optimizer, cfg.check_partitions)
                    aug_losses.append(value)
                self.step_losses.append((kind, value))
            acc = validation_accuracy(self.model, dev)
            entry = EpochLog(epoch, float(np.mean(acoustic_losses)),
                             float(np.mean(aug_losses)) if aug_losses else float("nan"), acc)
            self.history.append(entry)
            log.info("epoch %s", entry.line())
            ckpt = snapshot(self.model, epoch, acc, self.rng, self.cursor, self.history)
            if self.on_epoch is not None:
                self.on_epoch(ckpt, entry)
            if best is None or acc > best.dev_accuracy:
                best = ckpt
        self.best = best
        return best


def train(model: MmdaModel, acoustic: Sequence[AcousticExample],
          augmenting: Sequence[AugmentingExample], cfg: TrainConfig,
          dev: Optional[Sequence[AcousticExample]] = None) -> Checkpoint:
    """Train for ``cfg.epochs`` and return the checkpoint with the best dev accuracy.

    Ties go to the earlier epoch.  An empty augmenting set gives the
    acoustic-only baseline.
    """
    if not acoustic:
        raise ValueError("acoustic training set is empty")
    return Trainer(model, cfg).run(acoustic, augmenting, dev if dev else acoustic)


# -------------------------------------------------------------- language model

def train_lm(lm: RnnLm, sentences: Sequence[Sequence[int]], epochs: int = 10, batch_size: int = 16,
             seed: int = 1, sos: int = 0, eos: int = 1, rho: float = 0.95, eps: float = 1e-6,
             clip_norm: Optional[float] = 5.0) -> list[float]:
    """Fit the RNNLM on id sequences with Adadelta; returns mean loss per epoch."""
    rng = np.random.default_rng(seed)
    opt = Adadelta(rho=rho, eps=eps, clip_norm=clip_norm)
    params = lm.parameters()
    history = []
    for _ in range(epochs):
        batches = length_batches([len(s) for s in sentences], batch_size, rng)
        losses = []
        for idx in batches:
            inputs, outputs, weights = teacher_forcing_arrays([sentences[i] for i in idx], sos, eos)
            for p in params:
                p.zero_grad()
            with Tape() as tape:
                loss = lm.sequence_loss(inputs, outputs, weights)
            tape.backward(loss)
            opt.step(params)
            losses.append(float(loss.data))
        history.append(float(np.mean(losses)))
    return history
