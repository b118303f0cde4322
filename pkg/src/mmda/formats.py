"""On-disk formats: feature archives, transcripts and model checkpoints.

Feature archive (little-endian)::

    b"MMDA" | u32 version
    repeated: u32 len | uttid utf-8 | u32 rows | u32 cols | rows*cols float32, row-major

Checkpoint container (little-endian)::

    b"MMDACKPT" | u32 version | u64 header length | header (sorted-key JSON, utf-8)
    tensor payloads concatenated in header order

The header lists every tensor as ``{name, partition, slot, dtype, shape}``
where ``slot`` is ``value``, ``acc_grad`` or ``acc_delta``.  Writing the same
object twice gives identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from typing import Iterable, Mapping, Optional

import numpy as np

from .attention_decoder import RnnLm
from .augmentation.text import normalize_text
from .config import ModelConfig
from .training import Checkpoint, EpochLog, MmdaModel
from .vocab import OutputVocab, SymbolVocab

FEATURE_MAGIC = b"MMDA"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"MMDACKPT"
CHECKPOINT_VERSION = 1
SLOTS = ("value", "acc_grad", "acc_delta")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


class FormatError(ValueError):
    pass


# ------------------------------------------------------------------ features

def write_features(path: str, utterances: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> int:
    items = utterances.items() if isinstance(utterances, Mapping) else utterances
    n = 0
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<I", FEATURE_VERSION))
        for uttid, feats in items:
            feats = np.asarray(feats)
            if feats.ndim != 2:
                raise FormatError(f"{uttid}: features must be 2-D, got shape {feats.shape}")
            key = uttid.encode("utf-8")
            fh.write(struct.pack("<I", len(key)) + key)
            fh.write(struct.pack("<II", *feats.shape))
            fh.write(np.ascontiguousarray(feats, dtype="<f4").tobytes())
            n += 1
    return n


def read_features(path: str) -> dict[str, np.ndarray]:
    """Archive -> ``{uttid: float32 [rows, cols]}`` in file order."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a feature archive (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported archive version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 8
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            uttid = data[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            size = rows * cols * 4
            if pos + size > len(data):
                raise FormatError(f"{path}: truncated record {uttid}")
            if uttid in out:
                raise FormatError(f"{path}: duplicate utterance id {uttid}")
            out[uttid] = np.frombuffer(data, "<f4", rows * cols, pos).reshape(rows, cols).astype(np.float32)
            pos += size
    except struct.error as exc:
        raise FormatError(f"{path}: truncated archive") from exc
    return out


def convert_text_features(src: str, dst: str) -> int:
    """Converter for external feature tables: lines ``UTTID v1 ... vD``, one frame per line.

    Consecutive lines with the same id form one utterance.
    """
    utts: dict[str, list[list[float]]] = {}
    with open(src, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise FormatError(f"{src}:{lineno}: expected UTTID followed by values")
            utts.setdefault(parts[0], []).append([float(v) for v in parts[1:]])
    return write_features(dst, ((k, np.array(v, np.float32)) for k, v in utts.items()))


# --------------------------------------------------------------- transcripts

def read_transcripts(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            uttid, sep, text = line.partition("\t")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected UTTID<TAB>TRANSCRIPT")
            if uttid in out:
                raise FormatError(f"{path}:{lineno}: duplicate utterance id {uttid}")
            out[uttid] = normalize_text(text)
    return out


def write_transcripts(path: str, transcripts: Mapping[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for uttid, text in transcripts.items():
            fh.write(f"{uttid}\t{text}\n")


def read_text_corpus(path: str) -> list[str]:
    """Plain text, one sentence per line (blank lines kept so indices stay aligned)."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def write_mapping(path: str, mapping: Mapping[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for target, source in mapping.items():
            fh.write(f"{target}\t{source}\n")


# ---------------------------------------------------------------- checkpoints

def _write_container(path: str, header: dict, params) -> None:
    tensors = []
    payload = []
    for name, p in params:
        for slot, arr in zip(SLOTS, (p.data, p.acc_grad, p.acc_delta)):
            dt = str(arr.dtype)
            if dt not in _DTYPES:
                raise FormatError(f"unsupported dtype {dt} for {name}")
            tensors.append({"name": name, "partition": p.partition, "slot": slot,
                            "dtype": dt, "shape": list(arr.shape)})
            payload.append(np.ascontiguousarray(arr, dtype=_DTYPES[dt]).tobytes())
    header = dict(header, tensors=tensors)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for chunk in payload:
            fh.write(chunk)


def _read_container(path: str) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<IQ", data, 8)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + n].decode("utf-8"))
    pos = 20 + n
    arrays: dict = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        dt = np.dtype(_DTYPES[t["dtype"]])
        if pos + count * dt.itemsize > len(data):
            raise FormatError(f"{path}: truncated tensor {t['name']}")
        arr = np.frombuffer(data, dt, count, pos).reshape(t["shape"]).astype(t["dtype"])
        arrays[(t["name"], t["slot"])] = (t["partition"], arr)
        pos += count * dt.itemsize
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return header, arrays


def _load_params(module, arrays: dict, path: str) -> None:
    for name, p in module.named_parameters():
        for slot in SLOTS:
            try:
                partition, arr = arrays[(name, slot)]
            except KeyError:
                raise FormatError(f"{path}: missing tensor {name}/{slot}") from None
            if partition != p.partition:
                raise FormatError(f"{path}: {name} labelled {partition}, expected {p.partition}")
            if arr.shape != p.data.shape:
                raise FormatError(f"{path}: {name} has shape {arr.shape}, expected {p.data.shape}")
            if slot == "value":
                p.data = arr.copy()
                p.grad = np.zeros_like(p.data)
            else:
                setattr(p, slot, arr.copy())


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    model = ckpt.model
    header = {
        "kind": "asr",
        "model_config": dataclasses.asdict(model.config),
        "output_vocab": model.output_vocab.symbols[len(OutputVocab.RESERVED):],
        "symbol_vocab": model.symbol_vocab.symbols[1:],
        "epoch": ckpt.epoch,
        "dev_accuracy": ckpt.dev_accuracy,
        "rng_state": ckpt.rng_state,
        "cursor_state": ckpt.cursor_state,
        "history": [dataclasses.asdict(h) for h in ckpt.history],
    }
    _write_container(path, header, model.named_parameters())


def load_checkpoint(path: str) -> Checkpoint:
    header, arrays = _read_container(path)
    if header.get("kind") != "asr":
        raise FormatError(f"{path}: not an ASR checkpoint")
    cfg = ModelConfig(**{k: tuple(v) if isinstance(v, list) else v
                         for k, v in header["model_config"].items()})
    value_dtypes = {arr.dtype for (_, slot), (_, arr) in arrays.items() if slot == "value"}
    precision = 64 if np.dtype(np.float64) in value_dtypes else 32
    model = MmdaModel(cfg, OutputVocab(header["output_vocab"]), SymbolVocab(header["symbol_vocab"]),
                      precision=precision)
    _load_params(model, arrays, path)
    history = [EpochLog(**h) for h in header["history"]]
    return Checkpoint(header["epoch"], header["dev_accuracy"], model, header["rng_state"],
                      header["cursor_state"], history)


def save_lm(path: str, lm: RnnLm, vocab: OutputVocab) -> None:
    header = {"kind": "lm", "lm_config": lm.config,
              "output_vocab": vocab.symbols[len(OutputVocab.RESERVED):]}
    _write_container(path, header, lm.named_parameters())


def load_lm(path: str) -> tuple[RnnLm, OutputVocab]:
    header, arrays = _read_container(path)
    if header.get("kind") != "lm":
        raise FormatError(f"{path}: not a language-model checkpoint")
    lm = RnnLm(**header["lm_config"])
    _load_params(lm, arrays, path)
    return lm, OutputVocab(header["output_vocab"])

