"""``mmda`` command-line interface."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import shutil
import sys
from typing import Optional, Sequence

from . import formats
from .attention_decoder import RnnLm
from .augmentation import (DurationModel, G2PModel, Lexicon, estimate_durations, g2p_train,
                           make_generator, map_durations, read_corpus, read_mapping, write_corpus)
from .augmentation.streams import CorpusStats, generate_corpus
from .config import BeamConfig, ConfigError, RunConfig, load_config
from .decoding import beam_search, decode_line, hypothesis_text, length_bounds, parse_decode_line
from .encoders import AcousticInput, InputTooShortError, output_length
from .evaluation import ResultRow, score_corpus
from .formats import FormatError
from .training import (AcousticExample, AugmentingExample, Checkpoint, EpochLog, MmdaModel,
                       Trainer, train_lm)
from .vocab import OutputVocab, SymbolVocab

log = logging.getLogger("mmda")


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else load_config(text="")
    return cfg


def _echo_config(cfg: RunConfig) -> str:
    text = cfg.to_ini()
    for line in text.splitlines():
        if line.strip():
            log.info("config %s", line)
    return text


# ------------------------------------------------------------------- augment

def cmd_augment(args) -> int:
    cfg = _config(args)
    aug = cfg.augment
    if args.seed is not None:
        aug.seed = args.seed
    _echo_config(cfg)
    if args.scheme != "charstream" and not args.lexicon:
        raise UsageError(f"--scheme {args.scheme} requires --lexicon")
    if args.scheme == "rep-phonestream" and not args.durations:
        raise UsageError("--scheme rep-phonestream requires --durations")
    lex = Lexicon.read(args.lexicon) if args.lexicon else None
    g2p = G2PModel.load(args.g2p) if args.g2p else None
    dm = DurationModel.read(args.durations) if args.durations else None
    if dm is not None and args.mapping:
        dm = map_durations(dm, read_mapping(args.mapping))
    gen = make_generator(args.scheme, lex, g2p, dm, aug.seed, aug.downsampling, aug.repeat_rounding)
    stats = CorpusStats()
    pairs = generate_corpus(formats.read_text_corpus(args.input), gen, aug.max_chars, aug.max_unk,
                            stats, prefix=args.prefix)
    write_corpus(args.output, pairs)
    print(f"kept {stats.kept} dropped {stats.dropped} skipped {stats.skipped}")
    log.info("augment: kept=%d dropped=%d skipped=%d", stats.kept, stats.dropped, stats.skipped)
    return 0


# --------------------------------------------------------------------- train

def _acoustic_examples(features: dict, transcripts: dict, vocab: OutputVocab, input_dim: int,
                       what: str) -> list[AcousticExample]:
    missing = sorted(set(features) ^ set(transcripts))
    if missing:
        raise FormatError(f"{what}: features and transcripts disagree on ids {missing[:10]}")
    out = []
    for uttid, feats in features.items():
        if feats.shape[1] != input_dim:
            raise FormatError(f"{what}: {uttid} has {feats.shape[1]}-dim features, "
                              f"config expects input_dim={input_dim}")
        out.append(AcousticExample(uttid, feats, vocab.encode(transcripts[uttid])))
    return out


def _best_so_far(ckpt: Checkpoint, directory: str) -> Checkpoint:
    """Best checkpoint among the epochs logged in ``ckpt`` (ties to the earlier epoch)."""
    best = max(ckpt.history, key=lambda e: (e.dev_accuracy, -e.epoch))
    if best.epoch == ckpt.epoch:
        return ckpt
    path = os.path.join(directory, f"epoch-{best.epoch:03d}.ckpt")
    if not os.path.exists(path):
        raise UsageError(f"cannot resume: best-so-far checkpoint {path} is missing")
    return formats.load_checkpoint(path)


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.seed is not None:
        cfg.model.seed = cfg.train.seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    handler = logging.FileHandler(os.path.join(args.out, "train.log"), mode="a", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    try:
        with open(os.path.join(args.out, "config.ini"), "w", encoding="utf-8") as fh:
            fh.write(_echo_config(cfg))
        feats = formats.read_features(args.features)
        trans = formats.read_transcripts(args.transcripts)
        pairs = []
        if args.augmenting and not args.no_augmentation:
            pairs = read_corpus(args.augmenting)
        dev_feats = formats.read_features(args.dev_features) if args.dev_features else None
        dev_trans = formats.read_transcripts(args.dev_transcripts) if args.dev_transcripts else None
        if (dev_feats is None) != (dev_trans is None):
            raise UsageError("--dev-features and --dev-transcripts go together")
        texts = list(trans.values()) + [p.s for p in pairs] + list((dev_trans or {}).values())
        vocab = OutputVocab.from_texts(texts)
        symbols = SymbolVocab(sorted({t for p in pairs for t in p.z} - {"<unk>"}))
        train = _acoustic_examples(feats, trans, vocab, cfg.model.input_dim, "training set")
        dev = (_acoustic_examples(dev_feats, dev_trans, vocab, cfg.model.input_dim, "dev set")
               if dev_feats is not None else train)
        augmenting = [AugmentingExample(p.uttid, symbols.encode(p.z), vocab.encode(p.s)) for p in pairs]
        model = MmdaModel(cfg.model, vocab, symbols, precision=cfg.train.precision)
        log.info("train: %d acoustic, %d augmenting, %d dev utterances; |Y|=%d |Z|=%d",
                 len(train), len(augmenting), len(dev), len(vocab), len(symbols))

        def on_epoch(ckpt: Checkpoint, entry: EpochLog) -> None:
            formats.save_checkpoint(os.path.join(args.out, f"epoch-{ckpt.epoch:03d}.ckpt"), ckpt)

        trainer = Trainer(model, cfg.train, on_epoch=on_epoch)
        if args.resume:
            ckpt = formats.load_checkpoint(args.resume)
            if ckpt.model.output_vocab != vocab or ckpt.model.symbol_vocab != symbols:
                raise UsageError("--resume checkpoint was trained with different vocabularies")
            trainer.resume(ckpt, _best_so_far(ckpt, os.path.dirname(args.resume) or "."))
            log.info("resuming after epoch %d", ckpt.epoch)
        best = trainer.run(train, augmenting, dev)
        best_name = f"epoch-{best.epoch:03d}.ckpt"
        shutil.copyfile(os.path.join(args.out, best_name), os.path.join(args.out, "best.ckpt"))
        with open(os.path.join(args.out, "best"), "w", encoding="utf-8") as fh:
            fh.write(best_name + "\n")
        log.info("best epoch %d dev accuracy %.6f", best.epoch, best.dev_accuracy)
    finally:
        log.removeHandler(handler)
        handler.close()
    return 0


# -------------------------------------------------------------------- decode

def cmd_decode(args) -> int:
    cfg = _config(args)
    beam = cfg.decode
    for key, val in (("beam_size", args.beam), ("min_ratio", args.min_ratio),
                     ("max_ratio", args.max_ratio), ("lm_weight", args.lm_weight)):
        if val is not None:
            setattr(beam, key, val)
    beam = BeamConfig(**dataclasses.asdict(beam))
    _echo_config(cfg)
    model = formats.load_checkpoint(args.checkpoint).model
    lm = None
    if args.lm:
        lm, lm_vocab = formats.load_lm(args.lm)
        if lm_vocab != model.output_vocab:
            raise UsageError("LM and acoustic model use different output vocabularies")
    feats = formats.read_features(args.features)
    with open(args.output, "w", encoding="utf-8", newline="\n") as out:
        for uttid, x in feats.items():
            if x.shape[1] != model.config.input_dim:
                raise FormatError(f"{uttid}: {x.shape[1]}-dim features, model expects "
                                  f"{model.config.input_dim}")
            if args.verbose:
                f = output_length(len(x), model.config.pyramid_layers)
                lo, hi = length_bounds(f, beam.min_ratio, beam.max_ratio)
                print(f"{uttid}\tF={f}\tmin_len={lo}\tmax_len={hi}", file=sys.stderr)
            hyps = beam_search(model, AcousticInput(x, uttid), beam, lm)
            best = hyps[0]
            out.write(decode_line(uttid, hypothesis_text(model.output_vocab, best), best,
                                  beam.lm_weight if lm is not None else 0.0))
    return 0


# --------------------------------------------------------------------- score

def _read_hypotheses(path: str) -> dict[str, str]:
    """Decode output (4 fields) or a plain transcript file."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            if line.count("\t") == 3:
                uttid, text, _, _ = parse_decode_line(line)
            else:
                uttid, _, text = line.rstrip("\n").partition("\t")
            out[uttid] = text
    return out


def cmd_score(args) -> int:
    if not args.set:
        raise UsageError("give at least one --set NAME REFS HYPS")
    if args.taxonomy and not args.lexicon:
        raise UsageError("--taxonomy needs --lexicon")
    words = set(Lexicon.read(args.lexicon)) if args.taxonomy else None
    row = ResultRow(args.augmentation)
    for name, ref_path, hyp_path in args.set:
        refs = formats.read_transcripts(ref_path)
        hyps = _read_hypotheses(hyp_path)
        row.cer[name] = score_corpus(refs, hyps, "char")
        row.wer[name] = score_corpus(refs, hyps, "word", words)
    print(row.table())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(row.to_json() + "\n")
    return 0


# ------------------------------------------------------------------ lm-train

def cmd_lm_train(args) -> int:
    texts = (list(formats.read_transcripts(args.text).values()) if args.transcripts
             else [t for t in formats.read_text_corpus(args.text) if t.strip()])
    from .augmentation.text import normalize_text
    texts = [s for s in (normalize_text(t) for t in texts) if s]
    if not texts:
        raise UsageError(f"{args.text}: no sentences")
    vocab = OutputVocab.from_texts(texts) if args.vocab_from is None else \
        formats.load_checkpoint(args.vocab_from).model.output_vocab
    lm = RnnLm(len(vocab), hidden=args.hidden, layers=args.layers, seed=args.seed)
    history = train_lm(lm, [vocab.encode(t) for t in texts], args.epochs, args.batch_size,
                       args.seed, vocab.sos, vocab.eos)
    for epoch, loss in enumerate(history, 1):
        log.info("lm epoch %d loss %.6f", epoch, loss)
    formats.save_lm(args.output, lm, vocab)
    return 0


# -------------------------------------------------------- estimate-durations

def cmd_estimate_durations(args) -> int:
    """Alignment lines ``[UTTID] PHONE FRAMES``; the last two columns are used."""
    obs = []
    with open(args.alignments, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise FormatError(f"{args.alignments}:{lineno}: expected [UTTID] PHONE FRAMES")
            obs.append((parts[-2], float(parts[-1])))
    dm = estimate_durations(obs)
    if args.mapping:
        dm = map_durations(dm, read_mapping(args.mapping))
    dm.write(args.output)
    print(f"{len(dm.stats)} phonemes from {len(obs)} observations")
    return 0


# ----------------------------------------------------------------- g2p-train

def cmd_g2p_train(args) -> int:
    cfg = _config(args)
    order = args.order or cfg.augment.g2p_order
    model = g2p_train(Lexicon.read(args.lexicon), order=order, iterations=args.iterations)
    model.save(args.output)
    print(f"order {order} held-in PER {model.train_per:.4f}")
    return 0


# ------------------------------------------------------------------ make-toy

def cmd_make_toy(args) -> int:
    """Write a synthetic toy corpus (test fixture) for trying the pipeline end to end."""
    from .synthetic import ToyTask
    task = ToyTask.build(dim=args.dim, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for name, n, seed in (("train", args.train, 1), ("dev", args.dev, 2), ("test", args.test, 3)):
        feats, trans = task.utterances(n, seed=args.seed * 1000 + seed, prefix=f"{name}_")
        formats.write_features(os.path.join(args.out, f"{name}.feats"), feats)
        formats.write_transcripts(os.path.join(args.out, f"{name}.txt"), trans)
    with open(os.path.join(args.out, "text.txt"), "w", encoding="utf-8") as fh:
        for s in task.grammar.sentences(args.text, seed=args.seed * 1000 + 4):
            fh.write(s + "\n")
    task.lexicon.write(os.path.join(args.out, "lexicon.txt"))
    task.durations.write(os.path.join(args.out, "durations.txt"))
    print(f"wrote toy corpus to {args.out}")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmda", description="Multi-modal data augmentation for attention-based ASR")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("augment", help="turn a text corpus into an augmenting corpus")
    a.add_argument("--input", required=True, help="plain text, one sentence per line")
    a.add_argument("--output", required=True)
    a.add_argument("--scheme", required=True, choices=("charstream", "phonestream", "rep-phonestream"))
    a.add_argument("--lexicon")
    a.add_argument("--g2p", help="G2P model for out-of-lexicon words")
    a.add_argument("--durations", help="PHONEME MU SIGMA table")
    a.add_argument("--mapping", help="TARGET<TAB>SOURCE phoneme map applied to --durations")
    a.add_argument("--seed", type=int)
    a.add_argument("--prefix", default="aug")
    a.add_argument("--config")
    a.set_defaults(func=cmd_augment)

    t = sub.add_parser("train", help="train an MMDA (or baseline) model")
    t.add_argument("--features", required=True)
    t.add_argument("--transcripts", required=True)
    t.add_argument("--augmenting", help="augmenting corpus from 'mmda augment'")
    t.add_argument("--no-augmentation", action="store_true", help="ignore --augmenting (baseline)")
    t.add_argument("--dev-features")
    t.add_argument("--dev-transcripts")
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--resume", help="epoch checkpoint to continue from")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--config")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", help="beam-search decode a feature archive")
    d.add_argument("--features", required=True)
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--beam", type=int)
    d.add_argument("--min-ratio", type=float)
    d.add_argument("--max-ratio", type=float)
    d.add_argument("--lm")
    d.add_argument("--lm-weight", type=float)
    d.add_argument("--verbose", action="store_true", help="print per-utterance length bounds")
    d.add_argument("--config")
    d.set_defaults(func=cmd_decode)

    s = sub.add_parser("score", help="CER/WER and error taxonomy")
    s.add_argument("--set", nargs=3, action="append", metavar=("NAME", "REFS", "HYPS"))
    s.add_argument("--taxonomy", action="store_true", help="split word errors into nonsense/legal")
    s.add_argument("--lexicon")
    s.add_argument("--augmentation", default="none", help="label for the result row")
    s.add_argument("--json", help="also write the machine-readable record here")
    s.set_defaults(func=cmd_score)

    lm = sub.add_parser("lm-train", help="train the character RNNLM")
    lm.add_argument("--text", required=True)
    lm.add_argument("--transcripts", action="store_true", help="--text is UTTID<TAB>TEXT")
    lm.add_argument("--output", required=True)
    lm.add_argument("--vocab-from", help="take the output vocabulary from this ASR checkpoint")
    lm.add_argument("--hidden", type=int, default=650)
    lm.add_argument("--layers", type=int, default=2)
    lm.add_argument("--epochs", type=int, default=10)
    lm.add_argument("--batch-size", type=int, default=16)
    lm.add_argument("--seed", type=int, default=int(os.environ.get("MMDA_SEED", 1)))
    lm.set_defaults(func=cmd_lm_train)

    e = sub.add_parser("estimate-durations", help="phoneme duration statistics from alignments")
    e.add_argument("--alignments", required=True)
    e.add_argument("--mapping")
    e.add_argument("--output", required=True)
    e.set_defaults(func=cmd_estimate_durations)

    g = sub.add_parser("g2p-train", help="train the joint n-gram G2P")
    g.add_argument("--lexicon", required=True)
    g.add_argument("--output", required=True)
    g.add_argument("--order", type=int)
    g.add_argument("--iterations", type=int, default=8)
    g.add_argument("--config")
    g.set_defaults(func=cmd_g2p_train)

    mt = sub.add_parser("make-toy", help="write a synthetic toy corpus (test fixture)")
    mt.add_argument("--out", required=True)
    mt.add_argument("--dim", type=int, default=16)
    mt.add_argument("--train", type=int, default=50)
    mt.add_argument("--dev", type=int, default=20)
    mt.add_argument("--test", type=int, default=50)
    mt.add_argument("--text", type=int, default=500)
    mt.add_argument("--seed", type=int, default=0)
    mt.set_defaults(func=cmd_make_toy)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.WARNING if args.quiet else logging.INFO)
    log.setLevel(logging.INFO)
    log.addHandler(handler)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mmda: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FormatError, InputTooShortError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mmda: error: {msg}", file=sys.stderr)
        return 1
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
