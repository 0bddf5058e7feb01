"""Command-line entry points: train, predict, eval, export-embeddings.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing/unreadable file, malformed lexicon, unknown symbols, bad checkpoint),
3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .data import SplitSpec, build_vocabularies, read_word_list
from .decode import check_compatible, decode_words, ensemble_vote
from .errors import (CheckpointError, ConfigError, EnsembleError, G2PError, InputError, LexiconParseError,
                     NumericalError, VocabularyError)
from .evaluation import evaluate, worst_errors
from .model import ATTENTION_TYPES, ENCODER_MODES, G2PModel, ModelConfig
from .seeding import purpose_rng
from .train import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ENSEMBLE_SIZE = 5

log = logging.getLogger("g2p_attn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if str(text).lower() in ("none", "") else int(text)


def _opt_float(text):
    return None if str(text).lower() in ("none", "") else float(text)


# key -> (parser, owner) for everything settable from a config file or flag
SETTINGS = {
    "attention": (str, "model"),
    "encoder_mode": (str, "model"),
    "layers": (int, "model"),
    "units": (int, "model"),
    "embed_dim": (int, "model"),
    "window": (int, "model"),
    "attention_size": (_opt_int, "model"),
    "input_feeding": (_bool, "model"),
    "p_drop": (float, "model"),
    "batch_size": (int, "train"),
    "epochs": (int, "train"),
    "lr0": (float, "train"),
    "lr_decay": (float, "train"),
    "sampling_floor": (float, "train"),
    "sampling_horizon": (_opt_int, "train"),
    "clip_norm": (_opt_float, "train"),
    "seed": (int, "run"),
    "train": (str, "split"),
    "dev": (str, "split"),
    "test": (str, "split"),
    "dev_sample": (int, "split"),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config file {path}: {exc.strerror}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        try:
            out[key] = SETTINGS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def read_manifest(path) -> dict:
    """Flatten a run manifest back into settings, so a run can be repeated from it."""
    try:
        m = json.loads(Path(path).read_text(encoding="utf-8"))
        settings = {**m["model"], **m["train"], **m["split"], "seed": m["seed"]}
    except OSError as exc:
        raise FileNotFoundError(f"cannot read manifest {path}: {exc.strerror}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed manifest ({exc})") from exc
    return settings


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults < config file (or a previous run's manifest.json) < command-line flags."""
    settings = {**asdict(ModelConfig()), **asdict(TrainConfig())}
    settings.update({"train": None, "dev": None, "test": None, "dev_sample": 0})
    if args.config:
        if str(args.config).endswith(".json"):
            settings.update(read_manifest(args.config))
        else:
            settings.update(read_config_file(args.config))
    for key in SETTINGS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _add_train_args(p):
    p.add_argument("--config", help="key = value settings file, or a previous manifest.json (flags win)")
    p.add_argument("--train", help="training lexicon")
    p.add_argument("--dev", help="development lexicon")
    p.add_argument("--dev-sample", dest="dev_sample", type=int, help="sample this many dev words from --train")
    p.add_argument("--test", help="test lexicon, scored after training")
    p.add_argument("--out", default="run", help="output directory (default: ./run)")
    p.add_argument("--attention", choices=ATTENTION_TYPES)
    p.add_argument("--encoder", dest="encoder_mode", choices=ENCODER_MODES)
    p.add_argument("--layers", type=int)
    p.add_argument("--units", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--window", type=int, help="local attention half-width D")
    p.add_argument("--attention-size", dest="attention_size", type=int)
    feed = p.add_mutually_exclusive_group()
    feed.add_argument("--input-feeding", dest="input_feeding", action="store_const", const=True)
    feed.add_argument("--no-input-feeding", dest="input_feeding", action="store_const", const=False)
    p.add_argument("--dropout", dest="p_drop", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", dest="lr0", type=float)
    p.add_argument("--lr-decay", dest="lr_decay", type=float)
    p.add_argument("--sampling-floor", dest="sampling_floor", type=float)
    p.add_argument("--sampling-horizon", dest="sampling_horizon", type=int)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="g2p-attn", description="Attention encoder-decoder grapheme-to-phoneme toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    _add_train_args(p)

    p = sub.add_parser("predict", help="greedy-decode words, one per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="word list (default: stdin)")
    p.add_argument("--output", help="default: stdout")

    p = sub.add_parser("eval", help="score checkpoint(s) on a lexicon")
    p.add_argument("--checkpoint", required=True, nargs="+")
    p.add_argument("--test", required=True)
    p.add_argument("--ensemble", action="store_true", help=f"vote over exactly {ENSEMBLE_SIZE} checkpoints")
    p.add_argument("--buckets", action="store_true", help="print word-length and per-word-PER tables")
    p.add_argument("--report", help="write the full report here")
    p.add_argument("--worst", type=int, default=0, help="list the K worst errors")
    p.add_argument("--seed", type=int, default=0, help="tie-breaking seed for ensemble voting")
    p.add_argument("--workers", type=int, default=1, help="decode ensemble members concurrently")

    p = sub.add_parser("export-embeddings", help="dump the phoneme embedding table as TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", help="default: stdout")
    return parser


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    s = resolve_settings(args)
    if not s["train"]:
        raise UsageError("a training lexicon is required (--train or 'train =' in the config)")
    seed = s["seed"]
    model_cfg = ModelConfig(**{k: s[k] for k in asdict(ModelConfig()) if k != "seed"}, seed=seed)
    train_cfg = TrainConfig(**{k: s[k] for k in asdict(TrainConfig()) if k != "seed"}, seed=seed)
    split = SplitSpec(s["train"], s["dev"], s["test"], s["dev_sample"], seed)
    train_entries, dev_entries, test_entries = split.load()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": str(out / "model.ckpt"), "log": str(out / "train_log.tsv"),
             "state": str(out / "state.ckpt"), "manifest": str(out / "manifest.json")}
    manifest = {"version": __version__, "seed": seed, "model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
                "split": asdict(split), "paths": paths,
                "sizes": {"train": len(train_entries), "dev": len(dev_entries), "test": len(test_entries)}}
    Path(paths["manifest"]).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    model = G2PModel(model_cfg, *build_vocabularies(train_entries))
    log.info("model with %d parameters, %d train / %d dev words", model.parameter_count(),
             len(train_entries), len(dev_entries))
    state = train(model, train_entries, dev_entries, train_cfg, paths["checkpoint"], paths["log"], paths["state"])
    print(f"trained {state.epoch} epochs; best dev WER "
          f"{'-' if state.best_wer == float('inf') else f'{state.best_wer:.2f}'}; checkpoint {paths['checkpoint']}")
    if test_entries:
        best, _ = load_checkpoint(paths["checkpoint"])
        usable = [e for e in test_entries if not best.g_vocab.unknown(e.word)]
        preds = decode_words([e.word for e in usable], best)
        report = evaluate([p.phonemes for p in preds], usable)
        print(f"test: {report.summary()}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    src = open(args.input, encoding="utf-8") if args.input else sys.stdin
    dst = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    status = EXIT_OK
    try:
        words = read_word_list(src)
        good = [w for w in words if w and not model.g_vocab.unknown(w)]
        preds = {w: p for w, p in zip(good, decode_words(good, model))} if good else {}
        for w in words:
            if w in preds:
                dst.write(f"{w}\t{' '.join(preds[w].phonemes)}\n")
            else:
                bad = " ".join(model.g_vocab.unknown(w))
                print(f"{w}\terror: unknown graphemes {bad}", file=sys.stderr)
                status = EXIT_DATA
    finally:
        if args.input:
            src.close()
        if args.output:
            dst.close()
    return status


def cmd_eval(args) -> int:
    from .data import read_lexicon

    models = [load_checkpoint(path)[0] for path in args.checkpoint]
    if args.ensemble and len(models) != ENSEMBLE_SIZE:
        raise UsageError(f"--ensemble needs exactly {ENSEMBLE_SIZE} checkpoints, got {len(models)}")
    if len(models) > 1 and not args.ensemble:
        raise UsageError("several checkpoints given without --ensemble")
    check_compatible(models)
    entries = read_lexicon(args.test)
    unknown = sorted({w for e in entries for w in models[0].g_vocab.unknown(e.word)})
    if unknown:
        raise VocabularyError(f"{args.test}: graphemes unseen in training: {' '.join(unknown)}", unknown)
    words = [e.word for e in entries]
    if args.ensemble:
        with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
            member_preds = list(pool.map(lambda m: decode_words(words, m), models))
        rng = purpose_rng(args.seed, "tiebreak")
        predictions = [models[0].p_vocab.decode(ensemble_vote([mp[k].ids for mp in member_preds], rng))
                       for k in range(len(words))]
    else:
        predictions = [p.phonemes for p in decode_words(words, models[0])]
    report = evaluate(predictions, entries)
    print(report.summary())
    if args.buckets:
        print("word length buckets (words, errors, WER %):")
        for name, row in report.length_table.items():
            wer = "-" if row["wer"] is None else f"{row['wer']:.2f}"
            print(f"  {name:<10} {row['words']:>6} {row['errors']:>6} {wer:>7}")
        print("per-word PER buckets over incorrect words:")
        for name, count in report.per_histogram.items():
            print(f"  {name:<10} {count:>6}")
    if args.worst:
        print(f"worst {args.worst} errors:")
        for r in worst_errors(report.results, args.worst):
            print(f"  {r.word}\t{' '.join(r.predicted)}\t{' '.join(r.truth)}\t{r.distance}")
    if args.report:
        Path(args.report).write_text(report.to_text(buckets=True), encoding="utf-8")
    return EXIT_OK


def format_embeddings(model: G2PModel) -> str:
    table = model.params["embed.phoneme"].data.astype(np.float32)
    lines = []
    for symbol in model.p_vocab.corpus_symbols:
        row = table[model.p_vocab.id(symbol)]
        lines.append(symbol + "\t" + "\t".join(np.format_float_positional(v, unique=True) for v in row))
    return "\n".join(lines) + "\n"


def parse_embeddings(text: str) -> dict[str, np.ndarray]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            symbol, *values = line.split("\t")
            out[symbol] = np.array([np.float32(v) for v in values], dtype=np.float32)
    return out


def cmd_export_embeddings(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    text = format_embeddings(model)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "export-embeddings": cmd_export_embeddings,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, EnsembleError) as exc:
        print(f"g2p-attn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"g2p-attn: missing file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LexiconParseError as exc:
        print(f"g2p-attn: lexicon parse error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (VocabularyError, CheckpointError, InputError) as exc:
        print(f"g2p-attn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"g2p-attn: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except G2PError as exc:
        print(f"g2p-attn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
