"""Command-line entry point: ``pdbias <subcommand> ...``."""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from . import pipeline as pl
from .corpus import DEFAULT_MARKER

log = logging.getLogger("pdbias")


def _common(p, corpus_required=True):
    p.add_argument("--corpus", required=corpus_required, help="utt_id<TAB>tokens file")
    p.add_argument("--vocab", default="", help="one token per line; built from corpus if omitted")
    p.add_argument("--marker", default=DEFAULT_MARKER, help="word-begin marker (default '▁')")


def _matrix_opts(p):
    p.add_argument("--list", dest="biasing_list", default="", help="biasing list (word<TAB>freq)")
    p.add_argument("--boost", type=int, default=None, help="boost factor F (default 100 with --list)")
    p.add_argument("--schedule", default="auto", help="'auto' or 'fixed:P'")
    p.add_argument("--convention", choices=("keep", "replace"), default="keep")
    p.add_argument("--mode", choices=("full-stream", "intra-word"), default="full-stream")
    p.add_argument("--all-classes", action="store_true",
                   help="allow replacements across prefix/suffix classes")


def _run_opts(p):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-matrix", action="store_true", help="disable the transform matrix")
    p.add_argument("--linear", action="store_true", help="enable the linear layer")
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="pdbias", description="Post-decoder biasing toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="word-frequency histogram and rare-word band sizes")
    _common(p)
    p.add_argument("-o", "--output", help="JSON report path (stdout if omitted)")

    p = sub.add_parser("extract-list", help="write the biasing list of a frequency band")
    _common(p)
    p.add_argument("--band", required=True, help="e.g. '1,5' or '(10,20]' or '1'")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("build-matrix", help="build the token transform matrix")
    _common(p)
    _matrix_opts(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("bias", help="apply matrix and/or linear layer to a posterior tensor")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--matrix", default="")
    p.add_argument("--layer", default="")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--hyp", help="also write greedy hypotheses here (needs --vocab or --corpus)")
    _common(p, corpus_required=False)

    p = sub.add_parser("train-linear", help="train the post-decoder linear layer")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--tokens", required=True, help="reference tokens, corpus format")
    p.add_argument("--matrix", default="", help="apply this matrix before the layer")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--losses", help="write the loss trajectory (JSON) here")
    p.add_argument("-o", "--output", required=True)
    _common(p, corpus_required=False)

    p = sub.add_parser("score", help="WER and per-band RWER")
    p.add_argument("--refs", required=True, help="utt_id<TAB>words")
    p.add_argument("--hyp", required=True, help="utt_id<TAB>words")
    p.add_argument("--rare-list", action="append", default=[], metavar="[NAME=]PATH",
                   help="extra biasing list to score (repeatable)")
    p.add_argument("-o", "--output", help="JSON report path (stdout if omitted)")
    _common(p, corpus_required=False)

    p = sub.add_parser("pipeline", help="extract, build, bias, decode and score in one go")
    _run_opts(p)

    p = sub.add_parser("sweep", help="run the pipeline for several boost factors")
    _run_opts(p)
    p.add_argument("--factors", required=True, help="comma-separated, e.g. 1,10,100,1000")
    return ap


def load_run_config(args) -> pl.RunConfig:
    cfg = pl.RunConfig.from_file(args.config) if args.config else pl.RunConfig()
    known = {f.name for f in fields(pl.RunConfig)}
    updates = {}
    for item in args.set:
        k, sep, v = item.partition("=")
        k = k.strip().replace("-", "_")
        if not sep or k not in known:
            raise ValueError(f"bad --set {item!r}")
        updates[k] = v.strip()
    if args.no_matrix:
        updates["use_matrix"] = False
    if args.linear:
        updates["use_linear"] = True
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out_dir:
        updates["out_dir"] = args.out_dir
    merged = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    merged.update(updates)
    return pl.RunConfig(**merged)


def _emit(doc, output):
    if output:
        pl.dump_json(output, doc)
    else:
        print(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False))


def run(args):
    cmd = args.command
    if cmd == "stats":
        _emit(pl.stage_stats(args.corpus, args.vocab, args.marker), args.output)
    elif cmd == "extract-list":
        for w in pl.stage_extract(args.corpus, args.output, args.band, args.vocab, args.marker):
            print(f"[extract-list] warning: {w}", file=sys.stderr)
    elif cmd == "build-matrix":
        boost = args.boost if args.boost is not None else (100 if args.biasing_list else 1)
        tm = pl.stage_build_matrix(args.corpus, args.output, args.vocab, args.marker,
                                   args.biasing_list, boost, args.schedule, args.convention,
                                   args.mode, not args.all_classes)
        for w in tm.provenance.get("warnings", []):
            print(f"[build-matrix] warning: {w}", file=sys.stderr)
    elif cmd == "bias":
        pl.stage_bias(args.posteriors, args.output, args.matrix, args.layer)
        if args.hyp:
            pl.stage_decode(args.output, args.hyp, args.vocab, args.corpus, args.marker)
    elif cmd == "train-linear":
        losses = pl.stage_train_linear(args.posteriors, args.tokens, args.output, args.vocab,
                                       args.corpus, args.marker, args.matrix, args.lr,
                                       args.epochs, args.seed)
        if args.losses:
            pl.dump_json(args.losses, {"schema_version": pl.SCHEMA_VERSION, "losses": losses})
    elif cmd == "score":
        report = pl.stage_score(args.refs, args.hyp, args.output or os.devnull, args.corpus,
                                args.vocab, args.marker, args.rare_list)
        if not args.output:
            _emit(report, None)
    elif cmd == "pipeline":
        pl.run_pipeline(load_run_config(args))
    elif cmd == "sweep":
        factors = [int(f) for f in args.factors.split(",") if f.strip()]
        pl.run_sweep(load_run_config(args), factors)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
