"""Pipeline stages operating on files, shared by the CLI subcommands.

Every artifact carries a stamp: the sha256 of the stage name, its
parameters and the content hashes of its input files. Paths never enter
the stamp, so a stage run by hand on the same inputs reproduces the
artifact byte for byte.
"""

import hashlib
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .biasing import (
    PAPER_BANDS,
    BoostSpec,
    FrequencyBand,
    biasing_list_from_words,
    boost_counts,
    extract_band,
    read_biasing_list,
    word_frequencies,
    write_biasing_list,
)
from .corpus import DEFAULT_MARKER, count_stats, load_corpus, read_vocab
from .metrics import decode_greedy, read_transcripts, score, write_transcripts
from .postdecoder import (
    LinearLayer,
    TrainConfig,
    apply_transform,
    linear_forward,
    load_layer,
    load_posteriors,
    save_layer,
    save_posteriors,
    train_linear,
)
from .transform import (
    ReplacementSchedule,
    TransformMatrix,
    build_transform,
    connection_probs,
    load_matrix,
    save_matrix,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "PDBIAS_OUTPUT_ROOT"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stamp(stage: str, params: dict, inputs: Dict[str, Optional[str]]) -> str:
    doc = {
        "stage": stage,
        "params": params,
        "inputs": {k: (file_sha256(v) if v else None) for k, v in sorted(inputs.items())},
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def dump_json(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def _load(corpus, vocab, marker):
    v = read_vocab(vocab, marker) if vocab else None
    return load_corpus(corpus, v, marker)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    corpus: str = ""
    vocab: str = ""
    marker: str = DEFAULT_MARKER
    mode: str = "full-stream"
    band: str = "0,1"
    biasing_list: str = ""
    boost: int = 100
    schedule: str = "auto"
    convention: str = "keep"
    same_class_only: bool = True
    use_matrix: bool = True
    use_linear: bool = False
    layer: str = ""
    posteriors: str = ""
    refs: str = ""
    train_posteriors: str = ""
    train_tokens: str = ""
    learning_rate: float = 1e-2
    epochs: int = 20
    seed: int = 0
    out_dir: str = ""

    _PATHS = ("corpus", "vocab", "biasing_list", "layer", "posteriors", "refs",
              "train_posteriors", "train_tokens")

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type is bool or f.type == "bool":
                setattr(self, f.name, _bool(v))
            elif f.type in (int, "int"):
                setattr(self, f.name, int(v))
            elif f.type in (float, "float"):
                setattr(self, f.name, float(v))
            else:
                setattr(self, f.name, str(v))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kv = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {n}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.replace("-", "_")
            if k not in known:
                raise ValueError(f"config line {n}: unknown key {k!r}")
            kv[k] = v
        return cls(**kv)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls.from_text(Path(path).read_text(encoding="utf-8"))
        base = Path(path).resolve().parent
        for name in cls._PATHS:
            v = getattr(cfg, name)
            if v and not os.path.isabs(v):
                setattr(cfg, name, str(base / v))
        if cfg.out_dir and not os.path.isabs(cfg.out_dir):
            cfg.out_dir = str(base / cfg.out_dir)
        return cfg

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def params(self) -> dict:
        """Everything except paths; used for the run stamp."""
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in self._PATHS and f.name != "out_dir"}

    def validate(self):
        if not self.corpus:
            raise ValueError("corpus is required")
        for name in self._PATHS:
            v = getattr(self, name)
            if v and not Path(v).is_file():
                raise FileNotFoundError(f"{name}: {v} does not exist")
        if not self.posteriors or not self.refs:
            raise ValueError("posteriors and refs are required")
        if self.use_linear and bool(self.train_posteriors) != bool(self.train_tokens):
            raise ValueError("train_posteriors and train_tokens must be given together")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "pdbias_out"))


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def stage_stats(corpus, vocab="", marker=DEFAULT_MARKER) -> dict:
    c, v = _load(corpus, vocab, marker)
    freqs = word_frequencies(c, v)
    hist = Counter(freqs.values())
    bands = []
    for band in PAPER_BANDS:
        members = [w for w, f in freqs.items() if f in band]
        bands.append({
            "band": band.label,
            "unique": len(members),
            "occurrences": int(sum(freqs[w] for w in members)),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "utterances": len(c),
        "tokens": c.total_tokens(),
        "total_words": int(sum(freqs.values())),
        "unique_words": len(freqs),
        "histogram": [[int(f), int(n)] for f, n in sorted(hist.items())],
        "bands": bands,
    }


def stage_extract(corpus, out, band, vocab="", marker=DEFAULT_MARKER) -> List[str]:
    """Write the band's biasing list; returns warnings."""
    c, v = _load(corpus, vocab, marker)
    blist = extract_band(word_frequencies(c, v), FrequencyBand.parse(band), v)
    write_biasing_list(out, blist)
    return blist.warnings


def stage_build_matrix(corpus, out, vocab="", marker=DEFAULT_MARKER, biasing_list="", boost=1,
                       schedule="auto", convention="keep", mode="full-stream",
                       same_class_only=True) -> TransformMatrix:
    c, v = _load(corpus, vocab, marker)
    counts = count_stats(c, v, mode)
    warnings = []
    if biasing_list and boost != 1:
        blist = biasing_list_from_words(read_biasing_list(biasing_list), v)
        warnings = blist.warnings
        counts = boost_counts(counts, c, v, BoostSpec(blist, boost))
    sched = ReplacementSchedule.parse(schedule, convention)
    params = {"boost": boost, "schedule": sched.describe(), "mode": mode,
              "same_class_only": bool(same_class_only), "marker": marker}
    prov = dict(params)
    prov.update({
        "convention": convention,
        "boost_factor": boost,
        "vocab_hash": v.fingerprint(),
        "warnings": warnings,
        "config_hash": stamp("build-matrix", params,
                             {"corpus": corpus, "vocab": vocab, "biasing_list": biasing_list}),
    })
    tm = build_transform(connection_probs(counts, v), counts.unigram, sched, same_class_only, prov)
    save_matrix(out, tm)
    return tm


def stage_train_linear(posteriors, tokens, out, vocab, corpus="", marker=DEFAULT_MARKER,
                       matrix="", learning_rate=1e-2, epochs=20, seed=0) -> List[float]:
    """Train on (optionally matrix-transformed) posteriors; ``tokens`` is corpus-format."""
    if vocab:
        v = read_vocab(vocab, marker)
    else:
        _, v = load_corpus(corpus, None, marker)
    ref_corpus, _ = load_corpus(tokens, v, marker)
    refs = dict(zip(ref_corpus.source_ids, ref_corpus.utterances))
    post = load_posteriors(posteriors)
    if matrix:
        post = apply_transform(post, load_matrix(matrix))
    missing = [u for u in post.utt_ids if u not in refs]
    if missing:
        raise ValueError(f"no reference tokens for {missing[0]!r}")
    result = train_linear([post], refs, TrainConfig(learning_rate, epochs, seed))
    save_layer(out, result.layer)
    return result.losses


def stage_bias(posteriors, out, matrix="", layer="") -> None:
    if not matrix and not layer:
        raise ValueError("bias needs a matrix, a layer, or both")
    post = load_posteriors(posteriors)
    inputs = {"posteriors": posteriors, "matrix": matrix, "layer": layer}
    if matrix:
        post = apply_transform(post, load_matrix(matrix))
    if layer:
        post = linear_forward(post, load_layer(layer))
    save_posteriors(out, post, {"config_hash": stamp("bias", {}, inputs)})


def stage_decode(posteriors, out, vocab="", corpus="", marker=DEFAULT_MARKER) -> Dict[str, str]:
    if vocab:
        v = read_vocab(vocab, marker)
    else:
        _, v = load_corpus(corpus, None, marker)
    post = load_posteriors(posteriors)
    hyps = {u: " ".join(ws) for u, ws in zip(post.utt_ids, decode_greedy(post, v))}
    write_transcripts(out, hyps)
    return hyps


def band_words(corpus, vocab="", marker=DEFAULT_MARKER, lists=()) -> Dict[str, List[str]]:
    """Paper bands from corpus frequencies, plus any ``name=path`` list files."""
    bands = {}
    if corpus:
        c, v = _load(corpus, vocab, marker)
        freqs = word_frequencies(c, v)
        for band in PAPER_BANDS:
            bands[band.label] = sorted(w for w, f in freqs.items() if f in band)
    for item in lists:
        name, _, path = item.partition("=") if "=" in item else (Path(item).stem, "", item)
        bands[name] = [w for w, _ in read_biasing_list(path)]
    return bands


def stage_score(refs, hyps, out, corpus="", vocab="", marker=DEFAULT_MARKER, lists=()) -> dict:
    report = score(read_transcripts(refs), read_transcripts(hyps),
                   band_words(corpus, vocab, marker, lists))
    report["schema_version"] = SCHEMA_VERSION
    inputs = {"refs": refs, "hyps": hyps, "corpus": corpus, "vocab": vocab}
    inputs.update({f"list{i}": item.split("=")[-1] for i, item in enumerate(lists)})
    report["config_hash"] = stamp("score", {"marker": marker}, inputs)
    dump_json(out, report)
    return report


# --------------------------------------------------------------------------
# whole pipeline and sweeps
# --------------------------------------------------------------------------

@dataclass
class _Tracker:
    written: List[Path] = field(default_factory=list)

    def path(self, p: Path) -> str:
        self.written.append(p)
        return str(p)

    def cleanup(self):
        for p in self.written:
            if p.exists():
                p.unlink()


def run_pipeline(cfg: RunConfig, out_dir=None) -> dict:
    """extract -> boost + matrix -> (train) -> bias -> decode -> score.

    On failure, files written so far are removed and a StageError naming the
    stage is raised.
    """
    stage = "config"
    out = Path(out_dir or cfg.out_dir or default_out_dir())
    track = _Tracker()
    try:
        cfg.validate()
        out.mkdir(parents=True, exist_ok=True)
        m = cfg.marker

        stage = "extract-list"
        if cfg.biasing_list:
            blist = cfg.biasing_list
        else:
            blist = track.path(out / "biasing_list.tsv")
            for w in stage_extract(cfg.corpus, blist, cfg.band, cfg.vocab, m):
                log.warning(w)

        matrix = ""
        if cfg.use_matrix:
            stage = "build-matrix"
            matrix = track.path(out / "matrix.pdbm")
            stage_build_matrix(cfg.corpus, matrix, cfg.vocab, m, blist, cfg.boost, cfg.schedule,
                               cfg.convention, cfg.mode, cfg.same_class_only)

        layer = ""
        losses = None
        if cfg.use_linear:
            stage = "train-linear"
            if cfg.layer:
                layer = cfg.layer
            else:
                layer = track.path(out / "layer.pdbl")
                if cfg.train_posteriors:
                    losses = stage_train_linear(cfg.train_posteriors, cfg.train_tokens, layer,
                                                cfg.vocab, cfg.corpus, m, matrix,
                                                cfg.learning_rate, cfg.epochs, cfg.seed)
                else:
                    log.warning("use_linear without training data: using identity layer")
                    save_layer(layer, LinearLayer.identity(load_posteriors(cfg.posteriors).bpe_size))

        stage = "bias"
        if matrix or layer:
            biased = track.path(out / "biased.pdbt")
            stage_bias(cfg.posteriors, biased, matrix, layer)
        else:
            biased = cfg.posteriors

        stage = "decode"
        hyp = track.path(out / "hyp.txt")
        stage_decode(biased, hyp, cfg.vocab, cfg.corpus, m)

        stage = "score"
        report_path = track.path(out / "report.json")
        report = stage_score(cfg.refs, hyp, report_path, cfg.corpus, cfg.vocab, m)

        stage = "manifest"
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "config": cfg.params(),
            "config_hash": stamp("pipeline", cfg.params(), {n: getattr(cfg, n) for n in cfg._PATHS}),
            "artifacts": {p.name: file_sha256(p) for p in track.written},
            "train_losses": losses,
        }
        dump_json(track.path(out / "run.json"), manifest)
        (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
        track.written.append(out / "config.txt")
        return report
    except Exception as exc:
        track.cleanup()
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc


def relative_improvement(base, value):
    """Percent reduction of RWER relative to the baseline run."""
    if base == value:
        return 0.0
    if base is None or value is None or base == 0:
        return None
    return 100.0 * (base - value) / base


def run_sweep(cfg: RunConfig, factors, out_dir=None) -> dict:
    """One pipeline per boost factor; a factor-1 baseline is always run."""
    out = Path(out_dir or cfg.out_dir or default_out_dir())
    factors = [int(f) for f in factors]
    if not factors:
        raise ValueError("at least one factor is required")
    runs = {}
    plan = ([1] if 1 not in factors else []) + factors
    rows = []
    for i, f in enumerate(plan):
        sub = out / f"{i:02d}_boost{f}"
        run_cfg = RunConfig(**{**{fl.name: getattr(cfg, fl.name) for fl in fields(cfg)}, "boost": f})
        try:
            report = run_pipeline(run_cfg, sub)
            rows.append({"factor": f, "dir": sub.name, "wer": report["wer"],
                         "rwer": {b: e["rwer"] for b, e in report["rwer"].items()}, "error": None})
        except StageError as exc:
            log.error("factor %d failed: %s", f, exc)
            rows.append({"factor": f, "dir": sub.name, "wer": None, "rwer": None, "error": str(exc)})
        runs.setdefault(f, rows[-1])
    base = runs[1]
    for row in rows:
        if row["rwer"] is None or base["rwer"] is None:
            row["relative_improvement"] = None
            continue
        row["relative_improvement"] = {
            b: relative_improvement(base["rwer"].get(b), v) for b, v in row["rwer"].items()
        }
    # the implicit baseline is reported separately, requested factors keep their order
    report = {
        "schema_version": SCHEMA_VERSION,
        "baseline": base,
        "factors": factors,
        "rows": rows[len(plan) - len(factors):],
    }
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "sweep.json", report)
    return report
