"""Word alignment, WER, rare-word error rate and greedy hypothesis extraction."""

from dataclasses import dataclass, field, asdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .corpus import Vocabulary
from .postdecoder import PosteriorTensor

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


@dataclass(frozen=True)
class Op:
    kind: str
    ref: Optional[str] = None
    hyp: Optional[str] = None


@dataclass
class Alignment:
    ops: List[Op]

    @property
    def cost(self) -> int:
        return sum(op.kind != MATCH for op in self.ops)

    def counts(self) -> Dict[str, int]:
        out = {MATCH: 0, SUB: 0, DEL: 0, INS: 0}
        for op in self.ops:
            out[op.kind] += 1
        return out

    def ref_words(self) -> List[str]:
        return [op.ref for op in self.ops if op.kind != INS]

    def hyp_words(self) -> List[str]:
        return [op.hyp for op in self.ops if op.kind != DEL]


def _encode(ref: Sequence[str], hyp: Sequence[str]):
    table = {}
    r = np.array([table.setdefault(w, len(table)) for w in ref], dtype=np.int64)
    h = np.array([table.setdefault(w, len(table)) for w in hyp], dtype=np.int64)
    return r, h


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    r, h = _encode(ref, hyp)
    return int(_kernels.edit_table(r, h)[-1, -1])


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Minimum-cost alignment; backtrace prefers match, then sub, del, ins."""
    ref, hyp = list(ref), list(hyp)
    r, h = _encode(ref, hyp)
    d = _kernels.edit_table(r, h)
    i, j = len(ref), len(hyp)
    ops = []
    while i or j:
        cur = d[i, j]
        if i and j and r[i - 1] == h[j - 1] and d[i - 1, j - 1] == cur:
            ops.append(Op(MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i and j and d[i - 1, j - 1] + 1 == cur:
            ops.append(Op(SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i and d[i - 1, j] + 1 == cur:
            ops.append(Op(DEL, ref[i - 1], None))
            i -= 1
        else:
            ops.append(Op(INS, None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return Alignment(ops)


def _words(x) -> List[str]:
    return x.split() if isinstance(x, str) else list(x)


def error_counts(pairs: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> Dict[str, int]:
    tot = {SUB: 0, DEL: 0, INS: 0, "ref_words": 0}
    for ref, hyp in pairs:
        ref, hyp = _words(ref), _words(hyp)
        c = align(ref, hyp).counts()
        for k in (SUB, DEL, INS):
            tot[k] += c[k]
        tot["ref_words"] += len(ref)
    return tot


def wer(pairs) -> float:
    """Pooled ``100 * (S + D + I) / N_ref`` over the corpus."""
    c = error_counts(pairs)
    if c["ref_words"] == 0:
        raise ValueError("WER undefined: all references are empty")
    return 100.0 * (c[SUB] + c[DEL] + c[INS]) / c["ref_words"]


@dataclass
class RwerEntry:
    rwer: Optional[float]
    rare_del: int = 0
    rare_sub_missed: int = 0
    rare_inserted: int = 0
    rare_sub_in: int = 0
    rare_ref_occurrences: int = 0
    denominator: int = 0
    flags: List[str] = field(default_factory=list)

    @property
    def numerator(self) -> int:
        return self.rare_del + self.rare_sub_missed + self.rare_wrongly_appeared

    @property
    def rare_wrongly_appeared(self) -> int:
        return self.rare_inserted + self.rare_sub_in

    def as_dict(self) -> dict:
        d = asdict(self)
        d["numerator"] = self.numerator
        d["rare_wrongly_appeared"] = self.rare_wrongly_appeared
        return d


def rwer(pairs, rare_words: Iterable[str]) -> RwerEntry:
    """Rare-word error rate.

    Numerator: rare reference words deleted or substituted, plus rare words
    appearing in the hypothesis where the reference has none (insertions and
    substitutions over a non-rare reference word). Denominator: rare
    occurrences in the references; if zero while wrongful appearances exist,
    their count is used instead and the entry is flagged. ``rwer`` is None
    when there is nothing to measure.
    """
    rare = set(rare_words)
    e = RwerEntry(None)
    for ref, hyp in pairs:
        ref, hyp = _words(ref), _words(hyp)
        e.rare_ref_occurrences += sum(w in rare for w in ref)
        for op in align(ref, hyp).ops:
            if op.kind == DEL and op.ref in rare:
                e.rare_del += 1
            elif op.kind == SUB:
                if op.ref in rare:
                    e.rare_sub_missed += 1
                elif op.hyp in rare:
                    e.rare_sub_in += 1
            elif op.kind == INS and op.hyp in rare:
                e.rare_inserted += 1
    if e.rare_ref_occurrences:
        e.denominator = e.rare_ref_occurrences
    elif e.rare_wrongly_appeared:
        e.denominator = e.rare_wrongly_appeared
        e.flags.append("denominator_fallback_to_appearances")
    else:
        e.flags.append("n/a")
        return e
    e.rwer = 100.0 * e.numerator / e.denominator
    return e


def decode_greedy(post: PosteriorTensor, vocab: Vocabulary) -> List[List[str]]:
    """Argmax per valid step (lowest id on ties), detokenized."""
    if post.bpe_size != len(vocab):
        raise ValueError(f"bpe_size {post.bpe_size} != vocabulary size {len(vocab)}")
    best = np.argmax(post.data, axis=2)
    return [vocab.detokenize(best[b, : post.lengths[b]].tolist()) for b in range(post.batch)]


def read_transcripts(path) -> Dict[str, str]:
    """``utt_id<TAB>words`` per line; returns an insertion-ordered dict."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            uid, _, words = line.partition("\t")
            if not uid:
                raise ValueError(f"{path}:{n}: empty utterance id")
            if uid in out:
                raise ValueError(f"{path}:{n}: duplicate utterance id {uid!r}")
            out[uid] = " ".join(words.split())
    return out


def write_transcripts(path, rows: Dict[str, str]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for uid, words in rows.items():
            fh.write(f"{uid}\t{words}\n")


def score(refs: Dict[str, str], hyps: Dict[str, str], bands: Dict[str, Iterable[str]]) -> dict:
    """Report dict with pooled WER and one RWER entry per named band."""
    missing = [u for u in refs if u not in hyps]
    if missing:
        raise ValueError(f"no hypothesis for {len(missing)} utterance(s), e.g. {missing[0]!r}")
    pairs = [(refs[u].split(), hyps[u].split()) for u in refs]
    counts = error_counts(pairs)
    report = {
        "wer": wer(pairs),
        "errors": counts,
        "rwer": {name: rwer(pairs, words).as_dict() for name, words in bands.items()},
    }
    return report
