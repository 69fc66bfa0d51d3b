"""Frequency-banded rare-word lists and boosted count tables."""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .corpus import (
    CorpusError,
    CountTable,
    TokenizedCorpus,
    Vocabulary,
    segment_word,
    split_words,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrequencyBand:
    """Half-open frequency interval ``(low, high]``."""

    low: int
    high: int

    def __post_init__(self):
        if not (0 <= self.low < self.high):
            raise ValueError(f"invalid band ({self.low},{self.high}]")

    def __contains__(self, freq) -> bool:
        return self.low < freq <= self.high

    @property
    def label(self) -> str:
        return f"({self.low},{self.high}]"

    @classmethod
    def parse(cls, text: str) -> "FrequencyBand":
        """Accepts ``"1,5"``, ``"(1,5]"`` or a single integer ``"1"`` for ``(0,1]``."""
        t = text.strip().lstrip("(").rstrip("]").strip()
        if "," in t:
            lo, hi = t.split(",", 1)
            return cls(int(lo), int(hi))
        n = int(t)
        return cls(n - 1, n)


PAPER_BANDS = (
    FrequencyBand(10, 20),
    FrequencyBand(5, 10),
    FrequencyBand(1, 5),
    FrequencyBand(0, 1),
)


@dataclass(frozen=True)
class BiasEntry:
    word: str
    train_freq: int
    tokens: Tuple[int, ...]


@dataclass
class BiasingList:
    entries: List[BiasEntry]
    vocab_fingerprint: str = ""
    band: FrequencyBand = None
    warnings: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def words(self) -> List[str]:
        return [e.word for e in self.entries]


@dataclass(frozen=True)
class BoostSpec:
    targets: BiasingList
    factor: int = 100

    def __post_init__(self):
        if int(self.factor) != self.factor or self.factor < 1:
            raise ValueError(f"boost factor must be an integer >= 1, got {self.factor!r}")


def word_frequencies(corpus: TokenizedCorpus, vocab: Vocabulary) -> Dict[str, int]:
    freqs = Counter()
    for utt in corpus.utterances:
        freqs.update(vocab.detokenize(utt))
    return dict(freqs)


def extract_band(freqs: Dict[str, int], band: FrequencyBand, vocab: Vocabulary) -> BiasingList:
    """Words with ``band.low < freq <= band.high``, sorted, with their segmentation.

    Words that cannot be segmented are left out and listed in ``warnings``.
    """
    entries, warnings = [], []
    for word in sorted(w for w, f in freqs.items() if f in band):
        try:
            toks = segment_word(word, vocab)
        except CorpusError as exc:
            warnings.append(f"skipped {word!r}: {exc}")
            log.warning("skipped %r: %s", word, exc)
            continue
        entries.append(BiasEntry(word, int(freqs[word]), tuple(toks)))
    return BiasingList(entries, vocab.fingerprint(), band, warnings)


def biasing_list_from_words(words: Sequence[Tuple[str, int]], vocab: Vocabulary) -> BiasingList:
    """Build a list from ``(word, train_freq)`` pairs, e.g. a list file.

    Unsegmentable words are reported in ``warnings`` like in :func:`extract_band`.
    """
    entries, warnings, seen = [], [], set()
    for word, freq in words:
        if word in seen:
            raise ValueError(f"duplicate biasing word {word!r}")
        seen.add(word)
        try:
            toks = segment_word(word, vocab)
        except CorpusError as exc:
            warnings.append(f"skipped {word!r}: {exc}")
            continue
        entries.append(BiasEntry(word, int(freq), tuple(toks)))
    return BiasingList(entries, vocab.fingerprint(), None, warnings)


def read_biasing_list(path) -> List[Tuple[str, int]]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{n}: expected 'word<TAB>train_freq'")
        try:
            out.append((parts[0], int(parts[1])))
        except ValueError:
            raise ValueError(f"{path}:{n}: bad frequency {parts[1]!r}") from None
    return out


def write_biasing_list(path, blist: BiasingList):
    Path(path).write_text(
        "".join(f"{e.word}\t{e.train_freq}\n" for e in blist.entries), encoding="utf-8"
    )


def boost_counts(counts: CountTable, corpus: TokenizedCorpus, vocab: Vocabulary,
                 spec: BoostSpec) -> CountTable:
    """Counts of the corpus in which every target-word occurrence is repeated F times in place.

    Occurrences are matched on the detokenized word, so the corpus's own
    segmentation of the word is what gets repeated.

    Only the delta is computed: each target occurrence adds (F-1) copies of
    its unigrams and internal pairs, plus (F-1) self-boundary pairs
    (last token -> first token) in full-stream mode. Pairs with the
    original neighbours occur once in the expanded corpus and stay as is.
    """
    if spec.targets.vocab_fingerprint and spec.targets.vocab_fingerprint != vocab.fingerprint():
        raise ValueError("biasing list was segmented under a different vocabulary")
    if counts.dim != len(vocab):
        raise ValueError(f"count table dim {counts.dim} != vocabulary size {len(vocab)}")
    extra = spec.factor - 1
    unigram = counts.unigram.copy()
    adjacency = dict(counts.adjacency)
    if extra == 0 or not spec.targets.entries:
        return CountTable(unigram, adjacency, counts.mode)

    targets = set(spec.targets.words)
    first_is_p = vocab.is_prefix
    delta = Counter()
    uni_delta = np.zeros_like(unigram)
    for utt in corpus.utterances:
        for word, (a, b) in split_words(utt, vocab):
            if word not in targets:
                continue
            span = tuple(int(t) for t in utt[a:b])
            np.add.at(uni_delta, list(span), extra)
            for x, y in zip(span[:-1], span[1:]):
                delta[(x, y)] += extra
            if counts.mode == "full-stream" or not first_is_p[span[0]]:
                delta[(span[-1], span[0])] += extra
    unigram += uni_delta
    for key, n in delta.items():
        adjacency[key] = adjacency.get(key, 0) + n
    return CountTable(unigram, adjacency, counts.mode)
