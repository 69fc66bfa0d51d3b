"""Tokenized transcriptions, vocabulary classes and adjacency statistics."""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

DEFAULT_MARKER = "▁"  # SentencePiece "▁"
PREFIX = "P"
SUFFIX = "S"
MODES = ("full-stream", "intra-word")


class CorpusError(ValueError):
    """Malformed corpus, vocabulary, or segmentation input."""


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...]
    word_begin_marker: str = DEFAULT_MARKER
    id_of: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.word_begin_marker:
            raise CorpusError("word_begin_marker must be non-empty")
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        id_of = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise CorpusError(f"empty token at id {i}")
            if tok in id_of:
                raise CorpusError(f"duplicate token {tok!r} at ids {id_of[tok]} and {i}")
            id_of[tok] = i
        object.__setattr__(self, "id_of", id_of)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.id_of

    def class_of(self, tok) -> str:
        if isinstance(tok, (int, np.integer)):
            tok = self.tokens[tok]
        return PREFIX if tok.startswith(self.word_begin_marker) else SUFFIX

    @property
    def is_prefix(self) -> np.ndarray:
        """Boolean mask over ids, True for P-class tokens."""
        return np.array([t.startswith(self.word_begin_marker) for t in self.tokens], dtype=bool)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.word_begin_marker.encode("utf-8"))
        for tok in self.tokens:
            h.update(b"\n")
            h.update(tok.encode("utf-8"))
        return h.hexdigest()

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.id_of[t] for t in tokens]

    def detokenize(self, ids: Sequence[int]) -> List[str]:
        """Split before each P-class token and strip the marker."""
        return [word for word, _ in split_words(ids, self)]


@dataclass
class TokenizedCorpus:
    utterances: List[np.ndarray]
    source_ids: List[str]

    def __len__(self):
        return len(self.utterances)

    def total_tokens(self) -> int:
        return int(sum(len(u) for u in self.utterances))


@dataclass
class CountTable:
    """Unigram counts n_i and sparse adjacency counts n_ij (j follows i)."""

    unigram: np.ndarray
    adjacency: Dict[Tuple[int, int], int]
    mode: str = "full-stream"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown counting mode {self.mode!r}")

    @property
    def dim(self) -> int:
        return len(self.unigram)

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim), dtype=np.float64)
        for (i, j), n in self.adjacency.items():
            a[i, j] = n
        return a

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        return (
            self.mode == other.mode
            and np.array_equal(self.unigram, other.unigram)
            and self.adjacency == other.adjacency
        )


def split_words(ids: Sequence[int], vocab: Vocabulary) -> List[Tuple[str, Tuple[int, int]]]:
    """Words of a token sequence with their [start, end) token spans.

    A leading run of S-class tokens (no marker) forms a word of its own.
    """
    words = []
    start = 0
    marker = vocab.word_begin_marker
    for pos in range(1, len(ids) + 1):
        if pos == len(ids) or vocab.tokens[ids[pos]].startswith(marker):
            pieces = [vocab.tokens[t] for t in ids[start:pos]]
            if pieces and pieces[0].startswith(marker):
                pieces[0] = pieces[0][len(marker):]
            words.append(("".join(pieces), (start, pos)))
            start = pos
    return words


def read_vocab(path, word_begin_marker: str = DEFAULT_MARKER) -> Vocabulary:
    """One token per line, line number (0-based) is the id."""
    text = Path(path).read_text(encoding="utf-8")
    tokens = [line for line in text.split("\n")]
    if tokens and tokens[-1] == "":
        tokens.pop()
    for n, tok in enumerate(tokens, 1):
        if not tok.strip() or tok != tok.strip():
            raise CorpusError(f"{path}:{n}: empty or whitespace-padded token")
    return Vocabulary(tuple(tokens), word_begin_marker)


def write_vocab(path, vocab: Vocabulary):
    Path(path).write_text("".join(t + "\n" for t in vocab.tokens), encoding="utf-8")


def parse_corpus_lines(
    lines: Iterable[str], vocab: Optional[Vocabulary] = None, source: str = "<corpus>",
    word_begin_marker: str = DEFAULT_MARKER,
) -> Tuple[TokenizedCorpus, Vocabulary]:
    rows = []
    for n, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if line.endswith("\r"):
            line = line[:-1]
        if not line.strip():
            continue
        if "\t" not in line:
            raise CorpusError(f"{source}:{n}: expected 'utt_id<TAB>tokens'")
        utt_id, toks = line.split("\t", 1)
        if not utt_id:
            raise CorpusError(f"{source}:{n}: empty utterance id")
        toks = toks.split()
        if not toks:
            raise CorpusError(f"{source}:{n}: empty token sequence for {utt_id!r}")
        rows.append((n, utt_id, toks))

    if vocab is None:
        seen = {}
        for _, _, toks in rows:
            for t in toks:
                seen.setdefault(t, len(seen))
        vocab = Vocabulary(tuple(seen), word_begin_marker)

    utterances, ids = [], []
    for n, utt_id, toks in rows:
        try:
            encoded = vocab.encode(toks)
        except KeyError as exc:
            raise CorpusError(f"{source}:{n}: unknown token {exc.args[0]!r}") from None
        utterances.append(np.asarray(encoded, dtype=np.int64))
        ids.append(utt_id)
    return TokenizedCorpus(utterances, ids), vocab


def load_corpus(path, vocab: Optional[Vocabulary] = None,
                word_begin_marker: str = DEFAULT_MARKER) -> Tuple[TokenizedCorpus, Vocabulary]:
    """Read ``utt_id<TAB>tok tok ...`` lines.

    Without ``vocab`` one is built from tokens in order of first appearance.
    With ``vocab`` every token is validated against it.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    with open(path, encoding="utf-8", newline="\n") as fh:
        return parse_corpus_lines(fh, vocab, str(path), word_begin_marker)


def partition_vocab(vocab: Vocabulary) -> Tuple[Set[str], Set[str]]:
    if len(vocab) == 0:
        raise CorpusError("empty vocabulary")
    prefix = {t for t in vocab.tokens if t.startswith(vocab.word_begin_marker)}
    return prefix, set(vocab.tokens) - prefix


def count_stats(corpus: TokenizedCorpus, vocab: Vocabulary, mode: str = "full-stream") -> CountTable:
    """Unigram and adjacency counts.

    Pairs never span utterances. In ``intra-word`` mode pairs whose second
    token is P-class (a word boundary) are dropped.
    """
    if mode not in MODES:
        raise ValueError(f"unknown counting mode {mode!r}")
    dim = len(vocab)
    unigram = np.zeros(dim, dtype=np.int64)
    firsts, seconds = [], []
    for utt in corpus.utterances:
        unigram += np.bincount(utt, minlength=dim)
        if len(utt) > 1:
            firsts.append(utt[:-1])
            seconds.append(utt[1:])
    adjacency = {}
    if firsts:
        a = np.concatenate(firsts)
        b = np.concatenate(seconds)
        if mode == "intra-word":
            keep = ~vocab.is_prefix[b]
            a, b = a[keep], b[keep]
        keys, counts = np.unique(a * dim + b, return_counts=True)
        adjacency = {(int(k // dim), int(k % dim)): int(c) for k, c in zip(keys, counts)}
    return CountTable(unigram, adjacency, mode)


def segment_word(word: str, vocab: Vocabulary) -> List[int]:
    """Greedy longest-match segmentation of ``marker + word``.

    The first piece must be a P-class token, the rest S-class.
    """
    if not word:
        raise CorpusError("cannot segment an empty word")
    marker = vocab.word_begin_marker
    text = marker + word
    out = []
    pos = 0
    while pos < len(text):
        match = None
        for end in range(len(text), pos, -1):
            piece = text[pos:end]
            if piece in vocab.id_of and (pos == 0) == piece.startswith(marker):
                match = piece
                break
        if match is None:
            raise CorpusError(f"cannot segment {word!r}: no token covers {text[pos:]!r}")
        out.append(vocab.id_of[match])
        pos += len(match)
    return out

