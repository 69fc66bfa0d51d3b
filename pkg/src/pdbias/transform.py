"""Connection probabilities and the token replacement (transform) matrix.

For a P-class token the connection distribution is over the tokens that
follow it; for an S-class token it is over the tokens that precede it.
Two tokens are substitutable when they share a connecting token:

    T_ij = p_i * sum_k  conn[i, k] * conn[k, j]     (i, j, k pairwise distinct)

Each row's off-diagonal mass is then rescaled to exactly ``p_i`` and the
diagonal set to ``1 - p_i``, so T is row-stochastic.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import _kernels
from .corpus import CountTable, Vocabulary

AUTO_LOW_COUNT = 100
AUTO_HIGH_COUNT = 1000
AUTO_FLOOR = 0.09
AUTO_CEIL = 0.9


@dataclass
class ConnectionModel:
    """Dense ``conn[i, j] = p_i^j``; rows of tokens with no neighbour counts are zero."""

    probs: np.ndarray
    defined: np.ndarray
    is_prefix: np.ndarray

    @property
    def dim(self) -> int:
        return self.probs.shape[0]

    def forward(self, i: int) -> Dict[int, float]:
        if not self.is_prefix[i] or not self.defined[i]:
            raise KeyError(i)
        return {int(j): float(v) for j, v in enumerate(self.probs[i]) if v}

    def backward(self, i: int) -> Dict[int, float]:
        if self.is_prefix[i] or not self.defined[i]:
            raise KeyError(i)
        return {int(j): float(v) for j, v in enumerate(self.probs[i]) if v}


def connection_probs(counts: CountTable, vocab: Vocabulary) -> ConnectionModel:
    if counts.dim != len(vocab):
        raise ValueError(f"count table dim {counts.dim} != vocabulary size {len(vocab)}")
    adj = counts.dense_adjacency()
    is_prefix = vocab.is_prefix
    # P rows: successors of i.  S rows: predecessors of i (column i of adj).
    raw = np.where(is_prefix[:, None], adj, adj.T)
    totals = raw.sum(axis=1)
    defined = totals > 0
    probs = np.zeros_like(raw)
    probs[defined] = raw[defined] / totals[defined, None]
    return ConnectionModel(probs, defined, is_prefix)


@dataclass(frozen=True)
class ReplacementSchedule:
    """``fixed`` uses a constant p; ``auto`` interpolates on the token count.

    The auto curve yields 0.09 for rare tokens up to 0.9 for frequent ones.
    Under the ``keep`` convention that value is the probability of keeping
    the token, so the replacement probability is one minus it; ``replace``
    uses it as the replacement probability directly.
    """

    kind: str = "fixed"
    p: float = 0.0
    convention: str = "keep"

    def __post_init__(self):
        if self.kind not in ("fixed", "auto"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.convention not in ("keep", "replace"):
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.kind == "fixed" and not (0.0 <= self.p <= 1.0):
            raise ValueError(f"fixed p must lie in [0, 1], got {self.p}")

    @classmethod
    def parse(cls, text: str, convention: str = "keep") -> "ReplacementSchedule":
        """``"auto"``, ``"fixed:0.7"`` or a bare number."""
        text = text.strip()
        if text == "auto":
            return cls("auto", 0.0, convention)
        if text.startswith("fixed:"):
            text = text[len("fixed:"):]
        return cls("fixed", float(text), convention)

    def describe(self) -> dict:
        if self.kind == "auto":
            return {"kind": "auto", "convention": self.convention}
        return {"kind": "fixed", "p": self.p}


def auto_curve(n):
    """Piecewise-linear value in [0.09, 0.9] from a token count (scalar or array)."""
    n = np.asarray(n, dtype=np.float64)
    out = np.where(
        n >= AUTO_HIGH_COUNT,
        AUTO_CEIL,
        np.where(n <= AUTO_LOW_COUNT, AUTO_FLOOR, AUTO_CEIL * n / AUTO_HIGH_COUNT),
    )
    return out if out.ndim else float(out)


def replacement_prob(n_i, schedule: ReplacementSchedule):
    """Effective replacement probability of a token seen ``n_i`` times."""
    if schedule.kind == "fixed":
        if np.ndim(n_i):
            return np.full(np.shape(n_i), schedule.p, dtype=np.float64)
        return float(schedule.p)
    value = auto_curve(n_i)
    return 1.0 - value if schedule.convention == "keep" else value


def class_mask(is_prefix: np.ndarray, same_class_only: bool) -> np.ndarray:
    if not same_class_only:
        return np.ones((len(is_prefix), len(is_prefix)), dtype=bool)
    return is_prefix[:, None] == is_prefix[None, :]


def substitution_scores(conn: ConnectionModel, p: np.ndarray, same_class_only: bool = True) -> np.ndarray:
    """Unnormalized off-diagonal scores ``p_i * sum_k conn[i,k] conn[k,j]``; diagonal is zero."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (conn.dim,):
        raise ValueError(f"p has shape {p.shape}, expected ({conn.dim},)")
    hops = _kernels.two_hop(conn.probs, class_mask(conn.is_prefix, same_class_only))
    return p[:, None] * hops


@dataclass
class TransformMatrix:
    T: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.T.shape[0]

    @classmethod
    def identity(cls, dim: int, provenance: Optional[dict] = None) -> "TransformMatrix":
        return cls(np.eye(dim), dict(provenance or {}))


def build_transform(conn: ConnectionModel, unigrams: np.ndarray, schedule: ReplacementSchedule,
                    same_class_only: bool = True, provenance: Optional[dict] = None) -> TransformMatrix:
    unigrams = np.asarray(unigrams)
    if unigrams.shape != (conn.dim,):
        raise ValueError(f"unigram table has shape {unigrams.shape}, connection model dim is {conn.dim}")
    p = np.asarray(replacement_prob(unigrams, schedule), dtype=np.float64)
    hops = _kernels.two_hop(conn.probs, class_mask(conn.is_prefix, same_class_only))
    mass = hops.sum(axis=1)
    live = (mass > 0) & (p > 0)
    T = np.zeros_like(hops)
    T[live] = hops[live] * (p[live] / mass[live])[:, None]
    diag = np.where(live, 1.0 - p, 1.0)
    np.fill_diagonal(T, diag)
    prov = {"schedule": schedule.describe(), "same_class_only": bool(same_class_only)}
    prov.update(provenance or {})
    return TransformMatrix(T, prov)


# --------------------------------------------------------------------------
# PDBM file format
# --------------------------------------------------------------------------

MATRIX_MAGIC = b"PDBM"
FORMAT_VERSION = 1


def save_matrix(path, tm: TransformMatrix):
    dim = tm.dim
    header = MATRIX_MAGIC + np.array([FORMAT_VERSION, dim], dtype="<u4").tobytes()
    body = np.ascontiguousarray(tm.T, dtype="<f8").tobytes()
    trailer = json.dumps(tm.provenance, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)
        fh.write(trailer)


def load_matrix(path) -> TransformMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MATRIX_MAGIC:
        raise ValueError(f"{path}: not a matrix file (bad magic)")
    version, dim = np.frombuffer(data, dtype="<u4", count=2, offset=4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    end = 12 + int(dim) * int(dim) * 8
    if len(data) < end:
        raise ValueError(f"{path}: truncated matrix body")
    T = np.frombuffer(data, dtype="<f8", count=int(dim) * int(dim), offset=12).reshape(dim, dim).copy()
    trailer = data[end:].decode("utf-8")
    return TransformMatrix(T, json.loads(trailer) if trailer else {})
