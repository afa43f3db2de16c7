"""Coarse-to-fine hashing matcher for one image pair, and the exhaustive reference matcher."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import HashMismatch
from ..features import FeatureSet
from .lsh import HashCodeSet, hamming

TOP_K = 8
RATIO = 0.5
# rows of the query processed per vectorized step; bounds the n_q x n_t temporaries
_CHUNK = 256


@dataclass(frozen=True)
class MatchCandidate:
    query_idx: int
    train_idx: int
    hamming: int
    euclidean: float


@dataclass(frozen=True, eq=False)
class PairMatches:
    """Matches between ``pair[0]`` (query) and ``pair[1]`` (train); ``matches`` is (k, 2)."""

    pair: Tuple[int, int]
    matches: np.ndarray
    stage: str = "initial"

    def __post_init__(self):
        m = np.asarray(self.matches, dtype=np.int64).reshape(-1, 2)
        m.setflags(write=False)
        object.__setattr__(self, "matches", m)
        if self.stage not in ("initial", "verified"):
            raise ValueError(f"unknown stage {self.stage!r}")

    def __len__(self) -> int:
        return self.matches.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PairMatches):
            return NotImplemented
        return self.pair == other.pair and self.stage == other.stage and np.array_equal(self.matches, other.matches)

    __hash__ = None

    def as_set(self) -> set:
        return {(int(a), int(b)) for a, b in self.matches}

    def subset(self, keep: np.ndarray, stage: str = "verified") -> "PairMatches":
        return PairMatches(self.pair, self.matches[np.asarray(keep, dtype=bool)], stage)


def euclidean_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances between aligned rows (broadcasting), float64 difference then root of sum."""
    d = a.astype(np.float64) - b.astype(np.float64)
    return np.sqrt((d * d).sum(axis=-1))


def _ratio_decision(dist: np.ndarray, idx: np.ndarray, valid: np.ndarray, ratio: float):
    """Per row: nearest train index (by distance, then index) and whether it passes.

    Args:
        dist: (r, c) distances; entries where ``valid`` is False are ignored.
        idx: (r, c) train indices aligned with ``dist``.
        valid: (r, c) mask of real candidates.
    """
    d = np.where(valid, dist, np.inf)
    tie = np.where(valid, idx, np.iinfo(np.int64).max)
    order = np.lexsort((tie, d), axis=-1)
    rows = np.arange(d.shape[0])
    first = order[:, 0]
    d1 = d[rows, first]
    n_valid = valid.sum(axis=1)
    if d.shape[1] > 1:
        d2 = d[rows, order[:, 1]]
    else:
        d2 = np.full_like(d1, np.inf)
    accept = (n_valid == 1) | ((n_valid >= 2) & (d1 < d2 * ratio))
    return idx[rows, first], accept & (n_valid >= 1)


def _check_codes(q: HashCodeSet, t: HashCodeSet, qf: FeatureSet, tf: FeatureSet) -> None:
    if q.signature != t.signature:
        raise HashMismatch(f"codes for images {q.image_id} and {t.image_id} come from different hash functions")
    if len(q) != len(qf) or len(t) != len(tf):
        raise ValueError("code count does not match descriptor count")


def candidate_mask(q: HashCodeSet, t: HashCodeSet, rows: slice = slice(None)) -> np.ndarray:
    """(n_q, n_t) mask: train feature shares the query's bucket in at least one table."""
    qc = q.coarse[rows]
    mask = np.zeros((qc.shape[0], len(t)), dtype=bool)
    for table in range(qc.shape[1]):
        mask |= qc[:, table, None] == t.coarse[None, :, table]
    return mask


def rank_candidates(
    q: HashCodeSet, qf: FeatureSet, t: HashCodeSet, tf: FeatureSet, query_idx: int, top_k: int = TOP_K
) -> List[MatchCandidate]:
    """The first ``top_k`` bucket-sharing candidates of one query in Hamming order."""
    _check_codes(q, t, qf, tf)
    cand = np.flatnonzero(candidate_mask(q, t, slice(query_idx, query_idx + 1))[0])
    ham = hamming(q.fine[query_idx], t.fine[cand])
    order = np.lexsort((cand, ham))[:top_k]
    dist = euclidean_rows(qf.descriptors[query_idx], tf.descriptors[cand[order]])
    return [
        MatchCandidate(query_idx, int(cand[o]), int(ham[o]), float(dd)) for o, dd in zip(order, dist)
    ]


def match_pair(
    q: HashCodeSet,
    qf: FeatureSet,
    t: HashCodeSet,
    tf: FeatureSet,
    top_k: int = TOP_K,
    ratio: float = RATIO,
) -> PairMatches:
    """Cascade hashing match of every query feature of ``qf`` against ``tf``.

    Candidates are the union over tables of bucket-sharing train features.
    They are ranked by long-code Hamming distance with ties to the lower
    train index, the first ``top_k`` are re-ranked by Euclidean distance and
    the nearest is kept if it passes the ratio test. A query with a single
    candidate keeps it; a query with none yields no match.

    Raises:
        HashMismatch: the two code sets were built with different hash functions.
    """
    _check_codes(q, t, qf, tf)
    pair = (qf.image_id, tf.image_id)
    n_q, n_t = len(q), len(t)
    if n_q == 0 or n_t == 0:
        return PairMatches(pair, np.zeros((0, 2), np.int64))
    k = min(top_k, n_t)
    out_q, out_t = [], []
    train_ids = np.arange(n_t, dtype=np.int64)
    sentinel = np.iinfo(np.int64).max
    for start in range(0, n_q, _CHUNK):
        rows = slice(start, min(start + _CHUNK, n_q))
        mask = candidate_mask(q, t, rows)
        ham = hamming(q.fine[rows, None, :], t.fine[None, :, :])
        # one sortable key per candidate: Hamming first, train index second
        key = np.where(mask, ham * (n_t + 1) + train_ids, sentinel)
        if k < n_t:
            part = np.argpartition(key, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(train_ids, key.shape).copy()
        valid = np.take_along_axis(key, part, axis=1) != sentinel
        qi = np.arange(rows.start, rows.stop)
        dist = euclidean_rows(qf.descriptors[qi][:, None, :], tf.descriptors[part])
        best, accept = _ratio_decision(dist, part.astype(np.int64), valid, ratio)
        out_q.append(qi[accept])
        out_t.append(best[accept])
    m = np.stack([np.concatenate(out_q), np.concatenate(out_t)], axis=1)
    return PairMatches(pair, m)


def brute_force_match(qf: FeatureSet, tf: FeatureSet, ratio: float = RATIO) -> PairMatches:
    """Exact nearest and second-nearest by a full Euclidean scan, same ratio rule."""
    pair = (qf.image_id, tf.image_id)
    n_q, n_t = len(qf), len(tf)
    if n_q == 0 or n_t == 0:
        return PairMatches(pair, np.zeros((0, 2), np.int64))
    train_ids = np.arange(n_t, dtype=np.int64)
    out_q, out_t = [], []
    step = max(1, 4_000_000 // (n_t * qf.descriptors.shape[1]))
    for start in range(0, n_q, step):
        qi = np.arange(start, min(start + step, n_q))
        dist = euclidean_rows(qf.descriptors[qi][:, None, :], tf.descriptors[None, :, :])
        idx = np.broadcast_to(train_ids, dist.shape)
        best, accept = _ratio_decision(dist, idx, np.ones(dist.shape, bool), ratio)
        out_q.append(qi[accept])
        out_t.append(best[accept])
    return PairMatches(pair, np.stack([np.concatenate(out_q), np.concatenate(out_t)], axis=1))
