"""Match-pair selection: VLAD encode every image, index, query, build the view graph."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ..features import FeatureSet
from .codebook import Codebook, select_training_descriptors, train_codebook
from .hnsw import HnswIndex
from .viewgraph import ViewGraph, norm_pair
from .vlad import VladVector, encode_vlad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalParams:
    k_words: int = 64
    p: float = 10.0
    h: Optional[int] = 200
    kmeans_iters: int = 50
    retrieval_top_n: int = 30
    hnsw_M: int = 16
    ef_construction: int = 200
    ef_search: int = 64


def build_codebook(features: Sequence[FeatureSet], params: RetrievalParams, seed: int = 0) -> Codebook:
    train = select_training_descriptors(features, params.p, params.h, seed=seed)
    return train_codebook(train, params.k_words, params.kmeans_iters, seed=seed)


def build_index(vlads: Dict[int, VladVector], params: RetrievalParams, seed: int = 0) -> HnswIndex:
    dim = next(iter(vlads.values())).dim
    index = HnswIndex(dim, params.hnsw_M, params.ef_construction, params.ef_search, seed=seed)
    for image_id in sorted(vlads):
        index.insert(image_id, vlads[image_id].values)
    return index


def select_pairs(
    features: Sequence[FeatureSet],
    cb: Codebook,
    retrieval_top_n: int = 30,
    params: Optional[RetrievalParams] = None,
    seed: int = 0,
) -> ViewGraph:
    """Query every image against the index of all images.

    Each image's ``retrieval_top_n`` nearest other images become pairs; the
    union over both query directions is taken before symmetrizing.
    """
    if retrieval_top_n < 1:
        raise ValueError("retrieval_top_n must be >= 1")
    params = params or RetrievalParams(retrieval_top_n=retrieval_top_n)
    ids = sorted(fs.image_id for fs in features)
    if len(ids) < 2:
        return ViewGraph(ids)
    vlads = {fs.image_id: encode_vlad(fs, cb) for fs in features}
    n_degenerate = sum(v.degenerate for v in vlads.values())
    if n_degenerate:
        log.warning("%d images produced degenerate VLAD vectors", n_degenerate)
    index = build_index(vlads, params, seed=seed)
    pairs = set()
    for image_id in ids:
        hits = index.search(vlads[image_id].values, retrieval_top_n + 1, ef=max(params.ef_search, retrieval_top_n + 1))
        kept = [h for h, _ in hits if h != image_id][:retrieval_top_n]
        pairs.update(norm_pair(image_id, h) for h in kept)
    return ViewGraph(ids, sorted(pairs))


def pair_recall_precision(retrieved: Sequence[Tuple[int, int]], truth: Sequence[Tuple[int, int]]) -> Tuple[float, float]:
    r = {norm_pair(*p) for p in retrieved}
    t = {norm_pair(*p) for p in truth}
    hit = len(r & t)
    recall = hit / len(t) if t else 1.0
    precision = hit / len(r) if r else 1.0
    return recall, precision
