"""Training-descriptor selection and Lloyd k-means codebooks."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import EmptyInput, FormatError, TooFewDescriptors, TruncatedFile
from ..features import DESCRIPTOR_DIM, FeatureSet

CODEBOOK_MAGIC = b"BMCB"
_CB_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray
    # within-cluster SSE after each assignment step of training
    sse_history: Tuple[float, ...] = ()

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("codebook needs a (k, dim) centroid matrix with k >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("codebook centroids must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def k_words(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, descriptors: np.ndarray) -> np.ndarray:
        """Index of the nearest centroid per row (ties -> lowest index)."""
        if len(descriptors) == 0:
            return np.zeros(0, dtype=np.int64)
        d = cdist(np.asarray(descriptors, dtype=np.float64), self.centroids.astype(np.float64), "sqeuclidean")
        return np.argmin(d, axis=1)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.centroids.shape == other.centroids.shape and np.array_equal(self.centroids, other.centroids)

    __hash__ = None


def select_training_descriptors(
    features: Sequence[FeatureSet], p: float = 10.0, h: Optional[int] = 200, seed: int = 0
) -> np.ndarray:
    """Pick ceil(p% of images) at random, then the ``h`` largest-scale features of each.

    ``h=None`` keeps every feature of a sampled image.
    """
    if not features:
        raise EmptyInput("no feature sets to sample from")
    if not 0 < p <= 100:
        raise ValueError(f"p must be in (0, 100], got {p}")
    if h is not None and h < 1:
        raise ValueError(f"h must be >= 1, got {h}")
    n = len(features)
    n_sel = min(n, math.ceil(p / 100.0 * n - 1e-9))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=n_sel, replace=False))
    parts = []
    for idx in chosen:
        fs = features[idx]
        order = np.argsort(-fs.scales, kind="stable")
        if h is not None:
            order = order[:h]
        parts.append(fs.descriptors[order])
    if not parts:
        return np.zeros((0, DESCRIPTOR_DIM), dtype=np.float32)
    return np.vstack(parts)


def train_codebook(descriptors: np.ndarray, k_words: int = 64, max_iters: int = 50, seed: int = 0) -> Codebook:
    """Lloyd's k-means.

    Starts from ``k_words`` distinct training rows chosen at random and
    alternates assignment and mean update until the assignment stops changing
    or ``max_iters`` is reached. A cluster that empties out is reseeded with
    the point currently farthest from its centroid.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("descriptors must be a 2-d array")
    if k_words < 1:
        raise ValueError("k_words must be >= 1")
    if len(x) < k_words:
        raise TooFewDescriptors(f"{len(x)} descriptors for {k_words} words")
    _, first_idx = np.unique(x, axis=0, return_index=True)
    if len(first_idx) < k_words:
        raise TooFewDescriptors(f"only {len(first_idx)} distinct descriptors for {k_words} words")

    rng = np.random.default_rng(seed)
    start = np.sort(rng.choice(np.sort(first_idx), size=k_words, replace=False))
    centroids = x[start].copy()
    assign = None
    history = []
    for _ in range(max(1, max_iters)):
        dist = cdist(x, centroids, "sqeuclidean")
        new_assign = np.argmin(dist, axis=1)
        point_cost = dist[np.arange(len(x)), new_assign]
        history.append(float(point_cost.sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign

        counts = np.bincount(assign, minlength=k_words)
        if np.any(counts == 0):
            taken = set()
            for c in np.flatnonzero(counts == 0):
                # farthest point that is not alone in its cluster
                for far in np.argsort(-point_cost, kind="stable"):
                    if far not in taken and counts[assign[far]] > 1:
                        break
                taken.add(far)
                counts[assign[far]] -= 1
                assign[far] = c
                counts[c] = 1
                point_cost[far] = 0.0
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, x)
        centroids = sums / counts[:, None]

    return Codebook(centroids, tuple(history))


def codebook_bytes(cb: Codebook) -> bytes:
    return _CB_HEADER.pack(CODEBOOK_MAGIC, cb.k_words, cb.dim) + cb.centroids.astype("<f4").tobytes()


def write_codebook(path: Union[str, Path], cb: Codebook) -> None:
    Path(path).write_bytes(codebook_bytes(cb))


def read_codebook(path: Union[str, Path]) -> Codebook:
    data = Path(path).read_bytes()
    if len(data) < _CB_HEADER.size:
        raise TruncatedFile("codebook header truncated")
    magic, k, dim = _CB_HEADER.unpack_from(data)
    if magic != CODEBOOK_MAGIC:
        raise FormatError(f"bad codebook magic {magic!r}")
    need = _CB_HEADER.size + k * dim * 4
    if len(data) < need:
        raise TruncatedFile(f"codebook body needs {need} bytes, got {len(data)}")
    c = np.frombuffer(data, dtype="<f4", count=k * dim, offset=_CB_HEADER.size).reshape(k, dim)
    return Codebook(c)
