"""VLAD aggregation of local descriptors into one global vector per image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import FeatureSet
from .codebook import Codebook


@dataclass(frozen=True, eq=False)
class VladVector:
    values: np.ndarray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, VladVector):
            return NotImplemented
        return self.degenerate == other.degenerate and np.array_equal(self.values, other.values)

    __hash__ = None


def encode_vlad(fs: FeatureSet, cb: Codebook) -> VladVector:
    """Residual sums per nearest word, signed square root, then global L2 norm.

    An image without features, or whose residuals all cancel, yields a zero
    vector flagged ``degenerate``.
    """
    dim = cb.k_words * cb.dim
    if len(fs) == 0:
        return VladVector(np.zeros(dim, dtype=np.float32), degenerate=True)
    x = fs.descriptors.astype(np.float64)
    c = cb.centroids.astype(np.float64)
    words = cb.assign(x)
    acc = np.zeros_like(c)
    np.add.at(acc, words, x - c[words])
    v = acc.ravel()
    v = np.sign(v) * np.sqrt(np.abs(v))
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return VladVector(np.zeros(dim, dtype=np.float32), degenerate=True)
    return VladVector((v / norm).astype(np.float32))
