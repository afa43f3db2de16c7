"""Fundamental-matrix RANSAC with the normalized eight-point solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import NoModel, TooFewMatches

MIN_SAMPLE = 8
EPIPOLAR_THRESHOLD_PX = 2.0
CONFIDENCE = 0.999
MAX_ITERS = 2048


@dataclass(frozen=True, eq=False)
class InlierSet:
    pair: Tuple[int, int]
    # indices into the input match list
    kept: np.ndarray
    model: np.ndarray
    inlier_ratio: float
    iterations: int


def _hartley(x: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    c = x.mean(axis=0)
    d = np.linalg.norm(x - c, axis=1).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _homog(x: np.ndarray) -> np.ndarray:
    return np.column_stack([x, np.ones(len(x))])


def canonical_fundamental(f: np.ndarray) -> np.ndarray:
    """Rank 2 by zeroing the smallest singular value, unit Frobenius norm, largest entry positive."""
    u, s, vt = np.linalg.svd(f)
    s[2] = 0.0
    f = u @ np.diag(s) @ vt
    u, s, vt = np.linalg.svd(f)
    s[2] = 0.0
    f = u @ np.diag(s) @ vt
    f = f / np.linalg.norm(f)
    flat = f.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        f = -f
    return f


def eight_point(x1: np.ndarray, x2: np.ndarray) -> Optional[np.ndarray]:
    """Least-squares F with ``x2^T F x1 = 0`` from at least eight correspondences.

    Returns None when the normalized system is degenerate.
    """
    t1, t2 = _hartley(x1), _hartley(x2)
    p1 = _homog(x1) @ t1.T
    p2 = _homog(x2) @ t2.T
    a = np.einsum("ni,nj->nij", p2, p1).reshape(len(p1), 9)
    _, s, vt = np.linalg.svd(a)
    if len(s) >= 8 and s[7] <= 1e-12 * s[0]:
        return None
    f = vt[-1].reshape(3, 3)
    u, s, vt = np.linalg.svd(f)
    f = u @ np.diag([s[0], s[1], 0.0]) @ vt
    f = t2.T @ f @ t1
    if not np.all(np.isfinite(f)) or np.linalg.norm(f) == 0:
        return None
    return canonical_fundamental(f)


def symmetric_epipolar_distance(f: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """RMS of the two point-to-epipolar-line distances, in pixels."""
    h1, h2 = _homog(x1), _homog(x2)
    l2 = h1 @ f.T
    l1 = h2 @ f
    r = np.einsum("ij,ij->i", h2, l2)
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = r * r / (l2[:, 0] ** 2 + l2[:, 1] ** 2)
        d1 = r * r / (l1[:, 0] ** 2 + l1[:, 1] ** 2)
        out = np.sqrt(0.5 * (d1 + d2))
    return np.where(np.isfinite(out), out, np.inf)


def required_iterations(inlier_fraction: float, confidence: float, sample_size: int = MIN_SAMPLE) -> float:
    if inlier_fraction <= 0:
        return math.inf
    if inlier_fraction >= 1:
        return 1
    good = inlier_fraction**sample_size
    if good <= 0:
        return math.inf
    return math.log(1 - confidence) / math.log1p(-good)


def ransac_fundamental(
    x1: np.ndarray,
    x2: np.ndarray,
    max_iters: int = MAX_ITERS,
    threshold_px: float = EPIPOLAR_THRESHOLD_PX,
    confidence: float = CONFIDENCE,
    seed: int = 0,
    pair: Tuple[int, int] = (0, 0),
) -> InlierSet:
    """Robust F from putative correspondences ``x1[i] <-> x2[i]``.

    Raises:
        TooFewMatches: fewer than eight correspondences.
        NoModel: no hypothesis reached eight inliers.
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    n = len(x1)
    if n < MIN_SAMPLE:
        raise TooFewMatches(f"{n} matches, need {MIN_SAMPLE}")
    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = -1
    best_f = None
    needed = float(max_iters)
    it = 0
    while it < max_iters and it < needed:
        it += 1
        sample = rng.choice(n, MIN_SAMPLE, replace=False)
        f = eight_point(x1[sample], x2[sample])
        if f is None:
            continue
        mask = symmetric_epipolar_distance(f, x1, x2) < threshold_px
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask, best_f = count, mask, f
            needed = required_iterations(count / n, confidence)
    if best_f is None or best_count < MIN_SAMPLE:
        raise NoModel(f"best hypothesis has {max(best_count, 0)} inliers")

    refit = eight_point(x1[best_mask], x2[best_mask])
    if refit is not None:
        mask = symmetric_epipolar_distance(refit, x1, x2) < threshold_px
        if mask.sum() >= best_count:
            best_f, best_mask = refit, mask
    kept = np.flatnonzero(best_mask)
    return InlierSet(pair, kept, best_f, len(kept) / n, it)
