"""Spatial angular order consistency of matches.

For each match the nearest other matches are found on both images, listed in
angular order around the match, and the two cyclic lists are compared with
the cyclic edit distance. Matches whose neighborhoods disagree are dropped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay, QhullError

from ..errors import CoincidentPoint
from ..hashmatch import PairMatches

log = logging.getLogger(__name__)

N_NEIGHBORS = 6
SCORE_THRESHOLD = 0.5

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class NeighborOrder:
    center: int
    ring: Tuple[int, ...]


@dataclass(frozen=True)
class SaoScore:
    match_index: int
    score: float


@dataclass(frozen=True)
class SaoResult:
    matches: PairMatches
    scores: np.ndarray
    # too few matches to score; everything passed through
    passthrough: bool = False
    # at least one image fell back to plain Euclidean neighbors
    fallback: bool = False


def _euclidean_knn(points: np.ndarray, n_neighbors: int) -> List[np.ndarray]:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    out = []
    idx = np.arange(len(points))
    for i in range(len(points)):
        ok = d[i] > 0
        cand = idx[ok]
        order = np.lexsort((cand, d[i][ok]))
        out.append(cand[order[:n_neighbors]])
    return out


def knn_from_delaunay(points: np.ndarray, n_neighbors: int = N_NEIGHBORS) -> Tuple[List[np.ndarray], bool]:
    """Neighbors of every point by breadth-first rings over the Delaunay graph.

    Rings are consumed nearest-ring first; inside a ring candidates are taken
    by Euclidean distance, then index. Points sharing a position are never
    each other's neighbors. With fewer than three distinct or only collinear
    positions the plain Euclidean k nearest neighbors are used instead.

    Returns:
        (per-point neighbor index arrays, True if the fallback was used)
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return [], False
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    try:
        if len(uniq) < 3:
            raise QhullError("fewer than three distinct points")
        tri = Delaunay(uniq)
    except QhullError:
        return _euclidean_knn(pts, n_neighbors), True

    indptr, nbr = tri.vertex_neighbor_vertices
    members: List[List[int]] = [[] for _ in range(len(uniq))]
    for i, u in enumerate(inverse):
        members[u].append(i)

    out = []
    for i in range(n):
        home = inverse[i]
        seen = {home}
        frontier = [home]
        found: List[int] = []
        while frontier and len(found) < n_neighbors:
            ring = set()
            for v in frontier:
                for w in nbr[indptr[v] : indptr[v + 1]]:
                    if w not in seen:
                        seen.add(w)
                        ring.add(int(w))
            frontier = sorted(ring)
            cand = [j for v in frontier for j in members[v]]
            if cand:
                c = np.array(cand)
                dist = np.linalg.norm(pts[c] - pts[i], axis=1)
                found.extend(c[np.lexsort((c, dist))].tolist())
        out.append(np.array(found[:n_neighbors], dtype=np.int64))
    return out, False


def angular_order(center: Sequence[float], neighbors: np.ndarray, ids: Sequence[int] = None) -> Tuple[int, ...]:
    """Neighbor ids sorted by angle from the +x axis in [0, 2pi), ties by distance.

    Args:
        center: (x, y) of the point being described.
        neighbors: (k, 2) neighbor positions.
        ids: labels to emit; defaults to ``range(k)``.
    """
    nb = np.asarray(neighbors, dtype=np.float64).reshape(-1, 2)
    if len(nb) == 0:
        raise ValueError("angular_order needs at least one neighbor")
    d = nb - np.asarray(center, dtype=np.float64)
    dist = np.hypot(d[:, 0], d[:, 1])
    if np.any(dist == 0):
        raise CoincidentPoint("a neighbor coincides with the center")
    ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), TWO_PI)
    ids = np.arange(len(nb)) if ids is None else np.asarray(ids)
    order = np.lexsort((ids, dist, ang))
    return tuple(int(x) for x in ids[order])


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def ced(a: Sequence[int], b: Sequence[int]) -> int:
    """Cyclic edit distance: fewest unit edits from ``a`` to any rotation of ``b``."""
    a, b = tuple(a), tuple(b)
    if not b:
        return len(a)
    return min(levenshtein(a, b[k:] + b[:k]) for k in range(len(b)))


def ced_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise :func:`ced` for equal-length integer sequences, (B, La) and (B, Lb)."""
    a = np.asarray(a)
    b = np.asarray(b)
    n_rows, la = a.shape
    lb = b.shape[1]
    if lb == 0:
        return np.full(n_rows, la, dtype=np.int64)
    # every rotation of b becomes its own row
    rot = np.stack([np.roll(b, -k, axis=1) for k in range(lb)], axis=1).reshape(n_rows * lb, lb)
    aa = np.repeat(a, lb, axis=0)
    prev = np.broadcast_to(np.arange(lb + 1), (n_rows * lb, lb + 1)).copy()
    for i in range(1, la + 1):
        cur = np.empty_like(prev)
        cur[:, 0] = i
        sub = aa[:, i - 1, None] != rot
        for j in range(1, lb + 1):
            cur[:, j] = np.minimum(np.minimum(prev[:, j] + 1, cur[:, j - 1] + 1), prev[:, j - 1] + sub[:, j - 1])
        prev = cur
    return prev[:, lb].reshape(n_rows, lb).min(axis=1)


def neighbor_orders(points: np.ndarray, n_neighbors: int = N_NEIGHBORS) -> Tuple[List[NeighborOrder], bool]:
    pts = np.asarray(points, dtype=np.float64)
    knn, fallback = knn_from_delaunay(pts, n_neighbors)
    orders = []
    for i, nb in enumerate(knn):
        ring = angular_order(pts[i], pts[nb], nb) if len(nb) else ()
        orders.append(NeighborOrder(i, ring))
    return orders, fallback


def sao_scores(points_q: np.ndarray, points_t: np.ndarray, n_neighbors: int = N_NEIGHBORS) -> Tuple[np.ndarray, bool]:
    """Dissimilarity of every match's two neighbor rings, in [0, 1].

    ``points_q[i]`` and ``points_t[i]`` are the two ends of match ``i``; rings
    are expressed in match indices so they share one alphabet.
    """
    oq, fq = neighbor_orders(points_q, n_neighbors)
    ot, ft = neighbor_orders(points_t, n_neighbors)
    n = len(oq)
    dist = np.zeros(n, dtype=np.int64)
    full = [i for i in range(n) if len(oq[i].ring) == n_neighbors and len(ot[i].ring) == n_neighbors]
    if full:
        a = np.array([oq[i].ring for i in full])
        b = np.array([ot[i].ring for i in full])
        dist[full] = ced_batch(a, b)
    for i in set(range(n)).difference(full):
        dist[i] = ced(oq[i].ring, ot[i].ring)
    return np.minimum(dist / n_neighbors, 1.0), fq or ft


def sao_filter(
    pm: PairMatches,
    positions_q: np.ndarray,
    positions_t: np.ndarray,
    n_neighbors: int = N_NEIGHBORS,
    score_threshold: float = SCORE_THRESHOLD,
    progressive: bool = True,
) -> SaoResult:
    """Keep the matches whose angular-order score is at most ``score_threshold``.

    With ``progressive`` the cut is approached from above: at each level
    ``(N-1)/N, (N-2)/N, ...`` down to the threshold, matches scoring above the
    level are dropped and the survivors are re-scored until none is above it.
    Rings are rebuilt from survivors only, so gross outliers stop polluting
    the neighborhoods of good matches. Without it one scoring pass is made.

    Args:
        pm: initial matches, rows (query feature, train feature).
        positions_q: (n, 2) keypoint positions of the query image.
        positions_t: (n, 2) keypoint positions of the train image.

    Returns:
        surviving matches; ``scores[i]`` is match ``i``'s score when it was
        last evaluated.
    """
    n = len(pm)
    if n < n_neighbors + 1:
        return SaoResult(pm, np.zeros(n), passthrough=True)
    pq = np.asarray(positions_q, dtype=np.float64)[pm.matches[:, 0]]
    pt = np.asarray(positions_t, dtype=np.float64)[pm.matches[:, 1]]
    if progressive:
        levels = [k / n_neighbors for k in range(n_neighbors - 1, 0, -1) if k / n_neighbors > score_threshold]
    else:
        levels = []
    levels.append(score_threshold)

    alive = np.arange(n)
    scores = np.zeros(n)
    fallback = False
    for level in levels:
        while len(alive) >= n_neighbors + 1:
            sc, fb = sao_scores(pq[alive], pt[alive], n_neighbors)
            fallback |= fb
            scores[alive] = sc
            bad = sc > level
            if not bad.any():
                break
            alive = alive[~bad]
            if not progressive:
                break
    if fallback:
        log.debug("pair %s: degenerate layout, Euclidean neighbors used", pm.pair)
    keep = np.zeros(n, dtype=bool)
    keep[alive] = True
    return SaoResult(PairMatches(pm.pair, pm.matches[keep], pm.stage), scores, False, fallback)
