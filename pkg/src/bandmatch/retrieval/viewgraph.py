"""Symmetric sparse view graph over image ids, in a mutable display order."""

from __future__ import annotations

import enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..errors import FormatError

Pair = Tuple[int, int]


def norm_pair(a: int, b: int) -> Pair:
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


class PairState(enum.Enum):
    UNPROCESSED = "unprocessed"
    PROCESSED = "processed"


class ViewGraph:
    """Images as vertices, match pairs as edges.

    ``image_ids`` is the current matrix order (the id list); row/column ``k`` of
    :meth:`adjacency` belongs to ``image_ids[k]``. Edges are stored by image id,
    so permuting the order never touches them.
    """

    def __init__(self, image_ids: Sequence[int], pairs: Iterable[Pair] = ()):
        self.image_ids: Tuple[int, ...] = tuple(int(i) for i in image_ids)
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError("duplicate image ids in view graph")
        self._pos: Dict[int, int] = {img: k for k, img in enumerate(self.image_ids)}
        self._adj: Dict[int, Set[int]] = {img: set() for img in self.image_ids}
        for a, b in pairs:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self pair ({a}, {a}) not allowed")
            if a not in self._pos or b not in self._pos:
                raise ValueError(f"pair ({a}, {b}) references an unknown image")
            self._adj[a].add(b)
            self._adj[b].add(a)
        self.pair_payload: Dict[Pair, PairState] = {p: PairState.UNPROCESSED for p in self.pairs()}

    # -- structure ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.image_ids)

    def __repr__(self) -> str:
        return f"ViewGraph(n={len(self)}, pairs={self.num_pairs})"

    def pairs(self) -> List[Pair]:
        """All pairs as (smaller id, larger id), sorted."""
        out = [(a, b) for a, nbrs in self._adj.items() for b in nbrs if a < b]
        out.sort()
        return out

    @property
    def num_pairs(self) -> int:
        return sum(len(n) for n in self._adj.values()) // 2

    def neighbors(self, image_id: int) -> Set[int]:
        return self._adj[image_id]

    def degree(self, image_id: int) -> int:
        return len(self._adj[image_id])

    def position(self, image_id: int) -> int:
        return self._pos[image_id]

    def has_pair(self, a: int, b: int) -> bool:
        return b in self._adj.get(a, ())

    def adjacency(self) -> sp.csr_matrix:
        """Boolean adjacency in the current order (symmetric, zero diagonal)."""
        n = len(self)
        rows, cols = [], []
        for a, b in self.pairs():
            i, j = self._pos[a], self._pos[b]
            rows += [i, j]
            cols += [j, i]
        data = np.ones(len(rows), dtype=bool)
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n), dtype=bool)

    def bandwidth(self) -> int:
        """max |i - j| over edges in the current order; 0 for an edgeless graph."""
        best = 0
        for a, nbrs in self._adj.items():
            pa = self._pos[a]
            for b in nbrs:
                d = abs(pa - self._pos[b])
                if d > best:
                    best = d
        return best

    def connected_components(self) -> List[List[int]]:
        """Components as lists of image ids, each in current-order sequence."""
        seen: Set[int] = set()
        comps = []
        for start in self.image_ids:
            if start in seen:
                continue
            stack = [start]
            seen.add(start)
            comp = []
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self._adj[v]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comp.sort(key=self._pos.__getitem__)
            comps.append(comp)
        return comps

    # -- derived graphs ----------------------------------------------------

    def reordered(self, image_ids: Sequence[int]) -> "ViewGraph":
        """Same edges under a new order (must be a permutation of the ids)."""
        if sorted(image_ids) != sorted(self.image_ids):
            raise ValueError("reordering must be a permutation of the current ids")
        g = ViewGraph(image_ids, self.pairs())
        g.pair_payload = dict(self.pair_payload)
        return g

    def without_pairs(self, done: Iterable[Pair], drop_isolated: bool = True) -> "ViewGraph":
        """Remove pairs, then optionally drop images left without any pair."""
        done_set = {norm_pair(*p) for p in done}
        remaining = [p for p in self.pairs() if p not in done_set]
        if drop_isolated:
            alive = {i for p in remaining for i in p}
            ids = [i for i in self.image_ids if i in alive]
        else:
            ids = list(self.image_ids)
        return ViewGraph(ids, remaining)

    def mark_processed(self, pairs: Iterable[Pair]) -> None:
        for p in pairs:
            p = norm_pair(*p)
            if p not in self.pair_payload:
                raise KeyError(f"pair {p} not in view graph")
            self.pair_payload[p] = PairState.PROCESSED

    def unprocessed_pairs(self) -> List[Pair]:
        return sorted(p for p, s in self.pair_payload.items() if s is PairState.UNPROCESSED)

    def check_invariants(self) -> None:
        adj = self.adjacency()
        assert (adj != adj.T).nnz == 0, "adjacency not symmetric"
        assert not adj.diagonal().any(), "nonzero diagonal"
        assert adj.shape == (len(self), len(self))


# --------------------------------------------------------------------------
# Matrix Market (coordinate, pattern, symmetric)

PathLike = Union[str, Path]
_MM_BANNER = "%%MatrixMarket matrix coordinate pattern symmetric"


def write_matrix_market(path: PathLike, graph: ViewGraph, comments: Sequence[str] = ()) -> None:
    """Lower-triangle entries, 1-based positions in the current order.

    Image ids ride along in ``% image_ids`` comment lines so the order survives
    a round trip. Each of ``comments`` becomes one further ``%`` line.
    """
    lines = [_MM_BANNER]
    lines += ["% " + c.replace("\n", " ") for c in comments]
    ids = list(graph.image_ids)
    for k in range(0, len(ids), 32):
        lines.append("% image_ids " + " ".join(str(i) for i in ids[k : k + 32]))
    entries = []
    for a, b in graph.pairs():
        i, j = graph.position(a), graph.position(b)
        entries.append((max(i, j) + 1, min(i, j) + 1))
    entries.sort(key=lambda e: (e[1], e[0]))
    lines.append(f"{len(ids)} {len(ids)} {len(entries)}")
    lines += [f"{r} {c}" for r, c in entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_market(path: PathLike) -> ViewGraph:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].lower().startswith("%%matrixmarket matrix coordinate"):
        raise FormatError(f"{path}: not a Matrix Market coordinate file")
    # a general (non-symmetric) pattern is symmetrized: M_ij or M_ji marks the pair
    ids: List[int] = []
    k = 1
    while k < len(text) and (text[k].startswith("%") or not text[k].strip()):
        line = text[k]
        if line.startswith("% image_ids"):
            ids += [int(t) for t in line.split()[2:]]
        k += 1
    if k >= len(text):
        raise FormatError(f"{path}: missing size line")
    try:
        nrows, ncols, nnz = (int(t) for t in text[k].split()[:3])
    except ValueError as exc:
        raise FormatError(f"{path}: bad size line {text[k]!r}") from exc
    if nrows != ncols:
        raise FormatError(f"{path}: view graph must be square, got {nrows}x{ncols}")
    if not ids:
        ids = list(range(nrows))
    if len(ids) != nrows:
        raise FormatError(f"{path}: {len(ids)} image ids for {nrows} rows")
    pairs = set()
    body = [l for l in text[k + 1 :] if l.strip() and not l.startswith("%")]
    if len(body) != nnz:
        raise FormatError(f"{path}: expected {nnz} entries, found {len(body)}")
    for line in body:
        parts = line.split()
        r, c = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= r < nrows and 0 <= c < nrows):
            raise FormatError(f"{path}: entry {line!r} out of range")
        if r != c:
            pairs.add(norm_pair(ids[r], ids[c]))
    return ViewGraph(ids, sorted(pairs))


def graph_from_pairs(pairs: Iterable[Pair], image_ids: Optional[Sequence[int]] = None) -> ViewGraph:
    pairs = sorted({norm_pair(*p) for p in pairs})
    if image_ids is None:
        image_ids = sorted({i for p in pairs for i in p})
    return ViewGraph(image_ids, pairs)
