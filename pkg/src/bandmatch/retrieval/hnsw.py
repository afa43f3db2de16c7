"""Hierarchical navigable small world graph for approximate L2 search."""

from __future__ import annotations

import heapq
import math
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..errors import DimensionMismatch


class HnswIndex:
    """Layered proximity graph.

    ``layers[l]`` maps an internal node index to its neighbor list on layer
    ``l``. Layer 0 holds every node; a node inserted at level ``L`` appears on
    layers ``0..L``. Node levels are drawn from a seeded generator so the
    structure is reproducible for a fixed insertion order.

    Args:
        dim: vector dimension.
        M: max neighbors per node on layers above 0 (layer 0 allows ``2*M``).
        ef_construction: beam width while inserting.
        ef_search: default beam width while searching.
        seed: seed for the level generator.
    """

    def __init__(self, dim: int, M: int = 16, ef_construction: int = 200, ef_search: int = 64, seed: int = 0):
        if M < 2:
            raise ValueError("M must be >= 2")
        self.dim = int(dim)
        self.M = int(M)
        self.M0 = 2 * self.M
        self.ef_construction = int(ef_construction)
        self.ef_search = int(ef_search)
        self._level_mult = 1.0 / math.log(self.M)
        self._rng = np.random.default_rng(seed)
        self._data = np.zeros((16, self.dim), dtype=np.float32)
        self._ids: List[int] = []
        self._id_to_node: Dict[int, int] = {}
        self.layers: List[Dict[int, List[int]]] = []
        self.entry_point: Optional[int] = None

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> List[int]:
        return list(self._ids)

    def vector(self, external_id: int) -> np.ndarray:
        return self._data[self._id_to_node[external_id]]

    # -- distances -----------------------------------------------------------

    def _dist(self, q: np.ndarray, nodes: Sequence[int]) -> np.ndarray:
        diff = self._data[list(nodes)].astype(np.float64) - q
        return np.einsum("ij,ij->i", diff, diff)

    # -- core search ---------------------------------------------------------

    def _search_layer(
        self, q: np.ndarray, entries: Sequence[int], ef: int, layer: int, visited: Optional[Set[int]] = None
    ) -> List[Tuple[float, int]]:
        graph = self.layers[layer]
        if visited is None:
            visited = set()
        entries = [e for e in entries if e not in visited]
        visited.update(entries)
        if not entries:
            return []
        d0 = self._dist(q, entries)
        candidates = [(float(d), e) for d, e in zip(d0, entries)]
        heapq.heapify(candidates)
        results = [(-float(d), e) for d, e in zip(d0, entries)]
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)
        while candidates:
            dc, c = heapq.heappop(candidates)
            if len(results) >= ef and dc > -results[0][0]:
                break
            fresh = [n for n in graph[c] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for dn, n in zip(self._dist(q, fresh), fresh):
                dn = float(dn)
                if len(results) < ef or dn < -results[0][0]:
                    heapq.heappush(candidates, (dn, n))
                    heapq.heappush(results, (-dn, n))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted((-d, n) for d, n in results)

    def _select_neighbors(self, base: int, candidates: List[Tuple[float, int]], m: int) -> List[int]:
        """Diversity heuristic, back-filled with the nearest pruned candidates."""
        kept: List[int] = []
        pruned: List[int] = []
        for d, c in sorted(candidates):
            if len(kept) >= m:
                break
            if kept:
                to_kept = self._dist(self._data[c], kept)
                if np.any(to_kept < d):
                    pruned.append(c)
                    continue
            kept.append(c)
        for c in pruned:
            if len(kept) >= m:
                break
            kept.append(c)
        return kept

    # -- public API ----------------------------------------------------------

    def insert(self, external_id: int, vector) -> None:
        v = np.asarray(vector, dtype=np.float32).ravel()
        if v.shape[0] != self.dim:
            raise DimensionMismatch(f"vector has dimension {v.shape[0]}, index expects {self.dim}")
        if external_id in self._id_to_node:
            raise ValueError(f"id {external_id} already indexed")
        node = len(self._ids)
        if node == len(self._data):
            grown = np.zeros((2 * len(self._data), self.dim), dtype=np.float32)
            grown[:node] = self._data[:node]
            self._data = grown
        self._data[node] = v
        self._ids.append(int(external_id))
        self._id_to_node[int(external_id)] = node

        level = int(-math.log(1.0 - self._rng.random()) * self._level_mult)
        while len(self.layers) <= level:
            self.layers.append({})
        for l in range(level + 1):
            self.layers[l][node] = []
        if self.entry_point is None:
            self.entry_point = node
            return

        top = self._top_level()
        ep = [self.entry_point]
        for l in range(top, level, -1):
            ep = [self._search_layer(v, ep, 1, l)[0][1]]
        for l in range(min(top, level), -1, -1):
            found = self._search_layer(v, ep, self.ef_construction, l)
            m_max = self.M0 if l == 0 else self.M
            nbrs = self._select_neighbors(node, found, self.M)
            graph = self.layers[l]
            graph[node] = list(nbrs)
            for n in nbrs:
                graph[n].append(node)
                if len(graph[n]) > m_max:
                    cand = [(float(d), c) for d, c in zip(self._dist(self._data[n], graph[n]), graph[n])]
                    graph[n] = self._select_neighbors(n, cand, m_max)
            ep = [n for _, n in found]
        if level > top:
            self.entry_point = node

    def _top_level(self) -> int:
        for l in range(len(self.layers) - 1, -1, -1):
            if self.entry_point in self.layers[l]:
                return l
        return 0

    def search(self, query, top_n: int, ef: Optional[int] = None) -> List[Tuple[int, float]]:
        """Up to ``top_n`` (id, L2 distance) pairs, nearest first.

        When the beam width covers the whole index the layer-0 search is
        re-seeded from every node it could not reach, so the answer is exact.
        """
        q = np.asarray(query, dtype=np.float32).astype(np.float64).ravel()
        if q.shape[0] != self.dim:
            raise DimensionMismatch(f"query has dimension {q.shape[0]}, index expects {self.dim}")
        if top_n <= 0 or self.entry_point is None:
            return []
        ef = max(self.ef_search if ef is None else ef, top_n)
        ep = [self.entry_point]
        for l in range(self._top_level(), 0, -1):
            ep = [self._search_layer(q, ep, 1, l)[0][1]]
        visited: Set[int] = set()
        found = self._search_layer(q, ep, ef, 0, visited)
        if ef >= len(self) and len(visited) < len(self):
            merged = dict((n, d) for d, n in found)
            for node in range(len(self)):
                if node not in visited:
                    for d, n in self._search_layer(q, [node], ef, 0, visited):
                        merged[n] = d
            found = sorted((d, n) for n, d in merged.items())
        found.sort(key=lambda t: (t[0], self._ids[t[1]]))
        return [(self._ids[n], math.sqrt(max(d, 0.0))) for d, n in found[:top_n]]

    def check_invariants(self) -> None:
        for l, graph in enumerate(self.layers):
            for node, nbrs in graph.items():
                assert 0 <= node < len(self)
                for n in nbrs:
                    assert n in graph, f"edge {node}->{n} leaves layer {l}"
            if l > 0:
                assert set(graph) <= set(self.layers[l - 1])
        if self.entry_point is not None:
            assert self.entry_point in self.layers[-1]


def hnsw_insert(index: HnswIndex, id: int, vector) -> None:
    index.insert(id, vector)


def hnsw_search(index: HnswIndex, query, top_n: int) -> List[Tuple[int, float]]:
    return index.search(query, top_n)


def brute_force_search(vectors: Dict[int, np.ndarray], query, top_n: int) -> List[Tuple[int, float]]:
    """Exact reference search over a dict of id -> vector."""
    q = np.asarray(query, dtype=np.float32).astype(np.float64).ravel()
    scored = []
    for i, v in vectors.items():
        diff = np.asarray(v, dtype=np.float32).astype(np.float64) - q
        scored.append((float(np.dot(diff, diff)), i))
    scored.sort()
    return [(i, math.sqrt(d)) for d, i in scored[: max(top_n, 0)]]
