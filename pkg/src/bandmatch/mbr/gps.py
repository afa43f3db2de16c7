"""Gibbs-Poole-Stockmeyer bandwidth reduction on a view graph.

Runs per connected component. Components are laid out one after another,
largest first, and every tie (minimum degree, within-level order, component
order) goes to the smaller image id.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Set, Tuple

from ..errors import EmptyGraph
from ..retrieval.viewgraph import ViewGraph


@dataclass(frozen=True)
class LevelStructure:
    root: int
    levels: Tuple[Tuple[int, ...], ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def width(self) -> int:
        return max((len(l) for l in self.levels), default=0)

    def level_of(self) -> Dict[int, int]:
        return {v: i for i, lvl in enumerate(self.levels) for v in lvl}


@dataclass(frozen=True)
class PermutationOrder:
    """``perm[old_position] = new_position`` over the graph's current order."""

    perm: Tuple[int, ...]

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError("permutation must be a bijection over 0..n-1")

    @classmethod
    def from_new_order(cls, graph: ViewGraph, new_ids: Sequence[int]) -> "PermutationOrder":
        perm = [0] * len(graph)
        for new_pos, img in enumerate(new_ids):
            perm[graph.position(img)] = new_pos
        return cls(tuple(perm))

    def new_ids(self, graph: ViewGraph) -> List[int]:
        out = [0] * len(self.perm)
        for old_pos, new_pos in enumerate(self.perm):
            out[new_pos] = graph.image_ids[old_pos]
        return out

    def apply(self, graph: ViewGraph) -> ViewGraph:
        return graph.reordered(self.new_ids(graph))


def bandwidth(graph: ViewGraph) -> int:
    return graph.bandwidth()


def level_structure(graph: ViewGraph, root: int) -> LevelStructure:
    """Breadth-first layering of ``root``'s component; each level sorted by id."""
    seen = {root}
    frontier = [root]
    levels = []
    while frontier:
        levels.append(tuple(sorted(frontier)))
        nxt = []
        for v in frontier:
            for w in graph.neighbors(v):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return LevelStructure(root, tuple(levels))


def pseudo_peripheral_pair(graph: ViewGraph, nodes: Sequence[int]) -> Tuple[LevelStructure, LevelStructure]:
    """Iterate level structures from a minimum-degree start until depth stops growing."""
    key = lambda v: (graph.degree(v), v)
    u = min(nodes, key=key)
    lu = level_structure(graph, u)
    while True:
        v = min(lu.levels[-1], key=key)
        lv = level_structure(graph, v)
        if lv.depth > lu.depth:
            lu = lv
        else:
            return lu, lv


def combine_levels(graph: ViewGraph, lu: LevelStructure, lv: LevelStructure) -> List[List[int]]:
    """Merge the two rootings into one level structure.

    A node keeps its level when ``L(u)`` and the reversed ``L(v)`` agree.
    The rest splits into connected pieces; each piece, largest first, goes
    wholesale to whichever rooting gives the smaller maximum level width.
    """
    k = lu.depth
    at_u = lu.level_of()
    at_v = {x: k - 1 - l for x, l in lv.level_of().items()}
    level: Dict[int, int] = {}
    for x, l in at_u.items():
        if at_v.get(x) == l:
            level[x] = l
    widths = Counter(level.values())

    rest: Set[int] = set(at_u) - set(level)
    pieces = []
    while rest:
        start = min(rest)
        stack, piece = [start], {start}
        while stack:
            x = stack.pop()
            for w in graph.neighbors(x):
                if w in rest and w not in piece:
                    piece.add(w)
                    stack.append(w)
        rest -= piece
        pieces.append(sorted(piece))
    pieces.sort(key=lambda p: (-len(p), p[0]))

    prefer_u = lu.width <= lv.width
    for piece in pieces:
        cand_u = widths + Counter(at_u[x] for x in piece)
        cand_v = widths + Counter(at_v[x] for x in piece)
        wu, wv = max(cand_u.values()), max(cand_v.values())
        use_u = wu < wv or (wu == wv and prefer_u)
        src = at_u if use_u else at_v
        for x in piece:
            level[x] = src[x]
        widths = cand_u if use_u else cand_v

    out: List[List[int]] = [[] for _ in range(k)]
    for x, l in level.items():
        out[l].append(x)
    return [sorted(l) for l in out]


def number_levels(graph: ViewGraph, levels: List[List[int]], root: int) -> List[int]:
    """Number level by level.

    Within a level: first the nodes hanging off already-numbered nodes of the
    previous level (in that level's numbering order), then same-level
    neighbors of numbered nodes, then a fresh minimum-degree node whenever the
    level still has unreached members. Siblings are taken by (degree, id).
    """
    key = lambda v: (graph.degree(v), v)
    order: List[int] = []
    prev_seq: List[int] = []
    for lvl in levels:
        pending = set(lvl)
        seq: List[int] = []
        if root in pending:
            seq.append(root)
            pending.discard(root)
        for w in prev_seq:
            hang = sorted(pending.intersection(graph.neighbors(w)), key=key)
            seq += hang
            pending.difference_update(hang)
        i = 0
        while pending:
            while i < len(seq) and pending:
                hang = sorted(pending.intersection(graph.neighbors(seq[i])), key=key)
                seq += hang
                pending.difference_update(hang)
                i += 1
            if pending:
                fresh = min(pending, key=key)
                seq.append(fresh)
                pending.discard(fresh)
        order += seq
        prev_seq = seq
    return order


def _span_bandwidth(graph: ViewGraph, order: Sequence[int]) -> int:
    pos = {v: i for i, v in enumerate(order)}
    return max((abs(pos[a] - pos[b]) for a in order for b in graph.neighbors(a)), default=0)


def gps_component(graph: ViewGraph, nodes: Sequence[int]) -> List[int]:
    lu, lv = pseudo_peripheral_pair(graph, nodes)
    levels = combine_levels(graph, lu, lv)
    return number_levels(graph, levels, lu.root)


def gps_order(graph: ViewGraph, keep_if_worse: bool = True) -> PermutationOrder:
    """Bandwidth-reducing permutation of the graph's current order.

    With ``keep_if_worse`` a component keeps its current relative order if GPS
    would widen its band, so the result is never worse than the input.
    """
    if len(graph) == 0:
        raise EmptyGraph("cannot order an empty view graph")
    comps = graph.connected_components()
    comps.sort(key=lambda c: (-len(c), min(c)))
    new_ids: List[int] = []
    for comp in comps:
        if len(comp) <= 2:
            new_ids += sorted(comp, key=graph.position)
            continue
        ordered = gps_component(graph, comp)
        current = sorted(comp, key=graph.position)
        if keep_if_worse and _span_bandwidth(graph, ordered) > _span_bandwidth(graph, current):
            ordered = current
        new_ids += ordered
    return PermutationOrder.from_new_order(graph, new_ids)
