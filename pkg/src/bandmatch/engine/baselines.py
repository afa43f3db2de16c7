"""Reference schedules in the same plan format as the band-reduced one.

* ``sequential``: every pair is its own iteration, so both images are loaded
  and freed per pair.
* ``load_free_list``: images are visited in their given order through a FIFO
  window of ``size_gpu`` images; each arriving image is matched against the
  window. Pairs that fall out of the window are retried in further passes; a
  pass that covers nothing streams one image's partners past it instead.
* ``group_block``: the order is cut into groups of ``size_gpu // 2`` images;
  group ``A`` is paired with every group ``B >= A`` while ``A`` stays resident.
"""

from __future__ import annotations

from collections import deque
from typing import Dict, List, Tuple

from ..errors import BudgetTooSmall, NonTermination
from ..mbr import ScheduleBlock, ScheduleIteration, SchedulePlan, iterate_schedule
from ..retrieval.viewgraph import ViewGraph, norm_pair

Pair = Tuple[int, int]

STRATEGIES = ("sequential", "load_free_list", "group_block", "mbr")


def _single_block_row(row_index: int, col_index: int, row_ids, col_ids, pairs) -> Tuple[ScheduleBlock, ...]:
    return (ScheduleBlock(row_index, col_index, tuple(row_ids), tuple(col_ids), tuple(pairs)),)


def plan_sequential(graph: ViewGraph, size_gpu: int) -> SchedulePlan:
    if size_gpu < 2:
        raise BudgetTooSmall("sequential matching needs room for two images")
    its = []
    for a, b in graph.pairs():
        row = _single_block_row(0, 0, (a,), (b,), [(a, b)])
        its.append(ScheduleIteration((row,), (a, b)))
    return SchedulePlan(tuple(its), 1, size_gpu, "sequential")


def plan_load_free_list(graph: ViewGraph, size_gpu: int) -> SchedulePlan:
    if size_gpu < 2:
        raise BudgetTooSmall("load/free list needs room for two images")
    remaining = graph.without_pairs(())
    its = []
    cap = max(1, remaining.num_pairs)
    while remaining.num_pairs:
        if len(its) >= cap:
            raise NonTermination("load/free list did not converge")
        window: deque = deque()
        rows = []
        covered: List[Pair] = []
        for v in remaining.image_ids:
            if len(window) == size_gpu:
                window.popleft()
            partners = [u for u in window if remaining.has_pair(u, v)]
            window.append(v)
            if partners:
                pairs = [norm_pair(u, v) for u in partners]
                rows.append(_single_block_row(len(rows), len(rows), (v,), tuple(partners), pairs)[0])
                covered.extend(pairs)
        if not covered:
            # far pairs only: keep one image resident and stream its partners past it
            a = remaining.pairs()[0][0]
            for b in sorted(remaining.neighbors(a), key=remaining.position):
                pair = norm_pair(a, b)
                rows.append(ScheduleBlock(len(rows), len(rows), (b,), (a,), (pair,)))
                covered.append(pair)
        its.append(ScheduleIteration(tuple((blk,) for blk in rows), tuple(remaining.image_ids)))
        remaining = remaining.without_pairs(covered)
    return SchedulePlan(tuple(its), 1, size_gpu, "load_free_list")


def plan_group_block(graph: ViewGraph, size_gpu: int) -> SchedulePlan:
    group = size_gpu // 2
    if group < 1:
        raise BudgetTooSmall("group/block needs room for two groups of at least one image")
    ids = graph.image_ids
    groups = [ids[i : i + group] for i in range(0, len(ids), group)]
    gindex = {img: gi for gi, g in enumerate(groups) for img in g}
    buckets: Dict[Tuple[int, int], List[Pair]] = {}
    for a, b in graph.pairs():
        ga, gb = gindex[a], gindex[b]
        buckets.setdefault((min(ga, gb), max(ga, gb)), []).append((a, b))
    its = []
    for ga in range(len(groups)):
        rows = []
        for gb in range(ga, len(groups)):
            pairs = buckets.get((ga, gb))
            if pairs:
                rows.append(_single_block_row(ga, gb, groups[ga], groups[gb], sorted(pairs)))
        if rows:
            its.append(ScheduleIteration(tuple(rows), tuple(ids)))
    return SchedulePlan(tuple(its), group, size_gpu, "group_block")


def plan_baseline(graph: ViewGraph, strategy: str, size_gpu: int, size_blk: int = 1) -> SchedulePlan:
    """Plan ``graph`` with one of :data:`STRATEGIES`; ``size_blk`` only matters for ``mbr``."""
    if strategy == "sequential":
        return plan_sequential(graph, size_gpu)
    if strategy == "load_free_list":
        return plan_load_free_list(graph, size_gpu)
    if strategy == "group_block":
        return plan_group_block(graph, size_gpu)
    if strategy == "mbr":
        return iterate_schedule(graph, size_blk, size_gpu)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
