"""Schedule blocks cut from the band-reduced matrix, and the iterative planner."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..errors import BudgetTooSmall, NonTermination
from ..retrieval.viewgraph import ViewGraph, norm_pair
from .gps import gps_order

Pair = Tuple[int, int]


@dataclass(frozen=True)
class ScheduleBlock:
    row_index: int
    col_index: int
    row_images: Tuple[int, ...]
    col_images: Tuple[int, ...]
    pairs: Tuple[Pair, ...]

    def images(self) -> set:
        return {i for p in self.pairs for i in p}

    def to_dict(self) -> dict:
        return {
            "row": self.row_index,
            "col": self.col_index,
            "row_images": list(self.row_images),
            "col_images": list(self.col_images),
            "pairs": [list(p) for p in self.pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleBlock":
        return cls(
            int(d["row"]),
            int(d["col"]),
            tuple(d["row_images"]),
            tuple(d["col_images"]),
            tuple((int(a), int(b)) for a, b in d["pairs"]),
        )


BlockRow = Tuple[ScheduleBlock, ...]


@dataclass(frozen=True)
class ScheduleIteration:
    rows: Tuple[BlockRow, ...]
    # image id list in the order the blocks were cut from
    order: Tuple[int, ...] = ()
    bandwidth_before: int = 0
    bandwidth_after: int = 0

    @property
    def dimension(self) -> int:
        return len(self.order)

    def pairs(self) -> List[Pair]:
        return [p for row in self.rows for b in row for p in b.pairs]

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "bandwidth_before": self.bandwidth_before,
            "bandwidth_after": self.bandwidth_after,
            "order": list(self.order),
            "rows": [[b.to_dict() for b in row] for row in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleIteration":
        rows = tuple(tuple(ScheduleBlock.from_dict(b) for b in row) for row in d["rows"])
        return cls(rows, tuple(d.get("order", ())), int(d.get("bandwidth_before", 0)), int(d.get("bandwidth_after", 0)))


@dataclass(frozen=True)
class SchedulePlan:
    """Iterations -> block rows -> blocks.

    ``size_blk`` is images per block and ``size_gpu`` the most images that may
    be device-resident at once.
    """

    iterations: Tuple[ScheduleIteration, ...]
    size_blk: int
    size_gpu: int
    strategy: str = "mbr"

    def pairs(self) -> List[Pair]:
        return [p for it in self.iterations for p in it.pairs()]

    @property
    def num_pairs(self) -> int:
        return len(self.pairs())

    @property
    def num_blocks(self) -> int:
        return sum(len(row) for it in self.iterations for row in it.rows)

    @property
    def num_rows(self) -> int:
        return sum(len(it.rows) for it in self.iterations)

    def dimensions(self) -> List[int]:
        return [it.dimension for it in self.iterations]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "size_blk": self.size_blk,
            "size_gpu": self.size_gpu,
            "num_pairs": self.num_pairs,
            "num_blocks": self.num_blocks,
            "iterations": [it.to_dict() for it in self.iterations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchedulePlan":
        its = tuple(ScheduleIteration.from_dict(x) for x in d["iterations"])
        return cls(its, int(d["size_blk"]), int(d["size_gpu"]), d.get("strategy", "mbr"))


def write_plan(path: Union[str, Path], plan: SchedulePlan, extra: Optional[dict] = None) -> None:
    doc = plan.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_plan(path: Union[str, Path]) -> SchedulePlan:
    return SchedulePlan.from_dict(json.loads(Path(path).read_text()))


def chunks_per_row(size_blk: int, size_gpu: int) -> int:
    if size_blk < 1:
        raise BudgetTooSmall("size_blk must be >= 1")
    if size_gpu < 2 * size_blk:
        raise BudgetTooSmall(f"size_gpu={size_gpu} cannot hold two blocks of {size_blk} images")
    return size_gpu // size_blk


def generate_blocks(graph: ViewGraph, size_blk: int, size_gpu: int) -> Tuple[Tuple[BlockRow, ...], List[Pair]]:
    """Cut one iteration of block rows from a graph already in band-reduced order.

    The order is split into chunks of ``size_blk`` images. A pair whose two
    chunks are at most ``size_gpu // size_blk - 1`` apart lands in the block
    (lower chunk, higher chunk); anything farther out is returned as deferred.

    Returns:
        (block rows ordered by row chunk, deferred pairs)
    """
    span = chunks_per_row(size_blk, size_gpu)
    ids = graph.image_ids
    buckets: Dict[Tuple[int, int], List[Tuple[int, int, Pair]]] = {}
    deferred: List[Pair] = []
    for a, b in graph.pairs():
        pa, pb = graph.position(a), graph.position(b)
        lo, hi = min(pa, pb), max(pa, pb)
        ci, cj = lo // size_blk, hi // size_blk
        if cj - ci < span:
            buckets.setdefault((ci, cj), []).append((lo, hi, (a, b)))
        else:
            deferred.append((a, b))

    def chunk(c: int) -> Tuple[int, ...]:
        return tuple(ids[c * size_blk : (c + 1) * size_blk])

    rows: Dict[int, List[ScheduleBlock]] = {}
    for (ci, cj) in sorted(buckets):
        entries = sorted(buckets[(ci, cj)])
        block = ScheduleBlock(ci, cj, chunk(ci), chunk(cj), tuple(p for _, _, p in entries))
        rows.setdefault(ci, []).append(block)
    return tuple(tuple(rows[i]) for i in sorted(rows)), deferred


def iterate_schedule(graph: ViewGraph, size_blk: int = 400, size_gpu: int = 800) -> SchedulePlan:
    """Reorder, cut blocks, retire covered pairs and empty images; repeat until no pair is left."""
    chunks_per_row(size_blk, size_gpu)
    remaining = graph.without_pairs(())
    cap = max(1, remaining.num_pairs)
    iterations: List[ScheduleIteration] = []
    while remaining.num_pairs:
        if len(iterations) >= cap:
            raise NonTermination(f"schedule did not converge within {cap} iterations")
        before = remaining.bandwidth()
        mbr = gps_order(remaining).apply(remaining)
        rows, _ = generate_blocks(mbr, size_blk, size_gpu)
        if not rows:
            # every remaining pair sits beyond the row span: a dense leftover
            # under a tight budget
            mbr = gps_order(remaining, keep_if_worse=False).apply(remaining)
            rows, _ = generate_blocks(mbr, size_blk, size_gpu)
        if not rows:
            mbr = mbr.reordered(_pull_closest_pair(mbr))
            rows, _ = generate_blocks(mbr, size_blk, size_gpu)
        covered = [p for row in rows for b in row for p in b.pairs]
        if not _retires_image(remaining, covered):
            alt = mbr.reordered(_centered_on_min_degree(mbr, size_blk, size_gpu))
            alt_rows, _ = generate_blocks(alt, size_blk, size_gpu)
            alt_covered = [p for row in alt_rows for b in row for p in b.pairs]
            if _retires_image(remaining, alt_covered):
                mbr, rows, covered = alt, alt_rows, alt_covered
        if not covered:
            raise NonTermination("an iteration covered no pairs")
        iterations.append(ScheduleIteration(rows, mbr.image_ids, before, mbr.bandwidth()))
        remaining = mbr.without_pairs(covered)
    return SchedulePlan(tuple(iterations), size_blk, size_gpu, "mbr")


def _pull_closest_pair(graph: ViewGraph) -> List[int]:
    """Order with the endpoints of the tightest pair made adjacent."""
    a, b = min(graph.pairs(), key=lambda p: (abs(graph.position(p[0]) - graph.position(p[1])), p))
    lo, hi = sorted((a, b), key=graph.position)
    order = [i for i in graph.image_ids if i != hi]
    order.insert(order.index(lo) + 1, hi)
    return order


def _retires_image(graph: ViewGraph, covered: Sequence[Pair]) -> bool:
    hits: Dict[int, int] = {}
    for a, b in covered:
        hits[a] = hits.get(a, 0) + 1
        hits[b] = hits.get(b, 0) + 1
    return any(graph.degree(i) == k for i, k in hits.items())


def _centered_on_min_degree(graph: ViewGraph, size_blk: int, size_gpu: int) -> List[int]:
    """Order that puts the lowest-degree image at the start of chunk ``span - 1``.

    Its neighbors fill the chunks on both sides, so every one of its pairs is
    in band when its degree is at most ``(2 * span - 1) * size_blk - 1``.
    """
    span = size_gpu // size_blk
    u = min(graph.image_ids, key=lambda v: (graph.degree(v), v))
    nbrs = sorted(graph.neighbors(u), key=graph.position)
    n_before = min(len(nbrs), (span - 1) * size_blk)
    before, after = nbrs[:n_before], nbrs[n_before:]
    placed = set(nbrs) | {u}
    rest = [i for i in graph.image_ids if i not in placed]
    # pad so u lands exactly at a chunk boundary
    pad = (span - 1) * size_blk - n_before
    lead, rest = rest[:pad], rest[pad:]
    return lead + before + [u] + after + rest


def size_gpu_from_memory(memory_units: int, descriptor_counts: Sequence[int]) -> int:
    """Images that fit in ``memory_units`` descriptor slots, sized by the largest image."""
    largest = max(descriptor_counts, default=1) or 1
    return int(memory_units) // largest


def plan_pair_multiset(plan: SchedulePlan) -> Dict[Pair, int]:
    counts: Dict[Pair, int] = {}
    for p in plan.pairs():
        p = norm_pair(*p)
        counts[p] = counts.get(p, 0) + 1
    return counts
