"""Plan execution: block-row uploads and frees, matching, and overlapped verification."""

from __future__ import annotations

import csv
import json
import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..features import FeatureSet
from ..hashmatch import RATIO, TOP_K, HashCodeSet, HashFunctions, PairMatches, compute_codes, match_pair
from ..mbr import SchedulePlan
from ..retrieval.viewgraph import ViewGraph
from ..verify import VerifyParams, verify_pair
from .arena import DeviceArena

log = logging.getLogger(__name__)

Pair = Tuple[int, int]
QUEUE_BOUND = 64


class HostBackend:
    """Computes codes and matches on the host; a device backend replaces these two calls."""

    def __init__(self, hf: HashFunctions, centering_mean: np.ndarray, top_k: int = TOP_K, ratio: float = RATIO):
        self.hf = hf
        self.centering_mean = np.asarray(centering_mean, dtype=np.float64)
        self.top_k = top_k
        self.ratio = ratio

    def encode(self, fs: FeatureSet) -> HashCodeSet:
        return compute_codes(fs, self.hf, self.centering_mean)

    def match(self, qc: HashCodeSet, qf: FeatureSet, tc: HashCodeSet, tf: FeatureSet) -> PairMatches:
        return match_pair(qc, qf, tc, tf, self.top_k, self.ratio)


@dataclass
class PipelineMetrics:
    strategy: str
    capacity: int
    pairs_matched: int = 0
    uploads: int = 0
    evictions: int = 0
    units_uploaded: int = 0
    peak_occupancy: int = 0
    initial_matches: int = 0
    verified_matches: int = 0
    wall_time: float = 0.0
    per_iteration: List[dict] = field(default_factory=list)

    @property
    def utilization_proxy(self) -> float:
        return self.pairs_matched / self.uploads if self.uploads else 0.0

    @property
    def pairs_per_second(self) -> float:
        return self.pairs_matched / self.wall_time if self.wall_time > 0 else 0.0

    def to_dict(self, timing: bool = False) -> dict:
        """Counter fields only unless ``timing``; the counters are reproducible byte for byte."""
        d = {
            "strategy": self.strategy,
            "capacity": self.capacity,
            "pairs_matched": self.pairs_matched,
            "uploads": self.uploads,
            "evictions": self.evictions,
            "units_uploaded": self.units_uploaded,
            "peak_occupancy": self.peak_occupancy,
            "utilization_proxy": self.utilization_proxy,
            "initial_matches": self.initial_matches,
            "verified_matches": self.verified_matches,
            "iterations": len(self.per_iteration),
            "per_iteration": self.per_iteration,
        }
        if timing:
            d["wall_time"] = self.wall_time
            d["pairs_per_second"] = self.pairs_per_second
        return d


@dataclass
class ExecutionResult:
    initial: Dict[Pair, PairMatches]
    verified: Dict[Pair, PairMatches]
    stats: Dict[Pair, dict]
    metrics: PipelineMetrics

    def verified_list(self) -> List[PairMatches]:
        return [self.verified[p] for p in sorted(self.verified)]

    def initial_list(self) -> List[PairMatches]:
        return [self.initial[p] for p in sorted(self.initial)]


def pair_seed(seed: int, pair: Pair) -> int:
    return int(np.random.SeedSequence([seed, pair[0], pair[1]]).generate_state(1)[0])


def _row_images(row) -> List[int]:
    seen = []
    have = set()
    for blk in row:
        for a, b in blk.pairs:
            for i in (a, b):
                if i not in have:
                    have.add(i)
                    seen.append(i)
    return seen


def execute_plan(
    plan: SchedulePlan,
    features: Union[Mapping[int, FeatureSet], Sequence[FeatureSet], Mapping[int, int]],
    backend: Optional[HostBackend],
    arena: DeviceArena,
    verify_params: Optional[VerifyParams] = VerifyParams(),
    seed: int = 0,
    threads: int = 1,
    graph: Optional[ViewGraph] = None,
    queue_bound: int = QUEUE_BOUND,
    on_pair: Optional[Callable[[Pair, PairMatches], None]] = None,
) -> ExecutionResult:
    """Run every block of ``plan`` against ``arena``.

    Per block row, only participants not yet resident are uploaded (codes are
    computed then and live as long as the residency). After the row, images no
    later row of the iteration needs are freed; the arena is cleared between
    iterations. Initial matches go through a bounded queue to ``threads``
    verification workers; each iteration ends at a barrier. With
    ``verify_params=None`` verification is skipped. Outputs are keyed by pair
    and do not depend on worker interleaving.

    With ``backend=None`` nothing is computed: ``features`` may then map image
    ids to descriptor counts and only the arena accounting runs.
    """
    if not isinstance(features, Mapping):
        features = {fs.image_id: fs for fs in features}
    dry = backend is None
    if dry:
        verify_params = None
    size = {i: (v if isinstance(v, (int, np.integer)) else len(v)) for i, v in features.items()}
    metrics = PipelineMetrics(plan.strategy, arena.capacity)
    initial: Dict[Pair, PairMatches] = {}
    verified: Dict[Pair, PairMatches] = {}
    stats: Dict[Pair, dict] = {}
    codes: Dict[int, HashCodeSet] = {}
    slots = threading.BoundedSemaphore(max(1, queue_bound))
    lock = threading.Lock()

    def verify_task(pair: Pair, pm: PairMatches) -> None:
        try:
            fq, ft = features[pair[0]], features[pair[1]]
            out, st = verify_pair(pm, fq, ft, verify_params, seed=pair_seed(seed, pair))
            with lock:
                verified[pair] = out
                stats[pair] = st
        finally:
            slots.release()

    t0 = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=max(1, threads)) if verify_params is not None else None
    try:
        for it_index, it in enumerate(plan.iterations):
            before = arena.counters()
            rows = [_row_images(row) for row in it.rows]
            last_use: Dict[int, int] = {}
            for r, imgs in enumerate(rows):
                for i in imgs:
                    last_use[i] = r
            futures: List[Future] = []
            n_pairs = 0
            for r, row in enumerate(it.rows):
                for i in rows[r]:
                    if arena.upload(i, size[i]) and not dry:
                        codes[i] = backend.encode(features[i])
                for blk in row:
                    for pair in blk.pairs:
                        a, b = pair
                        if pair in initial:
                            raise ValueError(f"pair {pair} scheduled twice")
                        if dry:
                            pm = PairMatches(pair, np.zeros((0, 2), np.int64))
                        else:
                            pm = backend.match(codes[a], features[a], codes[b], features[b])
                        initial[pair] = pm
                        n_pairs += 1
                        if on_pair is not None:
                            on_pair(pair, pm)
                        if pool is not None:
                            slots.acquire()
                            futures.append(pool.submit(verify_task, pair, pm))
                for i in sorted(arena.resident):
                    if last_use.get(i, -1) <= r:
                        arena.evict(i)
                        codes.pop(i, None)
            for f in futures:
                f.result()
            arena.clear()
            codes.clear()
            if graph is not None:
                graph.mark_processed(it.pairs())
            after = arena.counters()
            metrics.per_iteration.append(
                {
                    "iteration": it_index,
                    "dimension": it.dimension,
                    "rows": len(it.rows),
                    "pairs": n_pairs,
                    "uploads": after["uploads"] - before["uploads"],
                    "units_uploaded": after["units_uploaded"] - before["units_uploaded"],
                }
            )
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    metrics.wall_time = time.perf_counter() - t0
    metrics.pairs_matched = len(initial)
    for k, v in arena.counters().items():
        setattr(metrics, k, v)
    metrics.initial_matches = sum(len(pm) for pm in initial.values())
    metrics.verified_matches = sum(len(pm) for pm in verified.values())
    return ExecutionResult(initial, verified, stats, metrics)


def write_metrics(path: Union[str, Path], metrics: PipelineMetrics, extra: Optional[dict] = None) -> None:
    doc = metrics.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_occupancy_csv(path: Union[str, Path], arena: DeviceArena) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "event", "image_id", "occupancy"])
        for step, (event, image_id, occ) in enumerate(arena.trace):
            w.writerow([step, event, image_id, occ])


def write_pair_stats(path: Union[str, Path], stats: Mapping[Pair, dict]) -> None:
    """One JSON object per line, ordered by pair."""
    with open(path, "w") as fh:
        for p in sorted(stats):
            fh.write(json.dumps(stats[p], sort_keys=True) + "\n")
