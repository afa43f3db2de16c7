import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandmatch.errors import BudgetTooSmall, CapacityExceeded, NotResident
from bandmatch.engine import (
    STRATEGIES,
    DeviceArena,
    HostBackend,
    arena_evict,
    arena_upload,
    capacity_for,
    execute_plan,
    plan_baseline,
    write_metrics,
    write_occupancy_csv,
    write_pair_stats,
)
from bandmatch.features import SyntheticScene, band_pairs, generate_synthetic, mean_descriptor
from bandmatch.hashmatch import make_hash_functions
from bandmatch.mbr import SchedulePlan, iterate_schedule, plan_pair_multiset
from bandmatch.retrieval import ViewGraph, graph_from_pairs

from oracles import random_graph


def _dry(plan, ids, size=1, capacity=None):
    counts = {i: size for i in ids}
    arena = DeviceArena(capacity_for(plan.size_gpu, counts.values(), capacity))
    return execute_plan(plan, counts, None, arena), arena


# -- arena ----------------------------------------------------------------------


def test_arena_capacity():
    a = DeviceArena(10)
    arena_upload(a, 0, 4)
    arena_upload(a, 1, 4)
    assert a.occupancy == 8
    with pytest.raises(CapacityExceeded):
        arena_upload(a, 2, 4)


def test_arena_counters():
    a = DeviceArena(10)
    arena_upload(a, 0, 4)
    arena_evict(a, 0)
    arena_upload(a, 0, 4)
    assert a.uploads == 2 and a.units_uploaded == 8
    before = a.counters()
    assert arena_upload(a, 0, 4) is False
    assert a.counters() == before
    with pytest.raises(NotResident):
        arena_evict(a, 7)


# -- baselines ------------------------------------------------------------------


def test_sequential_three_pairs():
    g = graph_from_pairs([(0, 1), (1, 2), (2, 3)])
    res, _ = _dry(plan_baseline(g, "sequential", 2), g.image_ids)
    assert res.metrics.uploads == 6 and res.metrics.pairs_matched == 3


def test_group_block_edgeless():
    plan = plan_baseline(ViewGraph(range(6)), "group_block", 4)
    assert plan.num_blocks == 0


def test_budget_errors():
    g = graph_from_pairs([(0, 1)])
    for s in ("sequential", "load_free_list", "group_block"):
        with pytest.raises(BudgetTooSmall):
            plan_baseline(g, s, 1)
    with pytest.raises(ValueError):
        plan_baseline(g, "random", 4)


def test_banded_ordering():
    g = graph_from_pairs(band_pairs(100, 5))
    up = {}
    for s in STRATEGIES:
        res, _ = _dry(plan_baseline(g, s, 40, 10), g.image_ids)
        up[s] = res.metrics.uploads
    assert up["mbr"] <= up["group_block"] <= up["sequential"]
    assert up["mbr"] < up["sequential"]


# -- execution accounting -------------------------------------------------------


def test_six_image_band_plan():
    g = graph_from_pairs(band_pairs(6, 1))
    plan = iterate_schedule(g, 2, 4)
    res, arena = _dry(plan, g.image_ids)
    m = res.metrics
    assert (m.uploads, m.pairs_matched) == (6, 5)
    assert m.utilization_proxy == pytest.approx(5 / 6)
    assert arena.peak_occupancy <= 4


def test_empty_plan():
    res, _ = _dry(SchedulePlan((), 2, 4, "mbr"), [])
    assert res.metrics.uploads == 0 and res.metrics.pairs_matched == 0


def _replay_occupancy(trace, sizes):
    occ, seen = 0, []
    for event, image_id, reported in trace:
        occ += sizes[image_id] if event == "upload" else -sizes[image_id]
        assert occ == reported
        seen.append(occ)
    return seen


@given(
    st.integers(2, 60),
    st.floats(0.01, 0.3),
    st.sampled_from(STRATEGIES),
    st.integers(1, 4),
    st.integers(0, 10**6),
)
def test_every_strategy_covers_and_fits(n, density, strategy, size_blk, seed):
    rng = np.random.default_rng(seed)
    g = ViewGraph([int(i) for i in rng.permutation(n)], random_graph(rng, n, density))
    sizes = {i: int(rng.integers(1, 50)) for i in g.image_ids}
    size_gpu = 3 * size_blk
    plan = plan_baseline(g, strategy, size_gpu, size_blk)
    assert plan_pair_multiset(plan) == {p: 1 for p in g.pairs()}
    arena = DeviceArena(capacity_for(size_gpu, sizes.values()))
    res = execute_plan(plan, sizes, None, arena, graph=g)
    assert res.metrics.pairs_matched == g.num_pairs
    assert max(_replay_occupancy(arena.trace, sizes), default=0) <= arena.capacity
    ups = [e for e in arena.trace if e[0] == "upload"]
    assert res.metrics.units_uploaded == sum(sizes[i] for _, i, _ in ups)
    assert g.unprocessed_pairs() == []


@given(st.integers(2, 80), st.floats(0.02, 0.2), st.integers(0, 10**6))
def test_row_advance_uploads_each_image_once_per_iteration(n, density, seed):
    rng = np.random.default_rng(seed)
    g = ViewGraph(range(n), random_graph(rng, n, density))
    plan = iterate_schedule(g, 3, 9)
    res, _ = _dry(plan, g.image_ids)
    for it, stats in zip(plan.iterations, res.metrics.per_iteration):
        assert stats["uploads"] == len({i for p in it.pairs() for i in p})


# -- real execution -------------------------------------------------------------


@pytest.fixture(scope="module")
def scene_run():
    feats, gt = generate_synthetic(SyntheticScene(16, 80, 2, seed=5))
    g = graph_from_pairs(gt.pairs, range(16))
    plan = iterate_schedule(g, 2, 6)
    backend = HostBackend(make_hash_functions(1), mean_descriptor(feats))
    return feats, g, plan, backend


def _run(scene_run, threads, queue_bound=64, graph=None):
    feats, g, plan, backend = scene_run
    arena = DeviceArena(capacity_for(plan.size_gpu, [len(f) for f in feats]))
    return execute_plan(plan, feats, backend, arena, seed=3, threads=threads, queue_bound=queue_bound, graph=graph)


def test_execution_deterministic_and_confluent(scene_run):
    a = _run(scene_run, 1)
    b = _run(scene_run, 1)
    c = _run(scene_run, 4, queue_bound=2)
    for other in (b, c):
        assert a.verified_list() == other.verified_list()
        assert a.initial_list() == other.initial_list()
        assert a.metrics.to_dict() == other.metrics.to_dict()
        assert a.stats == other.stats


def test_execution_outputs(scene_run, tmp_path):
    feats, g, plan, _ = scene_run
    g2 = graph_from_pairs(g.pairs(), g.image_ids)
    res = _run(scene_run, 2, graph=g2)
    assert g2.unprocessed_pairs() == []
    assert sorted(res.initial) == g.pairs()
    for p, pm in res.verified.items():
        assert pm.as_set() <= res.initial[p].as_set()
        assert pm.stage == "verified"
    m = res.metrics
    assert m.pairs_matched == g.num_pairs
    assert m.verified_matches == sum(len(v) for v in res.verified.values())
    assert 0 < m.verified_matches <= m.initial_matches
    write_metrics(tmp_path / "m.json", m, {"config": {}})
    doc = json.loads((tmp_path / "m.json").read_text())
    assert "wall_time" not in doc and doc["uploads"] == m.uploads
    write_pair_stats(tmp_path / "s.jsonl", res.stats)
    lines = (tmp_path / "s.jsonl").read_text().splitlines()
    assert len(lines) == g.num_pairs
    arena = DeviceArena(10)
    arena_upload(arena, 1, 3)
    write_occupancy_csv(tmp_path / "o.csv", arena)
    rows = list(csv.reader(open(tmp_path / "o.csv")))
    assert rows == [["step", "event", "image_id", "occupancy"], ["0", "upload", "1", "3"]]


def test_on_pair_and_no_verification(scene_run):
    feats, g, plan, backend = scene_run
    seen = []
    arena = DeviceArena(capacity_for(plan.size_gpu, [len(f) for f in feats]))
    res = execute_plan(plan, feats, backend, arena, verify_params=None, on_pair=lambda p, pm: seen.append(p))
    assert sorted(seen) == g.pairs() and res.verified == {}


def test_plan_with_duplicate_pair_rejected(scene_run):
    feats, g, plan, backend = scene_run
    doubled = SchedulePlan(plan.iterations * 2, plan.size_blk, plan.size_gpu, plan.strategy)
    with pytest.raises(ValueError):
        _dry(doubled, g.image_ids)
