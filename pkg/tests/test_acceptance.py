"""Acceptance criteria 1-10. Each test prints one ``CRITERION n: PASS|FAIL`` line."""

import itertools
import json
import math
import time

import networkx as nx
import numpy as np
import pytest

from bandmatch.cli import main as cli_main
from bandmatch.engine import STRATEGIES, DeviceArena, capacity_for, execute_plan, plan_baseline
from bandmatch.features import SyntheticScene, band_pairs, generate_synthetic, mean_descriptor
from bandmatch.hashmatch import PairMatches, brute_force_match, compute_codes, make_hash_functions, match_pair
from bandmatch.mbr import gps_order, iterate_schedule, plan_pair_multiset
from bandmatch.retrieval import RetrievalParams, ViewGraph, build_codebook, pair_recall_precision, select_pairs
from bandmatch.verify import VerifyParams, ced, ced_batch, sao_filter, ransac_fundamental, two_view_sample, verify_pair

from instances import feature_set, full_bucket_instance
from oracles import ced_bruteforce, min_bandwidth, random_graph

# regression baselines frozen from the first simulator run (criterion 3)
C3_BASELINE = {
    "sequential": {"uploads": 78360, "utilization_proxy": 0.5},
    "load_free_list": {"uploads": 1000, "utilization_proxy": 39.18},
    "group_block": {"uploads": 1160, "utilization_proxy": 33.775862068965516},
    "mbr": {"uploads": 1000, "utilization_proxy": 39.18},
}


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")

    return _report


def _dry_run(plan, sizes):
    arena = DeviceArena(capacity_for(plan.size_gpu, sizes.values()))
    res = execute_plan(plan, sizes, None, arena)
    occ, peak = 0, 0
    for event, image_id, _ in arena.trace:
        occ += sizes[image_id] if event == "upload" else -sizes[image_id]
        peak = max(peak, occ)
    return res.metrics, peak, arena.capacity


# ---------------------------------------------------------------------------


def test_criterion_1_schedule_coverage(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    cases = []
    for _ in range(50):
        n = int(rng.integers(2, 301))
        density = float(rng.uniform(0.005, 0.20))
        size_blk = int(rng.choice([2, 5, 10, 25]))
        span = int(rng.choice([2, 3, 4]))
        ids = [int(i) for i in rng.permutation(n)]
        cases.append((ViewGraph(ids, random_graph(rng, n, density)), size_blk, size_blk * span))
    cases.append((ViewGraph(range(1000), band_pairs(1000, 40)), 100, 400))
    bad = []
    for g, size_blk, size_gpu in cases:
        sizes = {i: 1 + (i * 7919) % 300 for i in g.image_ids}
        expect = {p: 1 for p in g.pairs()}
        for s in STRATEGIES:
            plan = plan_baseline(g, s, size_gpu, size_blk)
            m, peak, cap = _dry_run(plan, sizes)
            if plan_pair_multiset(plan) != expect or m.pairs_matched != g.num_pairs or peak > cap:
                bad.append((len(g), s))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    report(1, ok, f"{len(cases)} graphs x {len(STRATEGIES)} strategies, violations={len(bad)}, {elapsed:.1f}s (<60s)")
    assert not bad
    assert elapsed < 60


def test_criterion_2_bandwidth_reduction(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    widened = 0
    for _ in range(200):
        n = int(rng.integers(1, 201))
        g = ViewGraph([int(i) for i in rng.permutation(n)], random_graph(rng, n, float(rng.uniform(0.0, 0.15))))
        if gps_order(g).apply(g).bandwidth() > g.bandwidth():
            widened += 1
    # every graph on up to 7 nodes (networkx atlas, 1253 graphs), each under a random labelling,
    # plus 300 random graphs on 8 nodes
    small = []
    for h in nx.graph_atlas_g()[1:]:
        n = h.number_of_nodes()
        relabel = rng.permutation(n)
        small.append((n, [(int(relabel[a]), int(relabel[b])) for a, b in h.edges()]))
    for _ in range(300):
        small.append((8, random_graph(rng, 8, float(rng.uniform(0.1, 0.8)))))
    worst = 0.0
    over = 0
    for n, edges in small:
        g = ViewGraph(range(n), edges)
        got = gps_order(g).apply(g).bandwidth()
        opt = min_bandwidth(n, edges)
        if opt:
            worst = max(worst, got / opt)
        if got > 2 * opt:
            over += 1
    elapsed = time.perf_counter() - t0
    ok = widened == 0 and over == 0 and elapsed < 120
    report(
        2,
        ok,
        f"200 random graphs widened={widened}; {len(small)} graphs n<=8 over 2x optimum={over} "
        f"(worst ratio {worst:.2f}); {elapsed:.1f}s (<120s)",
    )
    assert widened == 0 and over == 0
    assert elapsed < 120


def test_criterion_3_schedule_ordering(report):
    t0 = time.perf_counter()
    g = ViewGraph(range(1000), band_pairs(1000, 40))
    sizes = {i: 200 for i in g.image_ids}
    rows = {}
    for s in STRATEGIES:
        # capacity 400 images; blocks of 100 images leave room for a 4-chunk row
        plan = plan_baseline(g, s, 400, 100)
        m, peak, cap = _dry_run(plan, sizes)
        assert cap == 400 * 200 and peak <= cap
        rows[s] = {"uploads": m.uploads, "utilization_proxy": m.utilization_proxy, "pairs": m.pairs_matched}
    elapsed = time.perf_counter() - t0
    up = {s: r["uploads"] for s, r in rows.items()}
    util = {s: r["utilization_proxy"] for s, r in rows.items()}
    checks = {
        "seq/mbr >= 5": up["sequential"] >= 5 * up["mbr"],
        "mbr <= group_block": up["mbr"] <= up["group_block"],
        "util mbr >= load_free_list": util["mbr"] >= util["load_free_list"],
        "baseline": all(
            rows[s]["uploads"] == C3_BASELINE[s]["uploads"]
            and rows[s]["utilization_proxy"] == pytest.approx(C3_BASELINE[s]["utilization_proxy"])
            for s in STRATEGIES
        ),
        "runtime": elapsed < 300,
    }
    ok = all(checks.values())
    report(3, ok, f"uploads={up} seq/mbr={up['sequential'] / up['mbr']:.1f}x util_mbr={util['mbr']:.2f} "
           f"util_lfl={util['load_free_list']:.2f} {elapsed:.1f}s; failed={[k for k, v in checks.items() if not v]}")
    assert ok


def test_criterion_4_oracle_equivalence(report):
    mismatches = 0
    for seed in range(500):
        qf, qc, tf, tc, k = full_bucket_instance(seed)
        if match_pair(qc, qf, tc, tf, top_k=k, ratio=0.5) != brute_force_match(qf, tf, 0.5):
            mismatches += 1
    report(4, mismatches == 0, f"500 constructed full-bucket instances, mismatches={mismatches}")
    assert mismatches == 0


def test_criterion_5_hashing_recall(report):
    t0 = time.perf_counter()
    sigma = 0.02
    feats, gt = generate_synthetic(SyntheticScene(10, 2000, 2, noise_sigma=sigma, seed=1))
    hf = make_hash_functions(0)
    mu = mean_descriptor(feats)
    codes = [compute_codes(f, hf, mu) for f in feats]
    found = total = 0
    margins = []
    for i in range(9):
        m = match_pair(codes[i], feats[i], codes[i + 1], feats[i + 1])
        b = brute_force_match(feats[i], feats[i + 1])
        found += len(m.as_set() & b.as_set())
        total += len(b)
        # NN margin of the true correspondences: second nearest minus nearest distance
        corr = gt.correspondences[(i, i + 1)]
        q = feats[i].descriptors[corr[:, 0]].astype(np.float64)
        t = feats[i + 1].descriptors.astype(np.float64)
        d = np.sqrt(np.maximum((q * q).sum(1)[:, None] + (t * t).sum(1)[None] - 2 * q @ t.T, 0))
        d.sort(axis=1)
        margins.append(d[:, 1] - d[:, 0])
    recall = found / total
    margin = float(np.median(np.concatenate(margins)))
    noise = sigma * math.sqrt(128)
    elapsed = time.perf_counter() - t0
    ok = recall >= 0.90 and margin >= 2 * noise and elapsed < 120
    report(5, ok, f"recall vs brute force={recall:.4f} (>=0.90) over {total} oracle matches; median NN margin "
           f"{margin:.3f} >= 2x noise {2 * noise:.3f}; {elapsed:.1f}s (<120s)")
    assert margin >= 2 * noise
    assert recall >= 0.90
    assert elapsed < 120


def test_criterion_6_ratio_trend(report):
    feats, gt = generate_synthetic(
        SyntheticScene(20, 300, 3, noise_sigma=0.01, outlier_fraction=0.2, repeat_fraction=0.5, seed=0)
    )
    hf = make_hash_functions(0)
    mu = mean_descriptor(feats)
    codes = [compute_codes(f, hf, mu) for f in feats]
    ratios = []
    for tr in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
        initial = verified = 0
        for a, b in gt.pairs:
            pm = match_pair(codes[a], feats[a], codes[b], feats[b], 8, tr)
            out, _ = verify_pair(pm, feats[a], feats[b], VerifyParams(), seed=a * 1000 + b)
            initial += len(pm)
            verified += len(out)
        ratios.append(verified / initial)
    ok = all(x >= y for x, y in zip(ratios, ratios[1:]))
    report(6, ok, "inlier ratio for t_r=0.2..0.8: " + ", ".join(f"{r:.4f}" for r in ratios))
    assert ok


def test_criterion_7_outlier_removal(report):
    tp = fp = n_true = 0
    per_pair = []
    for seed in range(20):
        s = two_view_sample(300, 200, noise_px=0.5, seed=seed)
        n = len(s.x1)
        pm = PairMatches((0, 1), np.column_stack([np.arange(n), np.arange(n)]))
        fq, ft = feature_set(0, np.ones((n, 128)) / math.sqrt(128), s.x1), feature_set(1, np.ones((n, 128)) / math.sqrt(128), s.x2)
        out, _ = verify_pair(pm, fq, ft, VerifyParams(), seed=seed)
        kept = np.zeros(n, bool)
        kept[out.matches[:, 0]] = True
        tp += int((kept & s.inlier).sum())
        fp += int((kept & ~s.inlier).sum())
        n_true += int(s.inlier.sum())
        per_pair.append(((kept & s.inlier).sum() / max(kept.sum(), 1), (kept & s.inlier).sum() / s.inlier.sum()))
    precision, recall = tp / (tp + fp), tp / n_true
    rng = np.random.default_rng(7)
    ced_bad = 0
    for _ in range(1000):
        a = rng.integers(0, 6, int(rng.integers(0, 9))).tolist()
        b = rng.integers(0, 6, int(rng.integers(0, 9))).tolist()
        if ced(a, b) != ced_bruteforce(a, b):
            ced_bad += 1
        if len(a) == len(b) and len(a) and int(ced_batch(np.array([a]), np.array([b]))[0]) != ced_bruteforce(a, b):
            ced_bad += 1
    ok = precision >= 0.99 and recall >= 0.90 and ced_bad == 0
    pmin = min(p for p, _ in per_pair)
    rmin = min(r for _, r in per_pair)
    report(7, ok, f"20 pairs x (300 inliers + 200 outliers): precision={precision:.4f} recall={recall:.4f} "
           f"(per-pair min {pmin:.3f}/{rmin:.3f}); CED mismatches vs brute force={ced_bad}/1000")
    assert ced_bad == 0
    assert precision >= 0.99 and recall >= 0.90


def test_criterion_8_retrieval_quality(report):
    feats, gt = generate_synthetic(SyntheticScene(200, 200, 5, noise_sigma=0.01, seed=0))
    params = RetrievalParams(retrieval_top_n=10)
    cb = build_codebook(feats, params, seed=1)
    g = select_pairs(feats, cb, params.retrieval_top_n, params, seed=2)
    recall, precision = pair_recall_precision(g.pairs(), gt.pairs)
    ok = recall >= 0.90 and precision >= 0.80
    report(8, ok, f"n=200 band 5, retrieval_top_n=10: recall={recall:.4f} (>=0.90) precision={precision:.4f} (>=0.80)")
    assert ok


def _shrink_suite():
    rng = np.random.default_rng(909)
    suite = [(ViewGraph(range(4), itertools.combinations(range(4), 2)), 1, 2)]
    for n, band in ((100, 5), (300, 12), (1000, 40)):
        suite.append((ViewGraph(range(n), band_pairs(n, band)), 10, 40))
    for _ in range(60):
        n = int(rng.integers(4, 120))
        size_blk = int(rng.integers(1, 6))
        span = int(rng.integers(2, 4))
        suite.append((ViewGraph(range(n), random_graph(rng, n, float(rng.uniform(0.02, 0.5)))), size_blk, size_blk * span))
    return [c for c in suite if c[0].num_pairs]


@pytest.mark.xfail(
    strict=True,
    reason="dimension cannot drop when every remaining image has more partners than one iteration can hold "
    "(e.g. K4 with size_blk=1, size_gpu=2); see the decisions ledger",
)
def test_criterion_9_iteration_shrinkage(report):
    violations = []
    for g, size_blk, size_gpu in _shrink_suite():
        dims = [it.dimension for it in iterate_schedule(g, size_blk, size_gpu).iterations]
        if any(a <= b for a, b in zip(dims, dims[1:])):
            violations.append((len(g), g.num_pairs, size_blk, size_gpu, dims[:6]))
    total = len(_shrink_suite())
    report(9, not violations, f"{total} graphs, non-decreasing steps in {len(violations)}; "
           f"first: {violations[0] if violations else None}")
    assert not violations


def test_criterion_10_end_to_end(report, tmp_path):
    scene = tmp_path / "scene"
    assert cli_main(["gen", "--out", str(scene), "--n-images", "1000"]) == 0
    args = ["run", "--config", str(scene / "config.json"), "--features", str(scene / "features"),
            "--gt", str(scene), "--top-n", "10"]
    times = []
    for run in ("a", "b"):
        t0 = time.perf_counter()
        assert cli_main(args + ["--out", str(tmp_path / run)]) == 0
        times.append(time.perf_counter() - t0)
    names = ["graph.mtx", "plan.json", "matches_initial.txt", "matches_verified.txt", "metrics.json",
             "pair_stats.jsonl", "occupancy.csv"]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in names)
    metrics = json.loads((tmp_path / "a" / "metrics.json").read_text())
    ok = same and max(times) < 600
    report(10, ok, f"n=1000 run twice: {times[0]:.0f}s / {times[1]:.0f}s (<600s each), byte-identical={same}, "
           f"pairs={metrics['pairs_matched']} verified={metrics['verified_matches']}")
    assert same
    assert max(times) < 600
