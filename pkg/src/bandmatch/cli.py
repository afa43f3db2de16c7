"""Command-line entry point: ``bandmatch <command> ...``.

Every artifact written carries the effective configuration, so any output can
be reproduced with ``--config <artifact>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .config import STRATEGIES, RunConfig, load_config, stage_seed
from .engine import DeviceArena, HostBackend, capacity_for, execute_plan, plan_baseline
from .engine import write_metrics, write_occupancy_csv, write_pair_stats
from .errors import BandMatchError, ConfigError
from .features import (
    SyntheticScene,
    generate_synthetic,
    mean_descriptor,
    read_feature_dir,
    read_ground_truth,
    write_feature_dir,
    write_ground_truth,
)
from .hashmatch import PairMatches, make_hash_functions, read_matches_text, write_matches_text
from .mbr import SchedulePlan, read_plan, size_gpu_from_memory, write_plan
from .mbr.gps import gps_order
from .retrieval import (
    ViewGraph,
    build_codebook,
    pair_recall_precision,
    read_matrix_market,
    select_pairs,
    write_matrix_market,
)

log = logging.getLogger("bandmatch")

# flag dest -> dotted config key
_OVERRIDES = {
    "seed": "seed",
    "threads": "threads",
    "n_images": "scene.n_images",
    "points_per_image": "scene.points_per_image",
    "band": "scene.overlap_band",
    "noise_sigma": "scene.noise_sigma",
    "outlier_fraction": "scene.outlier_fraction",
    "repeat_fraction": "scene.repeat_fraction",
    "k_words": "retrieval.k_words",
    "top_n": "retrieval.retrieval_top_n",
    "size_blk": "schedule.size_blk",
    "size_gpu": "schedule.size_gpu",
    "gpu_memory_units": "schedule.gpu_memory_units",
    "strategy": "schedule.strategy",
    "top_k": "matching.top_k",
    "ratio": "matching.ratio",
    "n_neighbors": "verify.n_neighbors",
    "score_threshold": "verify.score_threshold",
}


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides({key: getattr(args, dest, None) for dest, key in _OVERRIDES.items()})


def _echo_dict(cfg: RunConfig) -> dict:
    # worker count does not change any result, so it stays out of artifacts
    d = cfg.to_dict()
    d.pop("threads")
    return d


def _echo(cfg: RunConfig) -> str:
    return json.dumps(_echo_dict(cfg), sort_keys=True, separators=(",", ":"))


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _print(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages shared by several commands


def _retrieve(cfg: RunConfig, features) -> ViewGraph:
    cb = build_codebook(features, cfg.retrieval, seed=stage_seed(cfg.seed, "codebook"))
    return select_pairs(features, cb, cfg.retrieval.retrieval_top_n, cfg.retrieval, seed=stage_seed(cfg.seed, "hnsw"))


def _size_gpu(cfg: RunConfig, counts: Sequence[int]) -> int:
    if cfg.schedule.size_gpu is not None:
        return cfg.schedule.size_gpu
    return size_gpu_from_memory(cfg.schedule.gpu_memory_units, counts or [cfg.scene.points_per_image])


def _schedule(cfg: RunConfig, graph: ViewGraph, counts: Sequence[int], strategy: Optional[str] = None) -> SchedulePlan:
    return plan_baseline(graph, strategy or cfg.schedule.strategy, _size_gpu(cfg, counts), cfg.schedule.size_blk)


def _bandwidths(graph: ViewGraph) -> Dict[str, int]:
    before = graph.bandwidth()
    after = gps_order(graph).apply(graph).bandwidth() if len(graph) else 0
    return {"bandwidth_before": before, "bandwidth_after": after}


def _match(cfg: RunConfig, plan: SchedulePlan, features, out: Path, graph: Optional[ViewGraph] = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    fmap = {fs.image_id: fs for fs in features}
    m = cfg.matching
    hf = make_hash_functions(stage_seed(cfg.seed, "hash"), m.n_tables, m.coarse_bits, m.fine_bits)
    backend = HostBackend(hf, mean_descriptor(features), m.top_k, m.ratio)
    counts = [len(fs) for fs in features]
    arena = DeviceArena(capacity_for(plan.size_gpu, counts))
    res = execute_plan(
        plan, fmap, backend, arena, cfg.verify, seed=stage_seed(cfg.seed, "ransac"), threads=cfg.threads, graph=graph
    )
    echo = _echo(cfg)
    write_matches_text(out / "matches_initial.txt", res.initial_list(), comment="config " + echo)
    write_matches_text(out / "matches_verified.txt", res.verified_list(), comment="config " + echo)
    write_pair_stats(out / "pair_stats.jsonl", res.stats)
    write_occupancy_csv(out / "occupancy.csv", arena)
    doc = res.metrics.to_dict()
    doc["config"] = _echo_dict(cfg)
    _write_json(out / "metrics.json", doc)
    _write_json(
        out / "timing.json",
        {"wall_time": res.metrics.wall_time, "pairs_per_second": res.metrics.pairs_per_second},
    )
    return doc


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = _config(args)
    scene = SyntheticScene(seed=stage_seed(cfg.seed, "scene"), **asdict(cfg.scene))
    features, gt = generate_synthetic(scene)
    out = Path(args.out)
    write_feature_dir(out / "features", features)
    write_ground_truth(out, gt)
    _write_json(out / "config.json", {"config": _echo_dict(cfg)})
    _print({"images": len(features), "gt_pairs": len(gt.pairs), "out": str(out)})
    return 0


def cmd_retrieve(args) -> int:
    cfg = _config(args)
    features = read_feature_dir(args.features)
    graph = _retrieve(cfg, features)
    write_matrix_market(args.out, graph, comments=["config " + _echo(cfg)])
    doc = {"images": len(graph), "pairs": graph.num_pairs}
    if args.gt:
        recall, precision = pair_recall_precision(graph.pairs(), read_ground_truth(args.gt).pairs)
        doc.update(recall=recall, precision=precision)
    _print(doc)
    return 0


def cmd_schedule(args) -> int:
    cfg = _config(args)
    graph = read_matrix_market(args.graph)
    counts = [len(fs) for fs in read_feature_dir(args.features)] if args.features else []
    plan = _schedule(cfg, graph, counts)
    bw = _bandwidths(graph)
    write_plan(args.out, plan, extra={"config": _echo_dict(cfg), **bw})
    _print({**bw, "iterations": len(plan.iterations), "blocks": plan.num_blocks, "pairs": plan.num_pairs})
    return 0


def cmd_match(args) -> int:
    cfg = _config(args)
    features = read_feature_dir(args.features)
    plan = read_plan(args.plan)
    doc = _match(cfg, plan, features, Path(args.out))
    _print({k: doc[k] for k in ("pairs_matched", "uploads", "utilization_proxy", "verified_matches")})
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    features = read_feature_dir(args.features)
    graph = _retrieve(cfg, features)
    write_matrix_market(out / "graph.mtx", graph, comments=["config " + _echo(cfg)])
    plan = _schedule(cfg, graph, [len(fs) for fs in features])
    bw = _bandwidths(graph)
    write_plan(out / "plan.json", plan, extra={"config": _echo_dict(cfg), **bw})
    doc = _match(cfg, plan, features, out, graph=graph)
    summary = {k: doc[k] for k in ("pairs_matched", "uploads", "utilization_proxy", "verified_matches")}
    summary.update(bw)
    if args.gt:
        recall, precision = pair_recall_precision(graph.pairs(), read_ground_truth(args.gt).pairs)
        summary.update(retrieval_recall=recall, retrieval_precision=precision)
        _write_json(out / "retrieval.json", {"recall": recall, "precision": precision, "config": _echo_dict(cfg)})
    log.info("run finished in %.1f s", time.perf_counter() - t0)
    _print(summary)
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    graph = read_matrix_market(args.graph)
    if args.features:
        counts = {fs.image_id: len(fs) for fs in read_feature_dir(args.features)}
    else:
        counts = {i: cfg.scene.points_per_image for i in graph.image_ids}
    rows = []
    for strategy in STRATEGIES:
        plan = _schedule(cfg, graph, list(counts.values()), strategy)
        arena = DeviceArena(capacity_for(plan.size_gpu, counts.values()), record_trace=False)
        m = execute_plan(plan, counts, None, arena).metrics
        rows.append(
            {
                "strategy": strategy,
                "pairs": m.pairs_matched,
                "uploads": m.uploads,
                "units_uploaded": m.units_uploaded,
                "utilization_proxy": m.utilization_proxy,
                "iterations": len(plan.iterations),
                "peak_occupancy": m.peak_occupancy,
                "capacity": m.capacity,
            }
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    _write_json(out / "comparison.json", {"rows": rows, "config": _echo_dict(cfg)})
    for r in rows:
        sys.stdout.write(
            f"{r['strategy']:>15}  pairs={r['pairs']:<7} uploads={r['uploads']:<7} "
            f"utilization={r['utilization_proxy']:.3f}\n"
        )
    return 0


def match_summary(initial: List[PairMatches], verified: List[PairMatches]) -> dict:
    """Inlier number and inlier ratio (verified over initial matches), averaged over pairs."""
    init = {pm.pair: len(pm) for pm in initial}
    ver = {pm.pair: len(pm) for pm in verified}
    pairs = sorted(init)
    ratios = [ver.get(p, 0) / init[p] for p in pairs if init[p]]
    n = len(pairs)
    return {
        "pairs": n,
        "initial_matches": sum(init.values()),
        "inliers": sum(ver.get(p, 0) for p in pairs),
        "mean_inlier_number": sum(ver.get(p, 0) for p in pairs) / n if n else 0.0,
        "mean_inlier_ratio": sum(ratios) / len(ratios) if ratios else 0.0,
        "pairs_without_inliers": sum(1 for p in pairs if ver.get(p, 0) == 0),
    }


def cmd_stats(args) -> int:
    d = Path(args.matches)
    doc = match_summary(read_matches_text(d / "matches_initial.txt"), read_matches_text(d / "matches_verified.txt"))
    if args.out:
        _write_json(Path(args.out), doc)
    _print(doc)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config (or any artifact with a config echo)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="verification worker count")
    common.add_argument("-v", "--verbose", action="store_true")
    g = common.add_argument_group("parameter overrides")
    g.add_argument("--n-images", dest="n_images", type=int)
    g.add_argument("--points-per-image", dest="points_per_image", type=int)
    g.add_argument("--band", type=int)
    g.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    g.add_argument("--outlier-fraction", dest="outlier_fraction", type=float)
    g.add_argument("--repeat-fraction", dest="repeat_fraction", type=float, help="share of near-duplicate scene points")
    g.add_argument("--k-words", dest="k_words", type=int)
    g.add_argument("--top-n", dest="top_n", type=int, help="retrieved neighbors per image")
    g.add_argument("--size-blk", dest="size_blk", type=int)
    g.add_argument("--size-gpu", dest="size_gpu", type=int)
    g.add_argument("--gpu-memory-units", dest="gpu_memory_units", type=int)
    g.add_argument("--strategy", choices=STRATEGIES)
    g.add_argument("--top-k", dest="top_k", type=int)
    g.add_argument("--ratio", type=float, help="ratio test threshold")
    g.add_argument("--n-neighbors", dest="n_neighbors", type=int)
    g.add_argument("--score-threshold", dest="score_threshold", type=float)

    p = argparse.ArgumentParser(prog="bandmatch", description="Band-scheduled cascade hashing image matching")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="write a synthetic scene")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("retrieve", parents=[common], help="select match pairs into a view graph")
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path, help="Matrix Market output")
    s.add_argument("--gt", type=Path, help="ground-truth directory for recall/precision")
    s.set_defaults(func=cmd_retrieve)

    s = sub.add_parser("schedule", parents=[common], help="plan block rows for a view graph")
    s.add_argument("--graph", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--features", type=Path, help="size the device budget from real descriptor counts")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("match", parents=[common], help="execute a plan: match and verify")
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--plan", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("run", parents=[common], help="retrieve, schedule, match and verify")
    s.add_argument("--features", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--gt", type=Path)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("compare", parents=[common], help="data movement of every strategy on one graph")
    s.add_argument("--graph", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--features", type=Path)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("stats", parents=[common], help="inlier number and ratio of a match directory")
    s.add_argument("--matches", required=True, type=Path)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(json.dumps({"error": exc.code, "message": str(exc)}) + "\n")
        return 2
    except (BandMatchError, OSError) as exc:
        code = getattr(exc, "code", "io_error")
        sys.stderr.write(json.dumps({"error": code, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
