"""Run configuration: one JSON document holding every stage's parameters."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .errors import ConfigError
from .hashmatch import RATIO, TOP_K
from .hashmatch.lsh import COARSE_BITS, FINE_BITS, N_TABLES
from .retrieval import RetrievalParams
from .verify import VerifyParams

STRATEGIES = ("sequential", "load_free_list", "group_block", "mbr")


@dataclass(frozen=True)
class SceneConfig:
    n_images: int = 100
    points_per_image: int = 200
    overlap_band: int = 5
    noise_sigma: float = 0.01
    outlier_fraction: float = 0.2
    image_size: float = 1000.0
    keypoint_noise_px: float = 0.3
    repeat_fraction: float = 0.0
    repeat_spread: float = 0.1


@dataclass(frozen=True)
class ScheduleConfig:
    size_blk: int = 400
    # descriptor slots on the device; size_gpu = this // largest image
    gpu_memory_units: int = 1_600_000
    # explicit image budget; overrides gpu_memory_units when set
    size_gpu: Optional[int] = None
    strategy: str = "mbr"


@dataclass(frozen=True)
class MatchConfig:
    n_tables: int = N_TABLES
    coarse_bits: int = COARSE_BITS
    fine_bits: int = FINE_BITS
    top_k: int = TOP_K
    ratio: float = RATIO


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    scene: SceneConfig = field(default_factory=SceneConfig)
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    matching: MatchConfig = field(default_factory=MatchConfig)
    verify: VerifyParams = field(default_factory=VerifyParams)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunConfig":
        sections = {
            "scene": SceneConfig,
            "retrieval": RetrievalParams,
            "schedule": ScheduleConfig,
            "matching": MatchConfig,
            "verify": VerifyParams,
        }
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: Dict[str, Any] = {}
        for key, value in d.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                sec = sections[key]
                sec_known = {f.name for f in fields(sec)}
                bad = set(value) - sec_known
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
                kwargs[key] = sec(**value)
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        need(self.threads >= 1, "threads must be >= 1")
        s = self.scene
        need(s.n_images >= 1 and s.points_per_image >= 0, "scene sizes must be positive")
        need(0 <= s.overlap_band < s.n_images, "overlap_band must be in [0, n_images)")
        need(0.0 <= s.outlier_fraction <= 1.0, "outlier_fraction must be in [0, 1]")
        need(s.noise_sigma >= 0, "noise_sigma must be >= 0")
        need(0.0 <= s.repeat_fraction <= 1.0 and s.repeat_spread >= 0, "bad repeat_fraction / repeat_spread")
        r = self.retrieval
        need(r.k_words >= 1 and r.retrieval_top_n >= 1, "k_words and retrieval_top_n must be >= 1")
        need(0 < r.p <= 100, "p must be a percentage in (0, 100]")
        need(r.h is None or r.h >= 1, "h must be >= 1 or null")
        need(r.hnsw_M >= 2 and r.ef_construction >= 1 and r.ef_search >= 1, "bad HNSW parameters")
        sc = self.schedule
        need(sc.size_blk >= 1, "size_blk must be >= 1")
        need(sc.gpu_memory_units >= 1, "gpu_memory_units must be >= 1")
        need(sc.size_gpu is None or sc.size_gpu >= 1, "size_gpu must be >= 1")
        need(sc.strategy in STRATEGIES, f"strategy must be one of {STRATEGIES}")
        m = self.matching
        need(m.n_tables >= 1 and 1 <= m.coarse_bits <= 32 and m.fine_bits >= 1, "bad hash sizes")
        need(m.top_k >= 1, "top_k must be >= 1")
        need(0.0 < m.ratio <= 1.0, "ratio must be in (0, 1]")
        v = self.verify
        need(v.n_neighbors >= 1, "n_neighbors must be >= 1")
        need(0.0 <= v.score_threshold <= 1.0, "score_threshold must be in [0, 1]")
        need(v.max_iters >= 1 and v.epipolar_threshold_px > 0, "bad RANSAC parameters")
        need(0.0 < v.confidence < 1.0, "confidence must be in (0, 1)")

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Apply ``{"section.key": value}`` or ``{"key": value}`` overrides, skipping None."""
        cfg = self
        for dotted, value in overrides.items():
            if value is None:
                continue
            if "." in dotted:
                sec, key = dotted.split(".", 1)
                cfg = replace(cfg, **{sec: replace(getattr(cfg, sec), **{key: value})})
            else:
                cfg = replace(cfg, **{dotted: value})
        cfg.validate()
        return cfg


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    # accept an echo block embedded in another artifact
    doc = doc.get("config", doc)
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def stage_seed(root: int, stage: str) -> int:
    """Independent 32-bit seed for a named stage, derived from the root seed."""
    return int(np.random.SeedSequence([root, zlib.crc32(stage.encode())]).generate_state(1)[0])
