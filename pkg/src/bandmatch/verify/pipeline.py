"""Local then global verification of one pair's initial matches."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from ..errors import NoModel, TooFewMatches
from ..features import FeatureSet
from ..hashmatch import PairMatches
from .ransac import CONFIDENCE, EPIPOLAR_THRESHOLD_PX, MAX_ITERS, ransac_fundamental
from .sao import N_NEIGHBORS, SCORE_THRESHOLD, sao_filter


@dataclass(frozen=True)
class VerifyParams:
    n_neighbors: int = N_NEIGHBORS
    score_threshold: float = SCORE_THRESHOLD
    max_iters: int = MAX_ITERS
    epipolar_threshold_px: float = EPIPOLAR_THRESHOLD_PX
    confidence: float = CONFIDENCE
    use_sao: bool = True


def verify_pair(
    pm: PairMatches, fq: FeatureSet, ft: FeatureSet, params: VerifyParams = VerifyParams(), seed: int = 0
) -> Tuple[PairMatches, dict]:
    """SAO filter, then RANSAC on what survives.

    A pair RANSAC cannot model (too few matches or no consensus) ends with no
    verified matches; the reason is in the returned stats.
    """
    stats = {"pair": list(pm.pair), "initial": len(pm)}
    local = pm
    if params.use_sao:
        res = sao_filter(pm, fq.positions, ft.positions, params.n_neighbors, params.score_threshold)
        local = res.matches
        stats["sao_passthrough"] = res.passthrough
        stats["sao_fallback"] = res.fallback
    stats["after_sao"] = len(local)
    status = "ok"
    try:
        inl = ransac_fundamental(
            fq.positions[local.matches[:, 0]],
            ft.positions[local.matches[:, 1]],
            params.max_iters,
            params.epipolar_threshold_px,
            params.confidence,
            seed=seed,
            pair=pm.pair,
        )
        final = PairMatches(pm.pair, local.matches[inl.kept], "verified")
        stats["ransac_iterations"] = inl.iterations
    except (TooFewMatches, NoModel) as exc:
        final = PairMatches(pm.pair, np.zeros((0, 2), np.int64), "verified")
        status = exc.code
    stats["inliers"] = len(final)
    stats["inlier_ratio"] = len(final) / len(pm) if len(pm) else 0.0
    stats["status"] = status
    return final, stats


def params_dict(params: VerifyParams) -> dict:
    return asdict(params)
