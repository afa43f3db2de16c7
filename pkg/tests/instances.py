"""Constructed inputs shared by unit and acceptance tests."""

import numpy as np

from bandmatch.features import FeatureSet, normalize_rows
from bandmatch.hashmatch import HashFunctions, compute_codes, make_hash_functions


def feature_set(image_id, descriptors, positions=None):
    d = np.asarray(descriptors, dtype=np.float32).reshape(-1, 128)
    n = len(d)
    pos = np.zeros((n, 2)) if positions is None else np.asarray(positions, float)
    kp = np.column_stack([pos, np.ones(n), np.zeros(n)])
    return FeatureSet(image_id, kp, d)


def full_bucket_instance(seed: int):
    """Small pair whose every train feature shares a bucket with every query.

    Even seeds use zero coarse hyperplanes (one bucket for everything); odd
    seeds use 2-bit tables and reject draws until each (query, train) pair
    collides in at least one table, verified here without the matcher.
    The train set never exceeds ``top_k``.
    """
    rng = np.random.default_rng(seed)
    n_q = int(rng.integers(1, 6))
    n_t = int(rng.integers(0, 9))
    top_k = 8
    if seed % 2 == 0:
        base = make_hash_functions(seed)
        hf = HashFunctions(np.zeros_like(base.coarse), base.fine, seed)
    else:
        hf = make_hash_functions(seed, n_tables=6, coarse_bits=2)
    mean = np.zeros(128)
    while True:
        q = normalize_rows(rng.standard_normal((n_q, 128)))
        t = normalize_rows(rng.standard_normal((max(n_t, 1), 128)))[:n_t]
        if rng.random() < 0.5 and n_t:
            # near copies make accepted matches likely
            src = rng.integers(0, n_t, size=n_q)
            q = normalize_rows(t[src] + 0.05 * rng.standard_normal((n_q, 128)))
        qf, tf = feature_set(0, q), feature_set(1, t)
        qc, tc = compute_codes(qf, hf, mean), compute_codes(tf, hf, mean)
        proj_q = np.einsum("nd,tbd->ntb", q.astype(np.float64), hf.coarse) > 0
        proj_t = np.einsum("nd,tbd->ntb", t.astype(np.float64), hf.coarse) > 0
        share = (proj_q[:, None] == proj_t[None]).all(axis=3).any(axis=2)
        if share.all():
            return qf, qc, tf, tc, top_k
