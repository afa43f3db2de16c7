"""Two-view correspondences with a known fundamental matrix, for checking the verifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TwoViewSample:
    x1: np.ndarray
    x2: np.ndarray
    # True for correspondences generated from a 3D point
    inlier: np.ndarray
    fundamental: np.ndarray


def _rotation(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    theta = rng.uniform(-max_angle, max_angle)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * k @ k


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def two_view_sample(
    n_inliers: int,
    n_outliers: int = 0,
    noise_px: float = 0.0,
    image_size: float = 1000.0,
    seed: int = 0,
    depth_range: tuple = (9.0, 11.0),
    baseline: float = 1.0,
) -> TwoViewSample:
    """Project random scene points into two pinhole cameras, then append uniform outliers.

    The defaults mimic a nadir aerial pair: relief of about a fifth of the
    flying height and a baseline of a tenth of it. Inliers come first; outlier
    rows pair independent uniform positions.
    """
    rng = np.random.default_rng(seed)
    focal = image_size
    k = np.array([[focal, 0, image_size / 2], [0, focal, image_size / 2], [0, 0, 1.0]])
    r = _rotation(rng, 0.05)
    t = np.array([1.0, rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)])
    t *= baseline / np.linalg.norm(t)
    near, far = depth_range
    half = 0.5 * near * image_size / focal

    pts = []
    while len(pts) < n_inliers:
        xyz = np.column_stack(
            [
                rng.uniform(-half, half, 4 * n_inliers + 8) * 1.2,
                rng.uniform(-half, half, 4 * n_inliers + 8) * 1.2,
                rng.uniform(near, far, 4 * n_inliers + 8),
            ]
        )
        p1 = xyz @ k.T
        cam2 = xyz @ r.T + t
        p2 = cam2 @ k.T
        ok = (cam2[:, 2] > 0.5)
        u1 = p1[:, :2] / p1[:, 2:]
        u2 = p2[:, :2] / p2[:, 2:]
        ok &= np.all((u1 >= 0) & (u1 < image_size) & (u2 >= 0) & (u2 < image_size), axis=1)
        pts.extend(np.hstack([u1[ok], u2[ok]]).tolist())
    pts = np.array(pts[:n_inliers]).reshape(-1, 4)
    x1 = pts[:, :2] + noise_px * rng.standard_normal((n_inliers, 2))
    x2 = pts[:, 2:] + noise_px * rng.standard_normal((n_inliers, 2))

    o1 = rng.uniform(0, image_size, (n_outliers, 2))
    o2 = rng.uniform(0, image_size, (n_outliers, 2))
    kinv = np.linalg.inv(k)
    f = kinv.T @ _skew(t) @ r @ kinv
    f /= np.linalg.norm(f)
    return TwoViewSample(
        np.vstack([x1, o1]),
        np.vstack([x2, o2]),
        np.concatenate([np.ones(n_inliers, bool), np.zeros(n_outliers, bool)]),
        f,
    )
