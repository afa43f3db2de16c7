import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandmatch.errors import FormatError, InvalidScene, TruncatedFile, ZeroVector
from bandmatch.features import (
    DESCRIPTOR_DIM,
    FeatureSet,
    Keypoint,
    SyntheticScene,
    band_pairs,
    feature_bytes,
    generate_synthetic,
    mean_descriptor,
    normalize,
    normalize_rows,
    parse_feature_bytes,
    read_feature_dir,
    read_features,
    read_ground_truth,
    write_feature_dir,
    write_features,
    write_ground_truth,
)


def test_normalize_all_ones():
    v = normalize(np.ones(128))
    assert np.allclose(v, 1 / math.sqrt(128), atol=1e-7)
    assert abs(float(v[0]) - 0.08839) < 1e-5


def test_normalize_unit_vector_unchanged(rng):
    u = rng.standard_normal(128)
    u /= np.linalg.norm(u)
    assert np.allclose(normalize(u), u, atol=1e-7)


def test_normalize_scaling():
    v = np.zeros(128)
    v[0] = 2.0
    expect = np.zeros(128)
    expect[0] = 1.0
    assert np.array_equal(normalize(v), expect.astype(np.float32))


def test_normalize_zero_vector():
    with pytest.raises(ZeroVector):
        normalize(np.zeros(128))
    with pytest.raises(ZeroVector):
        normalize_rows(np.zeros((2, 128)))


def test_normalize_rejects_bad_input():
    with pytest.raises(ValueError):
        normalize(np.ones(5))
    v = np.ones(128)
    v[3] = np.nan
    with pytest.raises(ValueError):
        normalize(v)


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=128, max_size=128))
def test_normalize_idempotent(values):
    v = np.array(values)
    if np.linalg.norm(v) < 1e-6:
        return
    once = normalize(v)
    assert abs(np.linalg.norm(once.astype(np.float64)) - 1.0) < 1e-5
    twice = normalize(once)
    assert np.allclose(once, twice, atol=1e-7)


def test_keypoint_orientation_wraps():
    assert Keypoint(0, 0, 1.0, 2 * math.pi + 0.5).orientation == pytest.approx(0.5)
    assert 0 <= Keypoint(0, 0, 1.0, -0.1).orientation < 2 * math.pi
    with pytest.raises(ValueError):
        Keypoint(0, 0, 0.0)


def test_featureset_length_mismatch():
    with pytest.raises(ValueError):
        FeatureSet(0, np.ones((2, 4)), np.ones((3, 128)))


def test_ground_truth_small_band():
    _, gt = generate_synthetic(SyntheticScene(4, 20, 1))
    assert sorted(gt.pairs) == [(0, 1), (1, 2), (2, 3)]


def test_ground_truth_no_overlap():
    _, gt = generate_synthetic(SyntheticScene(5, 20, 0))
    assert gt.pairs == []


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_images=3, points_per_image=10, overlap_band=3),
        dict(n_images=3, points_per_image=10, overlap_band=1, outlier_fraction=1.5),
        dict(n_images=0, points_per_image=10, overlap_band=0),
    ],
)
def test_invalid_scene(kwargs):
    with pytest.raises(InvalidScene):
        generate_synthetic(SyntheticScene(**kwargs))


def test_generation_deterministic(tmp_path):
    scene = SyntheticScene(10, 40, 3, seed=7)
    for run in ("a", "b"):
        feats, gt = generate_synthetic(scene)
        write_feature_dir(tmp_path / run, feats)
        write_ground_truth(tmp_path / run, gt)
    for f in sorted((tmp_path / "a").iterdir()):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    for f in sorted((tmp_path / "a").glob("*/*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


@given(st.integers(1, 12), st.integers(0, 11), st.integers(0, 10_000))
def test_ground_truth_equals_band(n, band, seed):
    band = min(band, n - 1)
    feats, gt = generate_synthetic(SyntheticScene(n, 3 * (band + 1) + 2, band, outlier_fraction=0.1, seed=seed))
    expect = {(i, j) for i in range(n) for j in range(i + 1, n) if j - i <= band}
    assert gt.pair_set == expect
    assert set(band_pairs(n, band)) == expect
    assert len(feats) == n


def test_correspondences_share_descriptors(small_scene):
    feats, gt = small_scene
    for (i, j), corr in gt.correspondences.items():
        assert len(corr) > 0
        d = np.linalg.norm(
            feats[i].descriptors[corr[:, 0]].astype(np.float64) - feats[j].descriptors[corr[:, 1]], axis=1
        )
        # noisy copies of one cluster center stay far closer than random unit vectors (~1.41)
        assert np.all(d < 0.5)


def test_descriptors_unit_norm(small_scene):
    for fs in small_scene[0]:
        n = np.linalg.norm(fs.descriptors.astype(np.float64), axis=1)
        assert np.all(np.abs(n - 1) < 1e-5)
        assert fs.descriptors.shape[1] == DESCRIPTOR_DIM


def test_feature_round_trip(tmp_path, small_scene):
    fs = small_scene[0][4]
    write_features(tmp_path / "f.bmf", fs)
    back = read_features(tmp_path / "f.bmf")
    assert back == fs
    assert feature_bytes(back) == feature_bytes(fs)


def test_empty_featureset_round_trip(tmp_path):
    fs = FeatureSet(9, np.zeros((0, 4)), np.zeros((0, 128)))
    write_features(tmp_path / "e.bmf", fs)
    back = read_features(tmp_path / "e.bmf")
    assert len(back) == 0 and back.image_id == 9


def test_corrupted_magic(small_scene):
    data = bytearray(feature_bytes(small_scene[0][0]))
    data[0:4] = b"XXXX"
    with pytest.raises(FormatError):
        parse_feature_bytes(bytes(data))


def test_bad_version(small_scene):
    data = bytearray(feature_bytes(small_scene[0][0]))
    data[4] = 99
    with pytest.raises(FormatError):
        parse_feature_bytes(bytes(data))


def test_truncated(small_scene):
    data = feature_bytes(small_scene[0][0])
    with pytest.raises(TruncatedFile):
        parse_feature_bytes(data[:-5])
    with pytest.raises(TruncatedFile):
        parse_feature_bytes(data[:10])


@given(st.integers(0, 30), st.integers(0, 2**40), st.integers(0, 1000))
def test_round_trip_property(n, image_id, seed):
    rng = np.random.default_rng(seed)
    kp = np.column_stack([rng.uniform(0, 1000, (n, 2)), rng.uniform(0.5, 8, n), rng.uniform(0, 6.28, n)])
    fs = FeatureSet(image_id, kp, normalize_rows(rng.standard_normal((n, 128)) + 1e-3) if n else np.zeros((0, 128)))
    back = parse_feature_bytes(feature_bytes(fs))
    assert back == fs


def test_dir_and_ground_truth_round_trip(tmp_path, small_scene):
    feats, gt = small_scene
    write_feature_dir(tmp_path / "feat", feats)
    write_ground_truth(tmp_path, gt)
    back = read_feature_dir(tmp_path / "feat")
    assert [f.image_id for f in back] == [f.image_id for f in feats]
    assert all(a == b for a, b in zip(back, feats))
    gt2 = read_ground_truth(tmp_path)
    assert gt2.pair_set == gt.pair_set
    for p, corr in gt.correspondences.items():
        assert np.array_equal(gt2.correspondences[p], corr)


def test_mean_descriptor(small_scene):
    feats = small_scene[0]
    allrows = np.vstack([f.descriptors.astype(np.float64) for f in feats])
    assert np.allclose(mean_descriptor(feats), allrows.mean(axis=0), atol=1e-6)


def _close_siblings(desc: np.ndarray, radius: float) -> int:
    d = np.sqrt(np.maximum(2.0 - 2.0 * desc @ desc.T, 0.0))
    np.fill_diagonal(d, np.inf)
    return int((d.min(axis=1) < radius).sum())


def test_repeat_fraction_zero_leaves_scene_unchanged():
    base, gt = generate_synthetic(SyntheticScene(8, 60, 2, seed=4))
    same, gt2 = generate_synthetic(SyntheticScene(8, 60, 2, seed=4, repeat_fraction=0.0, repeat_spread=0.5))
    for a, b in zip(base, same):
        assert feature_bytes(a) == feature_bytes(b)
    assert gt.pairs == gt2.pairs


def test_repeat_fraction_only_moves_descriptors_toward_siblings():
    plain, gt = generate_synthetic(SyntheticScene(10, 120, 3, noise_sigma=0.01, seed=6))
    rep, gt_rep = generate_synthetic(
        SyntheticScene(10, 120, 3, noise_sigma=0.01, repeat_fraction=0.5, seed=6)
    )
    assert gt.pairs == gt_rep.pairs
    for p in gt.pairs:
        np.testing.assert_array_equal(gt.correspondences[p], gt_rep.correspondences[p])
    for a, b in zip(plain, rep):
        np.testing.assert_array_equal(a.keypoints, b.keypoints)
    # random unit vectors in 128-D sit about sqrt(2) apart; repeated ones much closer
    assert sum(_close_siblings(f.descriptors, 1.0) for f in plain) == 0
    assert sum(_close_siblings(f.descriptors, 1.0) for f in rep) >= 0.1 * sum(len(f) for f in rep)
