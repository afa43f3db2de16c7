"""Images, keypoints and descriptors: synthetic scenes and the binary feature file.

Descriptors are stored as float32 rows of unit L2 norm. Keypoints are stored as
float32 rows ``(x, y, scale, orientation)``, which keeps a whole image's
features in two contiguous arrays and makes the on-disk record a plain
reinterpretation of them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FormatError, InvalidScene, TruncatedFile, ZeroVector

DESCRIPTOR_DIM = 128
TWO_PI = 2.0 * math.pi

FEATURE_MAGIC = b"BMF1"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIQII")
_RECORD_FLOATS = 4 + DESCRIPTOR_DIM

PathLike = Union[str, Path]
Pair = Tuple[int, int]


def _wrap_angle(theta: np.ndarray) -> np.ndarray:
    wrapped = np.mod(theta, np.float32(TWO_PI)).astype(np.float32)
    # float32 rounding can land exactly on 2*pi
    wrapped[wrapped >= np.float32(TWO_PI)] = 0.0
    return wrapped


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"keypoint scale must be positive, got {self.scale}")
        theta = math.fmod(self.orientation, TWO_PI) % TWO_PI
        object.__setattr__(self, "orientation", 0.0 if theta >= TWO_PI else theta)


def normalize(vector: Sequence[float]) -> np.ndarray:
    """Scale a raw 128-vector to unit L2 norm.

    Args:
        vector: 128 finite components, not all zero.

    Returns:
        float32 array of shape (128,).

    Raises:
        ZeroVector: if every component is zero.
    """
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (DESCRIPTOR_DIM,):
        raise ValueError(f"descriptor must have {DESCRIPTOR_DIM} components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("descriptor has non-finite components")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVector("cannot normalize an all-zero descriptor")
    return (v / norm).astype(np.float32)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise :func:`normalize` for an (n, 128) array."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVector("cannot normalize an all-zero descriptor")
    return (m / norms).astype(np.float32)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """All features of one image.

    ``keypoints`` is an (n, 4) float32 array of x, y, scale, orientation and
    ``descriptors`` an (n, 128) float32 array. Both are made read-only.
    """

    image_id: int
    keypoints: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        kp = np.array(self.keypoints, dtype=np.float32).reshape(-1, 4)
        desc = np.array(self.descriptors, dtype=np.float32).reshape(-1, DESCRIPTOR_DIM)
        if len(kp) != len(desc):
            raise ValueError(f"{len(kp)} keypoints but {len(desc)} descriptors")
        if not (np.all(np.isfinite(kp)) and np.all(np.isfinite(desc))):
            raise ValueError("feature data must be finite")
        if len(kp) and not np.all(kp[:, 2] > 0):
            raise ValueError("keypoint scales must be positive")
        kp[:, 3] = _wrap_angle(kp[:, 3])
        kp.setflags(write=False)
        desc.setflags(write=False)
        object.__setattr__(self, "image_id", int(self.image_id))
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "descriptors", desc)

    @classmethod
    def from_keypoints(cls, image_id: int, keypoints: Iterable[Keypoint], descriptors) -> "FeatureSet":
        rows = [(k.x, k.y, k.scale, k.orientation) for k in keypoints]
        return cls(image_id, np.array(rows, dtype=np.float32).reshape(-1, 4), descriptors)

    def __len__(self) -> int:
        return len(self.descriptors)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.keypoints.tobytes() == other.keypoints.tobytes()
            and self.descriptors.tobytes() == other.descriptors.tobytes()
        )

    __hash__ = None

    def keypoint(self, i: int) -> Keypoint:
        x, y, s, o = (float(v) for v in self.keypoints[i])
        return Keypoint(x, y, s, o)

    @property
    def positions(self) -> np.ndarray:
        return self.keypoints[:, :2]

    @property
    def scales(self) -> np.ndarray:
        return self.keypoints[:, 2]


# --------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class SyntheticScene:
    """Parameters of a band-structured synthetic dataset.

    Images ``i`` and ``j`` observe common scene points iff
    ``|i - j| <= overlap_band``. ``outlier_fraction`` of every image's features
    are unique to that image. ``repeat_fraction`` of the scene points get a
    descriptor close to that of another point seen by the same images
    (repetitive texture), at a random offset of up to ``repeat_spread`` per
    component.
    """

    n_images: int
    points_per_image: int
    overlap_band: int
    noise_sigma: float = 0.01
    outlier_fraction: float = 0.2
    seed: int = 0
    image_size: float = 1000.0
    keypoint_noise_px: float = 0.3
    repeat_fraction: float = 0.0
    repeat_spread: float = 0.1

    def validate(self) -> None:
        if self.n_images < 1:
            raise InvalidScene("n_images must be >= 1")
        if self.points_per_image < 0:
            raise InvalidScene("points_per_image must be >= 0")
        if not 0 <= self.overlap_band < self.n_images:
            raise InvalidScene("overlap_band must be in [0, n_images)")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise InvalidScene("outlier_fraction must be in [0, 1]")
        if self.noise_sigma < 0:
            raise InvalidScene("noise_sigma must be >= 0")
        if not 0.0 <= self.repeat_fraction <= 1.0 or self.repeat_spread < 0:
            raise InvalidScene("repeat_fraction must be in [0, 1] and repeat_spread >= 0")
        if self.overlap_band > 0 and self.tracks_per_start < 1:
            raise InvalidScene(
                "too few shared points per image for the requested overlap band: "
                "need points_per_image * (1 - outlier_fraction) >= overlap_band + 1"
            )

    @property
    def n_unique(self) -> int:
        return int(round(self.points_per_image * self.outlier_fraction))

    @property
    def tracks_per_start(self) -> int:
        if self.overlap_band == 0:
            return 0
        return (self.points_per_image - self.n_unique) // (self.overlap_band + 1)


@dataclass
class GroundTruth:
    pairs: List[Pair]
    # (i, j) with i < j -> (k, 2) int array of (index in i, index in j)
    correspondences: Dict[Pair, np.ndarray] = field(default_factory=dict)

    @property
    def pair_set(self) -> set:
        return set(self.pairs)


def _random_units(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, DESCRIPTOR_DIM))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _random_affine(rng: np.random.Generator, image_size: float) -> Tuple[np.ndarray, np.ndarray]:
    theta = rng.uniform(-0.2, 0.2)
    scale = rng.uniform(0.9, 1.1)
    shear = rng.uniform(-0.05, 0.05)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a = scale * rot @ np.array([[1.0, shear], [0.0, 1.0]])
    t = rng.uniform(-0.05, 0.05, size=2) * image_size
    return a, t


def _repeat_centers(centers: np.ndarray, scene: SyntheticScene, per_start: int) -> np.ndarray:
    """Pull a fraction of track centers next to a co-visible track's center."""
    # separate stream: scenes without repeats stay identical
    rng = np.random.default_rng([scene.seed, 1])
    n_tracks = len(centers)
    out = centers.copy()
    chosen = rng.choice(n_tracks, size=int(round(scene.repeat_fraction * n_tracks)), replace=False)
    for k in np.sort(chosen):
        start = k // per_start
        lo = max(0, start - scene.overlap_band) * per_start
        hi = min(scene.n_images, start + scene.overlap_band + 1) * per_start
        partner = int(rng.integers(lo, hi - 1))
        partner += partner >= k
        spread = rng.uniform(0.0, scene.repeat_spread)
        v = centers[partner] + spread * rng.standard_normal(DESCRIPTOR_DIM)
        out[k] = v / np.linalg.norm(v)
    return out


def generate_synthetic(scene: SyntheticScene) -> Tuple[List[FeatureSet], GroundTruth]:
    """Build a deterministic band-structured dataset.

    Scene points ("tracks") start at image ``a`` and are visible in images
    ``a .. a + overlap_band``. Every image maps a shared world plane through
    its own affine transform, so any two overlapping images are related by an
    affine map. Descriptors of a track are noisy re-normalized copies of a
    Gaussian cluster center.
    """
    scene.validate()
    rng = np.random.default_rng(scene.seed)
    n, band, size = scene.n_images, scene.overlap_band, scene.image_size
    per_start = scene.tracks_per_start
    n_tracks = n * per_start

    centers = _random_units(rng, n_tracks)
    if scene.repeat_fraction > 0 and n_tracks > 1:
        centers = _repeat_centers(centers, scene, per_start)
    world = rng.uniform(0.0, size, size=(n_tracks, 2))
    track_scale = np.exp(rng.uniform(math.log(1.5), math.log(12.0), size=n_tracks))
    track_orient = rng.uniform(0.0, TWO_PI, size=n_tracks)

    features: List[FeatureSet] = []
    # image -> {track id: feature index}
    observed: List[Dict[int, int]] = []
    for i in range(n):
        a, t = _random_affine(rng, size)
        first_start = max(0, i - band)
        tracks = np.arange(first_start * per_start, (i + 1) * per_start, dtype=np.int64)
        n_fill = scene.points_per_image - len(tracks)

        desc_t = centers[tracks] + scene.noise_sigma * rng.standard_normal((len(tracks), DESCRIPTOR_DIM))
        pos_t = world[tracks] @ a.T + t + scene.keypoint_noise_px * rng.standard_normal((len(tracks), 2))
        scale_t = track_scale[tracks] * math.sqrt(abs(np.linalg.det(a)))
        orient_t = track_orient[tracks]

        desc_u = _random_units(rng, n_fill)
        pos_u = rng.uniform(0.0, size, size=(n_fill, 2))
        scale_u = np.exp(rng.uniform(math.log(1.5), math.log(12.0), size=n_fill))
        orient_u = rng.uniform(0.0, TWO_PI, size=n_fill)

        desc = np.vstack([desc_t, desc_u])
        kp = np.column_stack(
            [np.concatenate([pos_t, pos_u]), np.concatenate([scale_t, scale_u]), np.concatenate([orient_t, orient_u])]
        )
        order = rng.permutation(len(desc))
        desc = desc[order]
        kp = kp[order]
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        observed.append({int(tr): int(inverse[k]) for k, tr in enumerate(tracks)})
        features.append(FeatureSet(i, kp, normalize_rows(desc) if len(desc) else desc))

    pairs: List[Pair] = []
    corr: Dict[Pair, np.ndarray] = {}
    for i in range(n):
        for j in range(i + 1, min(n, i + band + 1)):
            common = sorted(set(observed[i]) & set(observed[j]))
            rows = np.array([(observed[i][tr], observed[j][tr]) for tr in common], dtype=np.int64).reshape(-1, 2)
            rows = rows[np.argsort(rows[:, 0], kind="stable")]
            pairs.append((i, j))
            corr[(i, j)] = rows
    return features, GroundTruth(pairs, corr)


def band_pairs(n_images: int, band: int) -> List[Pair]:
    return [(i, j) for i in range(n_images) for j in range(i + 1, min(n_images, i + band + 1))]


# --------------------------------------------------------------------------
# binary feature files


def feature_bytes(fs: FeatureSet) -> bytes:
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, fs.image_id, len(fs), DESCRIPTOR_DIM)
    body = np.hstack([fs.keypoints, fs.descriptors]).astype("<f4", copy=False)
    return header + body.tobytes()


def parse_feature_bytes(data: bytes) -> FeatureSet:
    if len(data) < _HEADER.size:
        raise TruncatedFile(f"feature header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, image_id, count, dim = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported feature file version {version}")
    if dim != DESCRIPTOR_DIM:
        raise FormatError(f"descriptor dimension {dim} != {DESCRIPTOR_DIM}")
    expected = _HEADER.size + count * (4 + dim) * 4
    if len(data) < expected:
        raise TruncatedFile(f"feature body needs {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after feature body")
    body = np.frombuffer(data, dtype="<f4", count=count * (4 + dim), offset=_HEADER.size)
    body = body.reshape(count, 4 + dim)
    return FeatureSet(image_id, body[:, :4], body[:, 4:])


def write_features(path: PathLike, fs: FeatureSet) -> None:
    Path(path).write_bytes(feature_bytes(fs))


def read_features(path: PathLike) -> FeatureSet:
    return parse_feature_bytes(Path(path).read_bytes())


def feature_filename(image_id: int) -> str:
    return f"img_{image_id:06d}.bmf"


def write_feature_dir(directory: PathLike, features: Iterable[FeatureSet]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for fs in features:
        write_features(d / feature_filename(fs.image_id), fs)


def read_feature_dir(directory: PathLike) -> List[FeatureSet]:
    features = [read_features(p) for p in sorted(Path(directory).glob("*.bmf"))]
    ids = [fs.image_id for fs in features]
    if len(set(ids)) != len(ids):
        raise FormatError(f"duplicate image ids in {directory}")
    return sorted(features, key=lambda fs: fs.image_id)


# --------------------------------------------------------------------------
# ground-truth text files


def write_pairs(path: PathLike, pairs: Iterable[Pair]) -> None:
    Path(path).write_text("".join(f"{i} {j}\n" for i, j in pairs))


def read_pairs(path: PathLike) -> List[Pair]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'i j'")
        out.append((int(parts[0]), int(parts[1])))
    return out


def write_correspondences(path: PathLike, correspondences: Dict[Pair, np.ndarray]) -> None:
    lines = []
    for (i, j) in sorted(correspondences):
        for q, t in correspondences[(i, j)]:
            lines.append(f"{i} {j} {int(q)} {int(t)}\n")
    Path(path).write_text("".join(lines))


def read_correspondences(path: PathLike) -> Dict[Pair, np.ndarray]:
    rows: Dict[Pair, list] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 'pair_i pair_j query_idx train_idx'")
        i, j, q, t = (int(p) for p in parts)
        rows.setdefault((i, j), []).append((q, t))
    return {k: np.array(v, dtype=np.int64).reshape(-1, 2) for k, v in rows.items()}


def write_ground_truth(directory: PathLike, gt: GroundTruth) -> None:
    d = Path(directory)
    write_pairs(d / "gt_pairs.txt", gt.pairs)
    write_correspondences(d / "gt_correspondences.txt", gt.correspondences)


def read_ground_truth(directory: PathLike) -> GroundTruth:
    d = Path(directory)
    pairs = read_pairs(d / "gt_pairs.txt")
    corr = read_correspondences(d / "gt_correspondences.txt")
    for p in pairs:
        corr.setdefault(p, np.zeros((0, 2), dtype=np.int64))
    return GroundTruth(pairs, corr)


def mean_descriptor(features: Sequence[FeatureSet]) -> np.ndarray:
    """Mean over every descriptor of every image (float64, shape (128,))."""
    total = np.zeros(DESCRIPTOR_DIM, dtype=np.float64)
    count = 0
    for fs in features:
        total += fs.descriptors.sum(axis=0, dtype=np.float64)
        count += len(fs)
    return total / count if count else total


def stack_descriptors(features: Sequence[FeatureSet]) -> np.ndarray:
    if not features:
        return np.zeros((0, DESCRIPTOR_DIM), dtype=np.float32)
    return np.vstack([fs.descriptors for fs in features])

