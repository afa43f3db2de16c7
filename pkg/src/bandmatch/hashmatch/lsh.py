"""Random-hyperplane hash functions and per-image binary codes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import DESCRIPTOR_DIM, FeatureSet

N_TABLES = 6
COARSE_BITS = 8
FINE_BITS = 128


@dataclass(frozen=True, eq=False)
class HashFunctions:
    """``coarse`` has shape (n_tables, coarse_bits, dim); ``fine`` (fine_bits, dim)."""

    coarse: np.ndarray
    fine: np.ndarray
    seed: int

    @property
    def n_tables(self) -> int:
        return self.coarse.shape[0]

    @property
    def coarse_bits(self) -> int:
        return self.coarse.shape[1]

    @property
    def fine_bits(self) -> int:
        return self.fine.shape[0]

    @property
    def fine_words(self) -> int:
        return (self.fine_bits + 63) // 64

    def signature(self) -> tuple:
        return (self.seed, self.n_tables, self.coarse_bits, self.fine_bits, self.coarse.shape[2])

    def __eq__(self, other):
        if not isinstance(other, HashFunctions):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.coarse, other.coarse)
            and np.array_equal(self.fine, other.fine)
        )

    __hash__ = None


def make_hash_functions(
    seed: int = 0,
    n_tables: int = N_TABLES,
    coarse_bits: int = COARSE_BITS,
    fine_bits: int = FINE_BITS,
    dim: int = DESCRIPTOR_DIM,
) -> HashFunctions:
    if not 1 <= coarse_bits <= 32:
        raise ValueError("coarse_bits must be in 1..32")
    if n_tables < 1 or fine_bits < 1:
        raise ValueError("n_tables and fine_bits must be positive")
    rng = np.random.default_rng(seed)
    coarse = rng.standard_normal((n_tables, coarse_bits, dim))
    fine = rng.standard_normal((fine_bits, dim))
    coarse.setflags(write=False)
    fine.setflags(write=False)
    return HashFunctions(coarse, fine, int(seed))


@dataclass(frozen=True, eq=False)
class HashCodeSet:
    """Codes for one image.

    ``coarse`` is (n, n_tables) bucket ids; ``fine`` is (n, words) uint64 with
    bit ``b`` of the long code at word ``b // 64``, position ``b % 64``.
    """

    image_id: int
    coarse: np.ndarray
    fine: np.ndarray
    signature: tuple

    def __len__(self) -> int:
        return self.coarse.shape[0]

    @property
    def size_bytes(self) -> int:
        return int(self.coarse.nbytes + self.fine.nbytes)

    def __eq__(self, other):
        if not isinstance(other, HashCodeSet):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.signature == other.signature
            and np.array_equal(self.coarse, other.coarse)
            and np.array_equal(self.fine, other.fine)
        )

    __hash__ = None


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(n, n_bits) bool -> (n, ceil(n_bits / 64)) uint64, little-endian within words."""
    n, n_bits = bits.shape
    words = (n_bits + 63) // 64
    padded = np.zeros((n, words * 64), dtype=np.uint64)
    padded[:, :n_bits] = bits
    weights = np.left_shift(np.uint64(1), np.arange(64, dtype=np.uint64))
    return (padded.reshape(n, words, 64) * weights).sum(axis=2, dtype=np.uint64)


def compute_codes(fs: FeatureSet, hf: HashFunctions, centering_mean: np.ndarray) -> HashCodeSet:
    """Sign-of-projection codes of the centered descriptors; a zero projection gives bit 0."""
    mean = np.asarray(centering_mean, dtype=np.float64)
    if not np.all(np.isfinite(mean)):
        raise ValueError("centering mean must be finite")
    x = fs.descriptors.astype(np.float64) - mean
    n = x.shape[0]
    coarse_bits = np.einsum("nd,tbd->ntb", x, hf.coarse) > 0
    weights = np.left_shift(np.uint32(1), np.arange(hf.coarse_bits, dtype=np.uint32))
    coarse = (coarse_bits * weights).sum(axis=2, dtype=np.uint32) if n else np.zeros((0, hf.n_tables), np.uint32)
    fine = pack_bits((x @ hf.fine.T) > 0) if n else np.zeros((0, hf.fine_words), np.uint64)
    coarse.setflags(write=False)
    fine.setflags(write=False)
    return HashCodeSet(fs.image_id, coarse, fine, hf.signature())


def hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bit distance between packed codes; broadcasts over leading axes."""
    return np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int64)
