"""Binary hypervector primitives.

A hypervector is a bit-packed {0,1} vector of logical length ``dim``.
Class/adaptor targets come from a Sylvester (Kronecker-doubled) Hadamard
construction: after dropping the first row and column of the n x n
orthogonal matrix, every pair of surviving rows disagrees in exactly n/2
of the remaining n-1 columns, so the codebook rows are mutually
equidistant at Hamming distance (D+1)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, CapacityError, DimensionError

# Hard cap on logical dimensionality; bounds memory for degenerate configs.
MAX_DIM = 2**20 - 1


def dimensionality_for(num_classes: int, num_adaptors: int) -> int:
    """Smallest usable hypervector length for the given pair count.

    Returns 2**ceil(log2(k+1)) - 1 where k = num_classes * num_adaptors,
    i.e. one less than the next power of two that can hold k distinct
    non-initial Hadamard rows.
    """
    if num_classes < 1 or num_adaptors < 1:
        raise ArgumentError("num_classes and num_adaptors must be positive")
    k = num_classes * num_adaptors
    n = 1 << int(np.ceil(np.log2(k + 1)))
    n = max(n, 2)
    if n - 1 > MAX_DIM:
        raise CapacityError(
            f"required dimensionality {n - 1} exceeds maximum {MAX_DIM}"
        )
    return n - 1


@dataclass(frozen=True)
class Hypervector:
    """Immutable bit-packed binary vector.

    ``bits`` holds ceil(dim / 8) bytes, big-endian within each byte;
    padding bits past ``dim`` are always zero.
    """

    bits: np.ndarray
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "bits", np.ascontiguousarray(self.bits, dtype=np.uint8))
        self.bits.setflags(write=False)

    @classmethod
    def from_array(cls, arr) -> "Hypervector":
        arr = np.asarray(arr)
        if arr.ndim != 1:
            raise ArgumentError("expected a 1-D bit array")
        if not np.isin(arr, (0, 1)).all():
            raise ArgumentError("expected only 0/1 entries")
        return cls(bits=np.packbits(arr.astype(np.uint8)), dim=int(arr.size))

    def to_array(self) -> np.ndarray:
        """Unpacked uint8 {0,1} array of length ``dim``."""
        return np.unpackbits(self.bits, count=self.dim)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hypervector):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.dim, self.bits.tobytes()))


@dataclass(frozen=True)
class TargetCodebook:
    """Pseudo-orthogonal target rows, one per (adaptor, class) pair."""

    vectors: np.ndarray  # k x D uint8 {0,1}, row-major by adaptor then class
    num_classes: int
    num_adaptors: int
    dim: int = field(init=False)

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.uint8)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "dim", int(vectors.shape[1]))

    @property
    def num_rows(self) -> int:
        return int(self.vectors.shape[0])

    def row_index(self, adaptor: int, class_index: int) -> int:
        if not (0 <= adaptor < self.num_adaptors):
            raise ArgumentError(f"adaptor index {adaptor} out of range")
        if not (0 <= class_index < self.num_classes):
            raise ArgumentError(f"class index {class_index} out of range")
        return adaptor * self.num_classes + class_index

    def target(self, adaptor: int, class_index: int) -> np.ndarray:
        """Target bit row for one (adaptor, class) pair."""
        return self.vectors[self.row_index(adaptor, class_index)]

    def target_hv(self, adaptor: int, class_index: int) -> Hypervector:
        return Hypervector.from_array(self.target(adaptor, class_index))


def _hadamard_rows(row_ids: np.ndarray, n: int) -> np.ndarray:
    """Selected rows of the n x n Kronecker-doubled {-1,1} matrix, as {0,1}.

    Entry (i, j) of the doubled matrix is +1 iff popcount(i & j) is even,
    so rows are computed directly without materializing all n x n entries.
    Column 0 is excluded (the dropped first column).
    """
    cols = np.arange(1, n, dtype=np.uint64)
    overlap = np.bitwise_and.outer(row_ids.astype(np.uint64), cols)
    parity = np.bitwise_count(overlap).astype(np.uint8) & 1
    return 1 - parity  # even parity -> +1 -> bit 1


def generate_codebook(num_classes: int, num_adaptors: int, seed) -> TargetCodebook:
    """Generate k = num_classes * num_adaptors pseudo-orthogonal target rows.

    The first row and column of the Hadamard matrix are removed (trains
    more stably than keeping the all-ones row), the remaining rows are
    shuffled with the seeded generator, the first k are kept, and -1 is
    mapped to 0. Deterministic given ``seed``.
    """
    D = dimensionality_for(num_classes, num_adaptors)
    k = num_classes * num_adaptors
    n = D + 1
    rng = np.random.default_rng(seed)
    order = rng.permutation(np.arange(1, n))  # shuffle of the surviving rows
    bits = _hadamard_rows(order[:k], n)
    return TargetCodebook(vectors=bits, num_classes=num_classes, num_adaptors=num_adaptors)


def sample_binarize(scores, rng: np.random.Generator | None = None,
                    deterministic: bool = False) -> Hypervector:
    """Binarize per-element probabilities into a hypervector.

    Element i is 1 with probability scores[i] (or, in deterministic mode,
    iff scores[i] >= 0.5, matching the bundle tie rule).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ArgumentError("scores must lie in [0, 1]")
    if deterministic:
        bits = (scores >= 0.5).astype(np.uint8)
    else:
        if rng is None:
            raise ArgumentError("rng is required unless deterministic=True")
        bits = (rng.random(scores.size) < scores).astype(np.uint8)
    return Hypervector(bits=np.packbits(bits), dim=int(scores.size))


def bundle_bits(rows: np.ndarray) -> np.ndarray:
    """Element-wise majority of an m x D {0,1} matrix; 0.5 ties round to 1."""
    rows = np.asarray(rows, dtype=np.uint8)
    counts = rows.sum(axis=0, dtype=np.int64)
    return (2 * counts >= rows.shape[0]).astype(np.uint8)


def bundle(vectors: list[Hypervector]) -> Hypervector:
    """Bundle (majority-superpose) hypervectors of a shared dimension."""
    if not vectors:
        raise ArgumentError("cannot bundle an empty list")
    dim = vectors[0].dim
    for v in vectors[1:]:
        if v.dim != dim:
            raise DimensionError(f"mixed dims {dim} vs {v.dim}")
    stacked = np.stack([v.to_array() for v in vectors])
    return Hypervector(bits=np.packbits(bundle_bits(stacked)), dim=dim)


def hamming(a: Hypervector, b: Hypervector) -> int:
    """Number of disagreeing bits between two equal-dim hypervectors."""
    if a.dim != b.dim:
        raise DimensionError(f"dim mismatch {a.dim} vs {b.dim}")
    return int(np.bitwise_count(np.bitwise_xor(a.bits, b.bits)).sum())


def hamming_to_rows(query_bits: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Hamming distances from one unpacked bit row to each row of a matrix."""
    return np.count_nonzero(rows != query_bits[None, :], axis=1)
