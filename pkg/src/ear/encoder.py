"""Frozen feature sources.

The synthetic encoder is a seeded random tanh stack whose layer outputs
serve as tap points; it is never trained, so it stands in for a frozen
pretrained backbone at desk scale. Precomputed features travel in EARF
containers (binary, little-endian) so external exporters can feed the
same pipeline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgumentError,
    BadMagicError,
    ConfigError,
    DimensionError,
    NonFiniteError,
    TruncatedFileError,
    VersionError,
)

EARF_MAGIC = b"EARF"
EARF_VERSION = 1

DEFAULT_TAP_DIMS = (48, 40, 32, 28, 24, 20, 16)


class TapFeatures:
    """Per-tap pooled feature vectors for one sample; tap ids are 0..T-1."""

    __slots__ = ("taps",)

    def __init__(self, taps):
        self.taps = tuple(np.asarray(t, dtype=np.float32) for t in taps)

    def __getitem__(self, tap_id: int) -> np.ndarray:
        return self.taps[tap_id]

    def __len__(self) -> int:
        return len(self.taps)

    @property
    def tap_dims(self) -> tuple[int, ...]:
        return tuple(t.size for t in self.taps)


@dataclass
class FeatureDataset:
    """Columnar multi-tap dataset: one (n, dim_t) matrix per tap."""

    tap_matrices: list[np.ndarray]
    labels: np.ndarray
    domain_ids: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.tap_matrices = [np.ascontiguousarray(m, dtype=np.float32) for m in self.tap_matrices]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.int64)
        n = len(self.labels)
        if any(m.shape[0] != n for m in self.tap_matrices) or self.domain_ids.size != n:
            raise ArgumentError("parallel arrays must share length")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ArgumentError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def tap_dims(self) -> tuple[int, ...]:
        return tuple(m.shape[1] for m in self.tap_matrices)

    @property
    def num_taps(self) -> int:
        return len(self.tap_matrices)

    def sample(self, i: int) -> TapFeatures:
        return TapFeatures([m[i] for m in self.tap_matrices])

    def subset(self, indices) -> "FeatureDataset":
        indices = np.asarray(indices)
        return FeatureDataset(
            [m[indices] for m in self.tap_matrices],
            self.labels[indices],
            self.domain_ids[indices],
            self.num_classes,
        )

    @classmethod
    def from_taps(cls, samples: list[TapFeatures], labels, domain_ids, num_classes: int):
        if not samples:
            raise ArgumentError("need at least one sample")
        mats = [
            np.stack([s[t] for s in samples]) for t in range(len(samples[0]))
        ]
        return cls(mats, labels, domain_ids, num_classes)


class SyntheticEncoder:
    """Frozen random affine + tanh stack with one tap per layer.

    Outputs are deterministic in (seed, input); nothing here is ever
    updated by training code.
    """

    def __init__(self, input_dim: int, tap_dims=DEFAULT_TAP_DIMS, seed: int = 0,
                 bias_scale: float = 0.0):
        if input_dim < 1 or any(d < 1 for d in tap_dims):
            raise ArgumentError("dimensions must be positive")
        self.input_dim = int(input_dim)
        self.tap_dims = tuple(int(d) for d in tap_dims)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self._weights = []
        self._biases = []
        prev = self.input_dim
        for width in self.tap_dims:
            # tanh-gain scaling keeps activation variance stable in depth
            w = rng.normal(0.0, (5.0 / 3.0) / np.sqrt(prev), size=(prev, width))
            b = rng.normal(0.0, bias_scale, size=width) if bias_scale else np.zeros(width)
            self._weights.append(w.astype(np.float32))
            self._biases.append(b.astype(np.float32))
            prev = width

    @property
    def num_taps(self) -> int:
        return len(self.tap_dims)

    def encode_batch(self, raw: np.ndarray) -> list[np.ndarray]:
        """Tap activations for a (n, input_dim) batch, one matrix per tap."""
        raw = np.asarray(raw, dtype=np.float32)
        if raw.ndim != 2 or raw.shape[1] != self.input_dim:
            raise DimensionError(
                f"expected (n, {self.input_dim}) input, got {raw.shape}"
            )
        outs = []
        h = raw
        for w, b in zip(self._weights, self._biases):
            h = np.tanh(h @ w + b)
            outs.append(h)
        return outs

    def encode(self, raw: np.ndarray) -> TapFeatures:
        raw = np.asarray(raw, dtype=np.float32)
        if raw.ndim != 1:
            raise DimensionError("encode expects a single vector; use encode_batch")
        mats = self.encode_batch(raw[None, :])
        return TapFeatures([m[0] for m in mats])


# ---------------------------------------------------------------------------
# EARF container
# ---------------------------------------------------------------------------

def write_feature_file(path, ds: FeatureDataset):
    """Serialize a dataset to the EARF layout (little-endian, f32 payload)."""
    n = len(ds)
    header = struct.pack(
        "<4sHQH", EARF_MAGIC, EARF_VERSION, n, ds.num_taps
    )
    dims = np.asarray(ds.tap_dims, dtype="<u4").tobytes()
    ncls = struct.pack("<I", ds.num_classes)
    labels = ds.labels.astype("<u4").tobytes()
    domains = ds.domain_ids.astype("<u4").tobytes()
    payload = np.concatenate(
        [m.astype("<f4") for m in ds.tap_matrices], axis=1
    ).tobytes() if n else b""
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(ncls)
        fh.write(labels)
        fh.write(domains)
        fh.write(payload)


def load_feature_file(path) -> FeatureDataset:
    """Parse an EARF file; raises a distinct error per corruption mode."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != EARF_MAGIC:
        raise BadMagicError(f"{path}: not an EARF file")
    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: header cut short")
    _, version, n, tap_count = struct.unpack_from("<4sHQH", blob, 0)
    if version != EARF_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    off = 16
    need = tap_count * 4 + 4
    if len(blob) < off + need:
        raise TruncatedFileError(f"{path}: tap dim table cut short")
    tap_dims = np.frombuffer(blob, dtype="<u4", count=tap_count, offset=off)
    off += tap_count * 4
    (num_classes,) = struct.unpack_from("<I", blob, off)
    off += 4
    total_dim = int(tap_dims.sum())
    expected = off + n * 4 + n * 4 + n * total_dim * 4
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: payload shorter than header promises "
            f"({len(blob)} vs {expected} bytes)"
        )
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int64)
    off += n * 4
    domains = np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int64)
    off += n * 4
    flat = np.frombuffer(blob, dtype="<f4", count=n * total_dim, offset=off)
    if not np.isfinite(flat).all():
        raise NonFiniteError(f"{path}: payload contains non-finite values")
    rows = flat.reshape(n, total_dim)
    mats, col = [], 0
    for d in tap_dims:
        mats.append(rows[:, col : col + int(d)].copy())
        col += int(d)
    return FeatureDataset(mats, labels, domains, int(num_classes))


# ---------------------------------------------------------------------------
# Synthetic continual scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """Shape of a synthetic class-incremental curriculum."""

    num_tasks: int = 3
    classes_per_task: int = 10
    repeats: int = 2
    segment_length: int = 2000
    separation: float = 6.0
    class_spread: float = 2.5
    noise_scale: float = 1.0
    raw_dim: int = 24
    test_per_class: int = 40

    def validate(self):
        if self.num_tasks < 1:
            raise ConfigError("need at least one task")
        if self.classes_per_task < 2:
            raise ConfigError("need at least two classes per task")
        if self.segment_length <= 0:
            raise ConfigError("segment_length must be positive")
        if self.separation < 0:
            raise ConfigError("separation must be nonnegative")
        if self.repeats < 1:
            raise ConfigError("repeats must be positive")

    @property
    def total_classes(self) -> int:
        return self.num_tasks * self.classes_per_task


class EventTruth:
    """Hidden per-event ground truth; only oracle and evaluator may look."""

    __slots__ = ("label", "domain_id")

    def __init__(self, label: int, domain_id: int):
        self.label = int(label)
        self.domain_id = int(domain_id)


class StreamEvent:
    """One timestep: tap features plus hidden truth."""

    __slots__ = ("step", "taps", "truth")

    def __init__(self, step: int, taps: TapFeatures, truth: EventTruth):
        self.step = step
        self.taps = taps
        self.truth = truth


@dataclass
class Scenario:
    """A generated curriculum: ordered events plus held-out test sets."""

    spec: ScenarioSpec
    encoder: SyntheticEncoder
    events: list[StreamEvent]
    curriculum: list[int]  # task id per segment
    test_sets: dict[int, FeatureDataset] = field(default_factory=dict)

    @property
    def segment_length(self) -> int:
        return self.spec.segment_length

    def task_of_step(self, step: int) -> int:
        return self.curriculum[step // self.spec.segment_length]


def make_synthetic_scenario(spec: ScenarioSpec, seed,
                            encoder: SyntheticEncoder | None = None) -> Scenario:
    """Build the event stream and per-task test sets for a curriculum.

    Class means share a per-class direction across tasks and are offset
    by a per-task center scaled by ``separation``; separation 0 therefore
    makes all task distributions identical. Pure in (spec, seed).
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    if encoder is None:
        encoder = SyntheticEncoder(spec.raw_dim, seed=int(rng.integers(2**31)))
    elif encoder.input_dim != spec.raw_dim:
        raise ConfigError("encoder input dim does not match scenario raw_dim")

    class_dirs = rng.normal(0.0, 1.0, size=(spec.classes_per_task, spec.raw_dim))
    task_centers = rng.normal(0.0, 1.0, size=(spec.num_tasks, spec.raw_dim))
    norms = np.linalg.norm(task_centers, axis=1, keepdims=True)
    task_centers = spec.separation * task_centers / np.maximum(norms, 1e-12)

    def sample_raw(task: int, local_class: np.ndarray) -> np.ndarray:
        means = task_centers[task] + spec.class_spread * class_dirs[local_class]
        return means + spec.noise_scale * rng.normal(size=(len(local_class), spec.raw_dim))

    curriculum = [t for t in range(spec.num_tasks) for _ in range(spec.repeats)]
    rng.shuffle(curriculum)

    events: list[StreamEvent] = []
    step = 0
    for task in curriculum:
        locals_ = rng.integers(0, spec.classes_per_task, size=spec.segment_length)
        raw = sample_raw(task, locals_)
        tap_mats = encoder.encode_batch(raw)
        for i in range(spec.segment_length):
            taps = TapFeatures([m[i] for m in tap_mats])
            truth = EventTruth(task * spec.classes_per_task + int(locals_[i]), task)
            events.append(StreamEvent(step, taps, truth))
            step += 1

    test_sets: dict[int, FeatureDataset] = {}
    for task in range(spec.num_tasks):
        locals_ = np.repeat(np.arange(spec.classes_per_task), spec.test_per_class)
        raw = sample_raw(task, locals_)
        mats = encoder.encode_batch(raw)
        test_sets[task] = FeatureDataset(
            mats,
            task * spec.classes_per_task + locals_,
            np.full(locals_.size, task),
            spec.total_classes,
        )
    return Scenario(spec, encoder, events, curriculum, test_sets)


def scenario_train_dataset(scenario: Scenario, task: int, size: int,
                           seed) -> FeatureDataset:
    """Freshly sampled labeled training data for one task (oracle stand-in
    for offline experiments; the stream path collects its own buffers)."""
    spec = scenario.spec
    rng = np.random.default_rng(seed)
    events = [e for e in scenario.events if e.truth.domain_id == task]
    if not events:
        raise ArgumentError(f"task {task} does not appear in the curriculum")
    picks = rng.choice(len(events), size=min(size, len(events)), replace=False)
    chosen = [events[int(i)] for i in picks]
    return FeatureDataset.from_taps(
        [e.taps for e in chosen],
        [e.truth.label for e in chosen],
        [e.truth.domain_id for e in chosen],
        spec.total_classes,
    )
