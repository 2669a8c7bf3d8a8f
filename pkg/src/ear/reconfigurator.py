"""Per-domain head: bundles adaptor hypervectors, stores class prototypes,
classifies by nearest prototype, and turns nearest-prototype distance into
a calibrated OOD probability via a shifted Weibull fit.

Distances are normalized by the hypervector dimension before calibration
so scores stay comparable across domain models of different sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptor import AdaptorParams, AdaptorSpec, forward
from .encoder import FeatureDataset, TapFeatures
from .errors import ArgumentError, CalibrationError, NumericError, StateError
from .hdc import Hypervector, TargetCodebook, bundle, bundle_bits, hamming_to_rows

aggregate = bundle  # bundling across the adaptor set is plain majority


@dataclass(frozen=True)
class WeibullParams:
    """Shifted two-parameter Weibull: scale a, shape b, location c."""

    a: float
    b: float
    c: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.c < 0:
            raise ArgumentError("require a > 0, b > 0, c >= 0")

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        m = x > self.c
        z = (x[m] - self.c) / self.a
        out[m] = (self.b / self.a) * z ** (self.b - 1.0) * np.exp(-(z**self.b))
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape)
        m = x > self.c
        z = (np.asarray(x)[m] - self.c) / self.a
        out[m] = 1.0 - np.exp(-(z**self.b))
        return out if out.ndim else float(out)

    def median(self) -> float:
        return self.c + self.a * np.log(2.0) ** (1.0 / self.b)

    def log_likelihood(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        y = np.maximum(x - self.c, _Y_FLOOR)
        z = y / self.a
        return float(np.sum(np.log(self.b / self.a) + (self.b - 1.0) * np.log(z) - z**self.b))


_Y_FLOOR = 1e-9  # keeps log terms finite when a distance equals the location
_NEWTON_MAX_ITER = 200
_NEWTON_TOL = 1e-12


def fit_weibull(distances) -> WeibullParams:
    """Maximum-likelihood (a, b) with c pinned just below the sample minimum.

    Newton iterations solve the profiled shape equation; the scale then
    follows in closed form. Raises CalibrationError on degenerate input
    and NumericError if the iteration fails to settle.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.size < 20:
        raise CalibrationError(f"need at least 20 distances, got {d.size}")
    if np.ptp(d) == 0.0:
        raise CalibrationError("all distances identical; nothing to fit")
    if (d < 0).any() or not np.isfinite(d).all():
        raise CalibrationError("distances must be finite and nonnegative")

    c = max(0.0, float(d.min()) - 1e-6)
    y = np.maximum(d - c, _Y_FLOOR)
    ln_y = np.log(y)
    mean_ln = ln_y.mean()

    # moment-matched start: std(ln y) = pi / (b sqrt(6)) for a true Weibull
    sd = ln_y.std()
    b = float(np.pi / (sd * np.sqrt(6.0))) if sd > 0 else 1.0
    b = min(max(b, 1e-3), 1e3)

    for _ in range(_NEWTON_MAX_ITER):
        yb = y**b
        s0 = yb.sum()
        s1 = (yb * ln_y).sum()
        s2 = (yb * ln_y * ln_y).sum()
        g = s1 / s0 - 1.0 / b - mean_ln
        gp = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (b * b)
        step = g / gp
        nb = b - step
        while nb <= 0:
            step *= 0.5
            nb = b - step
        if not np.isfinite(nb):
            raise NumericError("shape update became non-finite")
        done = abs(nb - b) < _NEWTON_TOL * max(1.0, b)
        b = nb
        if done:
            break
    else:
        raise NumericError("shape equation did not converge in 200 iterations")

    a = float((np.sum(y**b) / y.size) ** (1.0 / b))
    fit = WeibullParams(a=a, b=float(b), c=c)

    baseline = WeibullParams(a=float(d.mean()), b=1.0, c=0.0)
    if fit.log_likelihood(d) < baseline.log_likelihood(d) - 1e-6:
        raise NumericError("fit is worse than the exponential baseline")
    return fit


@dataclass
class DomainModel:
    """One adaptor set plus its head for a single learned domain."""

    domain_id: int
    specs: list[AdaptorSpec]
    params: list[AdaptorParams]
    codebook: TargetCodebook
    class_list: np.ndarray  # ascending global labels; position = local index
    prototypes: dict[int, Hypervector] = field(default_factory=dict)
    weibull: WeibullParams | None = None
    tau_pi: float = 0.7
    _proto_matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.class_list = np.asarray(self.class_list, dtype=np.int64)
        if not (0.0 < self.tau_pi < 1.0):
            raise ArgumentError("tau_pi must lie in (0, 1)")
        if len(self.specs) != len(self.params):
            raise ArgumentError("specs and params must align")

    @property
    def dim(self) -> int:
        return self.codebook.dim

    @property
    def calibrated(self) -> bool:
        return self.weibull is not None and bool(self.prototypes)

    def proto_matrix(self) -> np.ndarray:
        if self._proto_matrix is None:
            if not self.prototypes:
                raise StateError("model has no prototypes")
            rows = [self.prototypes[int(c)].to_array() for c in self.class_list]
            self._proto_matrix = np.stack(rows)
        return self._proto_matrix

    def invalidate_cache(self):
        self._proto_matrix = None


def encode_sample(model: DomainModel, taps: TapFeatures,
                  rng: np.random.Generator | None = None,
                  deterministic: bool = False) -> np.ndarray:
    """Aggregated hypervector bits for one sample through this model."""
    rows = np.empty((len(model.params), model.dim), dtype=np.uint8)
    for i, (spec, params) in enumerate(zip(model.specs, model.params)):
        scores = forward(params, taps[spec.tap_id])
        if deterministic:
            rows[i] = scores >= 0.5
        else:
            rows[i] = rng.random(scores.size) < scores
    return bundle_bits(rows)


def encode_batch(model: DomainModel, data: FeatureDataset,
                 rng: np.random.Generator | None = None,
                 deterministic: bool = False) -> np.ndarray:
    """Aggregated hypervector bits for a whole dataset, (n, D) uint8."""
    n = len(data)
    counts = np.zeros((n, model.dim), dtype=np.int64)
    for spec, params in zip(model.specs, model.params):
        scores = forward(params, data.tap_matrices[spec.tap_id])
        if deterministic:
            counts += scores >= 0.5
        else:
            counts += rng.random(scores.shape) < scores
    return (2 * counts >= len(model.params)).astype(np.uint8)


def build_prototypes(model: DomainModel, data: FeatureDataset,
                     rng: np.random.Generator | None = None,
                     deterministic: bool = False):
    """Bundle every class's aggregated sample vectors into its prototype."""
    present = np.unique(data.labels)
    missing = np.setdiff1d(model.class_list, present)
    if missing.size:
        raise ArgumentError(f"classes {missing.tolist()} have no samples")
    agg = encode_batch(model, data, rng, deterministic)
    protos = {}
    for c in model.class_list:
        rows = agg[data.labels == c]
        protos[int(c)] = Hypervector(bits=np.packbits(bundle_bits(rows)), dim=model.dim)
    model.prototypes = protos
    model.invalidate_cache()


def classify_bits(model: DomainModel, agg_bits: np.ndarray) -> tuple[int, int]:
    """Nearest-prototype label for unpacked bits; ties go to the lowest
    class index (argmin returns the first minimum over ascending labels)."""
    dists = hamming_to_rows(agg_bits, model.proto_matrix())
    idx = int(np.argmin(dists))
    return int(model.class_list[idx]), int(dists[idx])


def classify(model: DomainModel, h_agg: Hypervector) -> tuple[int, int]:
    if h_agg.dim != model.dim:
        raise ArgumentError(f"query dim {h_agg.dim} != model dim {model.dim}")
    return classify_bits(model, h_agg.to_array())


def nearest_distances(model: DomainModel, agg: np.ndarray) -> np.ndarray:
    """Normalized distance to the nearest prototype per row of (n, D) bits."""
    protos = model.proto_matrix()
    dists = (agg[:, None, :] != protos[None, :, :]).sum(axis=2)
    return dists.min(axis=1) / model.dim


def calibrate(model: DomainModel, data: FeatureDataset,
              rng: np.random.Generator | None = None,
              deterministic: bool = False):
    """Fit the Weibull head on training-set nearest-prototype distances
    (misclassified samples included)."""
    agg = encode_batch(model, data, rng, deterministic)
    model.weibull = fit_weibull(nearest_distances(model, agg))


def ood_score_from_distance(model: DomainModel, normalized_distance: float) -> float:
    if model.weibull is None:
        raise StateError("model is not calibrated")
    return float(model.weibull.cdf(normalized_distance))


def ood_score(model: DomainModel, h_agg: Hypervector) -> float:
    """Probability that an in-distribution sample would sit closer to its
    prototype than this one does; larger means more OOD."""
    _, dist = classify(model, h_agg)
    return ood_score_from_distance(model, dist / model.dim)


def is_ood(model: DomainModel, h_agg: Hypervector) -> bool:
    return ood_score(model, h_agg) > model.tau_pi


def infer_bits(model: DomainModel, agg_bits: np.ndarray) -> tuple[int, float]:
    """(predicted global label, calibrated OOD score) for unpacked bits."""
    label, dist = classify_bits(model, agg_bits)
    return label, ood_score_from_distance(model, dist / model.dim)


def evaluate_accuracy(model: DomainModel, data: FeatureDataset, seed) -> float:
    """Fraction of samples classified to their true global label; a fresh
    generator seeded per call keeps repeat evaluations bit-identical."""
    rng = np.random.default_rng(seed)
    agg = encode_batch(model, data, rng)
    protos = model.proto_matrix()
    dists = (agg[:, None, :] != protos[None, :, :]).sum(axis=2)
    preds = model.class_list[np.argmin(dists, axis=1)]
    return float(np.mean(preds == data.labels))
