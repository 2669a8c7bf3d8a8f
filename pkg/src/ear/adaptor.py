"""Shallow tap adaptors: dense stacks trained to emit per-bit probabilities.

Each adaptor maps one tap's pooled features to scores over the bits of
its class-target hypervectors. Training treats the mapping as D parallel
binary problems under a weighted focal cross-entropy; gradients are
analytic and Adam does the stepping. Everything is plain numpy so the
gradient path stays inspectable and finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import FeatureDataset
from .errors import ArgumentError, DimensionError, NumericError, TrainingError
from .hdc import TargetCodebook

_P_EPS = 1e-12  # probability clip keeping logs finite

MAX_DEPTH = 3


@dataclass(frozen=True)
class AdaptorSpec:
    """Architecture of one adaptor: tap to read, hidden widths, output bits."""

    tap_id: int
    hidden_widths: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if len(self.hidden_widths) > MAX_DEPTH:
            raise ArgumentError(f"depth {len(self.hidden_widths)} exceeds {MAX_DEPTH}")
        if any(w < 1 for w in self.hidden_widths):
            raise ArgumentError("hidden widths must be positive")
        if self.output_dim < 1:
            raise ArgumentError("output_dim must be positive")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    def layer_sizes(self, input_dim: int) -> list[tuple[int, int]]:
        dims = [input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self, input_dim: int) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_sizes(input_dim))


@dataclass
class AdaptorParams:
    """Weights/biases per layer; the last layer feeds a logistic squash."""

    spec: AdaptorSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_params(spec: AdaptorSpec, input_dim: int, rng: np.random.Generator) -> AdaptorParams:
    """Seeded uniform init scaled by 1/sqrt(fan_in); biases start at zero."""
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_sizes(input_dim):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AdaptorParams(spec, weights, biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: AdaptorParams, feats: np.ndarray) -> np.ndarray:
    """Scores in (0,1)^D for one feature vector or a (n, dim) batch."""
    single = feats.ndim == 1
    h = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if h.shape[1] != params.input_dim:
        raise DimensionError(
            f"feature dim {h.shape[1]} does not match adaptor input {params.input_dim}"
        )
    L = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < L - 1:
            np.maximum(h, 0.0, out=h)
    if not np.isfinite(h).all():
        raise NumericError("non-finite activation in adaptor forward pass")
    p = np.clip(_sigmoid(h), _P_EPS, 1.0 - _P_EPS)
    return p[0] if single else p


def penultimate(params: AdaptorParams, feats: np.ndarray) -> np.ndarray:
    """Activations feeding the final projection (the input itself for a
    linear adaptor). Used by architecture scoring on untrained params."""
    h = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if h.shape[1] != params.input_dim:
        raise DimensionError("feature dim mismatch")
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return h


@dataclass
class FocalLossConfig:
    gamma: float = 2.0
    alpha: np.ndarray | None = None  # per-element weights, mean 1

    def resolved_alpha(self, dim: int) -> np.ndarray:
        if self.alpha is None:
            return np.ones(dim)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.shape != (dim,):
            raise DimensionError("alpha length must equal output dim")
        if not (alpha > 0).all():
            raise ArgumentError("alpha must be strictly positive")
        return alpha


def alpha_from_targets(targets: np.ndarray) -> np.ndarray:
    """Per-element imbalance weights from a (n, D) target-bit matrix.

    Add-one smoothed share of negatives per element, rescaled to mean 1,
    so rare positive bits weigh more and the loss scale stays stable.
    """
    targets = np.asarray(targets)
    n = targets.shape[0]
    pos = targets.sum(axis=0)
    raw = (n - pos + 1.0) / (n + 2.0)
    return raw / raw.mean()


def focal_loss(scores: np.ndarray, target_bits: np.ndarray,
               cfg: FocalLossConfig) -> tuple[float, np.ndarray]:
    """Weighted focal cross-entropy, averaged over elements (and samples
    for batched input). Returns (loss, analytic gradient wrt scores)."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(target_bits, dtype=np.float64))
    if scores.shape != targets.shape:
        raise DimensionError("scores and targets must have equal shape")
    n, dim = scores.shape
    alpha = cfg.resolved_alpha(dim)
    g = cfg.gamma

    p = np.clip(scores, _P_EPS, 1.0 - _P_EPS)
    p_t = np.where(targets == 1, p, 1.0 - p)
    one_minus = 1.0 - p_t
    log_pt = np.log(p_t)
    loss = float(np.mean(np.sum(-alpha * one_minus**g * log_pt, axis=1) / dim))

    # d/dp_t of -(1-p_t)^g log p_t, then the sign flip for 0-targets
    dl_dpt = alpha * (g * one_minus ** (g - 1.0) * log_pt - one_minus**g / p_t)
    sign = np.where(targets == 1, 1.0, -1.0)
    grad = dl_dpt * sign / (dim * n)
    return loss, (grad[0] if np.asarray(target_bits).ndim == 1 else grad)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    epochs: int = 40
    gamma_focal: float = 2.0
    seed: int = 0


@dataclass
class TrainedAdaptor:
    params: AdaptorParams
    epoch_losses: list[float]
    alpha: np.ndarray


@dataclass
class TrainResult:
    adaptors: list[TrainedAdaptor]
    class_list: np.ndarray  # global label per codebook class index

    @property
    def params(self) -> list[AdaptorParams]:
        return [a.params for a in self.adaptors]


class _Adam:
    def __init__(self, shapes, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        c = self.cfg
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
            mhat = self.m[i] / (1 - c.beta1**self.t)
            vhat = self.v[i] / (1 - c.beta2**self.t)
            p -= c.lr * mhat / (np.sqrt(vhat) + c.eps)


def _forward_cached(params: AdaptorParams, x: np.ndarray):
    acts = [x]
    pres = []
    h = x
    L = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pres.append(z)
        h = np.maximum(z, 0.0) if i < L - 1 else z
        acts.append(h)
    p = np.clip(_sigmoid(acts[-1]), _P_EPS, 1.0 - _P_EPS)
    return p, acts, pres


def loss_and_grads(params: AdaptorParams, x: np.ndarray, targets: np.ndarray,
                   cfg: FocalLossConfig):
    """Batch loss plus analytic gradients for every weight and bias."""
    p, acts, pres = _forward_cached(params, x)
    loss, dl_dp = focal_loss(p, targets, cfg)
    delta = np.atleast_2d(dl_dp) * p * (1.0 - p)  # through the logistic
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pres[i - 1] > 0)
    return loss, grads_w, grads_b


def train_adaptor_set(specs: list[AdaptorSpec], data: FeatureDataset,
                      codebook: TargetCodebook, cfg: TrainConfig) -> TrainResult:
    """Train one adaptor per spec against its codebook targets.

    Adaptor index within the codebook is the position in ``specs``.
    Deterministic given cfg.seed; the encoder and codebook are never
    touched.
    """
    if len(data) == 0:
        raise ArgumentError("empty training dataset")
    class_list = np.unique(data.labels)
    if codebook.num_classes != len(class_list):
        raise ArgumentError(
            f"codebook holds {codebook.num_classes} classes, data has {len(class_list)}"
        )
    if codebook.num_adaptors != len(specs):
        raise ArgumentError(
            f"codebook holds {codebook.num_adaptors} adaptors, got {len(specs)} specs"
        )
    local = np.searchsorted(class_list, data.labels)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(specs))

    trained: list[TrainedAdaptor] = []
    for a_idx, (spec, seed) in enumerate(zip(specs, seeds)):
        if spec.output_dim != codebook.dim:
            raise ArgumentError("spec output_dim must equal codebook dim")
        rng = np.random.default_rng(seed)
        x = data.tap_matrices[spec.tap_id].astype(np.float64)
        targets = codebook.vectors[a_idx * codebook.num_classes + local].astype(np.float64)
        alpha = alpha_from_targets(targets)
        loss_cfg = FocalLossConfig(gamma=cfg.gamma_focal, alpha=alpha)

        params = init_params(spec, x.shape[1], rng)
        flat = params.weights + params.biases
        opt = _Adam([p.shape for p in flat], cfg)

        n = len(data)
        epoch_losses = []
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            batch_losses = []
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                loss, gw, gb = loss_and_grads(params, x[idx], targets[idx], loss_cfg)
                if not np.isfinite(loss):
                    raise TrainingError("training loss became non-finite")
                opt.step(flat, gw + gb)
                batch_losses.append(loss)
            epoch_losses.append(float(np.mean(batch_losses)))
        if epoch_losses[-1] >= epoch_losses[0]:
            raise TrainingError(
                f"adaptor {a_idx}: loss failed to decrease "
                f"({epoch_losses[0]:.4g} -> {epoch_losses[-1]:.4g})"
            )
        trained.append(TrainedAdaptor(params, epoch_losses, alpha))
    return TrainResult(trained, class_list)
