"""Training-free architecture scoring and search for adaptor sets.

A candidate is scored on an untrained forward pass only: expressivity is
a soft count of loosely connected components in the spectrum of the
2-nearest-neighbor graph Laplacian of its penultimate features,
redundancy is the adjusted mutual information between the spectral
clusterings of adaptor pairs, and a parameter count keeps the set small.
The search itself is GP-UCB with sequentially contracting bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .adaptor import AdaptorSpec, init_params, penultimate
from .errors import ArgumentError, DimensionError, GrowthError
from .hdc import dimensionality_for

# ---------------------------------------------------------------------------
# candidate encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TapChoice:
    tap_id: int
    depth: int
    width: int

    def spec(self, output_dim: int) -> AdaptorSpec:
        return AdaptorSpec(self.tap_id, (self.width,) * self.depth, output_dim)


@dataclass(frozen=True)
class CandidateArchitecture:
    """Decoded search point: which taps get adaptors and their shape."""

    choices: tuple[TapChoice, ...]

    def __post_init__(self):
        if not self.choices:
            raise ArgumentError("candidate must include at least one tap")

    @property
    def num_adaptors(self) -> int:
        return len(self.choices)

    def specs(self, num_classes: int) -> list[AdaptorSpec]:
        dim = dimensionality_for(num_classes, self.num_adaptors)
        return [c.spec(dim) for c in self.choices]


@dataclass(frozen=True)
class SearchSpace:
    """Box bounds for the optimizer: (include, depth, width) per tap.

    Include flags live in [0,1] and round at 0.5; depth and width round
    to the nearest integer. If no flag clears 0.5 the strongest tap is
    kept so every vector decodes to a usable candidate.
    """

    num_taps: int
    width_min: int = 16
    width_max: int = 256
    max_depth: int = 3

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.tile([0.0, 0.0, float(self.width_min)], self.num_taps)
        hi = np.tile([1.0, float(self.max_depth), float(self.width_max)], self.num_taps)
        return lo, hi

    def decode(self, vector) -> CandidateArchitecture:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (3 * self.num_taps,):
            raise DimensionError(f"expected {3 * self.num_taps} dims, got {vec.shape}")
        flags = vec[0::3]
        depths = vec[1::3]
        widths = vec[2::3]
        include = flags >= 0.5
        if not include.any():
            include[int(np.argmax(flags))] = True
        choices = []
        for tap in range(self.num_taps):
            if not include[tap]:
                continue
            depth = int(np.clip(np.rint(depths[tap]), 0, self.max_depth))
            width = int(np.clip(np.rint(widths[tap]), self.width_min, self.width_max))
            choices.append(TapChoice(tap, depth, width))
        return CandidateArchitecture(tuple(choices))


# ---------------------------------------------------------------------------
# spectral expressivity
# ---------------------------------------------------------------------------


@dataclass
class SpectralDecomposition:
    """Eigensystem of the symmetric normalized Laplacian, ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, orthonormal


def knn_adjacency(points: np.ndarray, k: int = 2) -> np.ndarray:
    """Union-symmetrized k-NN graph under Euclidean distance.

    Ties (duplicates included) break deterministically toward the lower
    index via a stable argsort. Duplicate rows produce exact zero
    distances because the gram and norm terms share float ops.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < k + 1:
        raise ArgumentError(f"need at least {k + 1} points for a {k}-NN graph")
    norms = np.einsum("nd,nd->n", pts, pts)
    sq = np.maximum(norms[:, None] + norms[None, :] - 2.0 * (pts @ pts.T), 0.0)
    np.fill_diagonal(sq, np.inf)
    order = np.argsort(sq, axis=1, kind="stable")
    adj = np.zeros((n, n), dtype=np.uint8)
    rows = np.repeat(np.arange(n), k)
    cols = order[:, :k].ravel()
    adj[rows, cols] = 1
    return np.maximum(adj, adj.T)


def normalized_laplacian(adj: np.ndarray) -> np.ndarray:
    adj = np.asarray(adj, dtype=np.float64)
    deg = adj.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    lap = -adj * inv_sqrt[:, None] * inv_sqrt[None, :]
    np.fill_diagonal(lap, 1.0)
    return lap


def soft_component_count(eigenvalues: np.ndarray, gamma: float = 3.0) -> float:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    return float(np.sum(np.maximum(1.0 - lam, 0.0) ** gamma))


def decompose_adjacency(adj: np.ndarray) -> SpectralDecomposition:
    vals, vecs = np.linalg.eigh(normalized_laplacian(adj))
    return SpectralDecomposition(vals, vecs)


def expressivity_score(features: np.ndarray, gamma: float = 3.0,
                       knn: int = 2) -> tuple[float, SpectralDecomposition]:
    """Soft count of loosely connected components in the feature batch's
    k-NN graph spectrum; higher means a rockier, more separable landscape."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 8:
        raise ArgumentError("need a batch of at least 8 feature rows")
    if not np.isfinite(features).all():
        raise ArgumentError("features must be finite")
    decomp = decompose_adjacency(knn_adjacency(features, knn))
    return soft_component_count(decomp.eigenvalues, gamma), decomp


# ---------------------------------------------------------------------------
# redundancy: spectral clustering + adjusted mutual information
# ---------------------------------------------------------------------------


def _canonical_partition(labels: np.ndarray) -> np.ndarray:
    _, canon = np.unique(labels, return_inverse=True)
    first_seen = {}
    out = np.empty_like(canon)
    next_id = 0
    for i, c in enumerate(canon):
        if c not in first_seen:
            first_seen[c] = next_id
            next_id += 1
        out[i] = first_seen[c]
    return out


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def expected_mutual_information(a_counts: np.ndarray, b_counts: np.ndarray) -> float:
    """Expectation of MI over random contingency tables with the given
    margins (hypergeometric model)."""
    n = int(a_counts.sum())
    ai_g, bj_g = np.meshgrid(a_counts, b_counts, indexing="ij")
    ai_g = ai_g.ravel()
    bj_g = bj_g.ravel()
    lo = np.maximum(1, ai_g + bj_g - n)
    hi = np.minimum(ai_g, bj_g)
    lengths = np.maximum(hi - lo + 1, 0)
    keep = lengths > 0
    ai_g, bj_g, lo, lengths = ai_g[keep], bj_g[keep], lo[keep], lengths[keep]
    # flat concatenation of arange(lo, hi+1) per cell
    starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
    nij = (np.arange(lengths.sum()) - starts
           + np.repeat(lo, lengths)).astype(np.float64)
    ai_v = np.repeat(ai_g, lengths).astype(np.float64)
    bj_v = np.repeat(bj_g, lengths).astype(np.float64)
    term = (nij / n) * (np.log(n) + np.log(nij) - np.log(ai_v) - np.log(bj_v))
    log_prob = (
        gammaln(ai_v + 1) + gammaln(bj_v + 1)
        + gammaln(n - ai_v + 1) + gammaln(n - bj_v + 1)
        - gammaln(n + 1) - gammaln(nij + 1)
        - gammaln(ai_v - nij + 1) - gammaln(bj_v - nij + 1)
        - gammaln(n - ai_v - bj_v + nij + 1)
    )
    return float((term * np.exp(log_prob)).sum())


def ami(labels_a, labels_b) -> float:
    """Chance-adjusted agreement of two partitions: (MI - E[MI]) divided
    by (mean entropy - E[MI]); exactly 1.0 when the partitions coincide
    (including the all-one-cluster case)."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.size != b.size:
        raise DimensionError("partitions must have equal length")
    if a.size < 2:
        raise ArgumentError("need at least two points")
    if np.array_equal(_canonical_partition(a), _canonical_partition(b)):
        return 1.0
    table = _contingency(a, b)
    n = int(table.sum())
    a_counts = table.sum(axis=1)
    b_counts = table.sum(axis=0)
    nz = table[table > 0].astype(np.float64)
    rows, cols = np.nonzero(table)
    mi = float(np.sum(
        (nz / n) * (np.log(n * nz) - np.log(a_counts[rows] * b_counts[cols]))
    ))
    emi = expected_mutual_information(a_counts, b_counts)
    mean_h = 0.5 * (_entropy(a_counts, n) + _entropy(b_counts, n))
    denom = mean_h - emi
    # keep the ratio finite when the margins make emi meet the entropy
    eps = np.finfo(np.float64).eps
    denom = min(denom, -eps) if denom < 0 else max(denom, eps)
    return float((mi - emi) / denom)


def _kmeans_pp_init(points: np.ndarray, k: int, restarts: int,
                    rng: np.random.Generator) -> np.ndarray:
    """(restarts, k, d) k-means++ starts, all restarts drawn in parallel."""
    n, d = points.shape
    pt_norms = (points * points).sum(axis=1)
    centers = np.empty((restarts, k, d))
    chosen = rng.integers(n, size=restarts)
    centers[:, 0] = points[chosen]

    def sq_to(center_rows):  # (restarts, n) squared distances via gemm
        cross = points @ center_rows.T  # (n, restarts)
        c_norm = (center_rows * center_rows).sum(axis=1)
        return np.maximum(pt_norms[:, None] + c_norm[None, :] - 2.0 * cross, 0.0).T

    d2 = sq_to(centers[:, 0])
    for j in range(1, k):
        totals = d2.sum(axis=1, keepdims=True)
        safe = np.maximum(totals, 1e-300)
        cum = np.cumsum(d2 / safe, axis=1)
        draws = rng.random(restarts)
        idx = np.minimum((cum < draws[:, None]).sum(axis=1), n - 1)
        degenerate = totals.ravel() <= 0
        if degenerate.any():
            idx[degenerate] = rng.integers(n, size=int(degenerate.sum()))
        centers[:, j] = points[idx]
        d2 = np.minimum(d2, sq_to(centers[:, j]))
    return centers


def kmeans_labels(points: np.ndarray, k: int, rng: np.random.Generator,
                  restarts: int = 20, max_iter: int = 30) -> np.ndarray:
    """Seeded Lloyd iterations with k-means++ starts; best inertia wins.

    All restarts run batched so the hot loop is a handful of tensor ops.
    """
    points = np.asarray(points, dtype=np.float64)
    n, dim = points.shape
    if k <= 1:
        return np.zeros(n, dtype=np.int64)
    k = min(k, n)
    R = restarts
    centers = _kmeans_pp_init(points, k, R, rng)  # (R, k, d)
    pt_norms = (points * points).sum(axis=1)
    restart_offsets = (np.arange(R) * k)[:, None]  # composite bincount index
    labels = None
    for _ in range(max_iter):
        # one (n, R*k) gemm per iteration; everything else is bincounts
        c_norms = (centers * centers).sum(axis=2)  # (R, k)
        cross = (points @ centers.reshape(R * k, dim).T).reshape(n, R, k)
        d2 = np.maximum(
            pt_norms[:, None, None] + c_norms[None, :, :] - 2.0 * cross, 0.0
        )  # (n, R, k)
        new_labels = d2.argmin(axis=2).T  # (R, n)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        flat = (labels + restart_offsets).ravel()
        counts = np.bincount(flat, minlength=R * k).reshape(R, k)
        sums = np.empty((R, k, dim))
        for d_idx in range(dim):
            w = np.broadcast_to(points[:, d_idx], (R, n)).ravel()
            sums[:, :, d_idx] = np.bincount(flat, weights=w,
                                            minlength=R * k).reshape(R, k)
        nonempty = counts > 0
        centers = np.where(nonempty[:, :, None],
                           sums / np.maximum(counts, 1)[:, :, None],
                           centers)
        if not nonempty.all():
            # reseed each empty cluster to that restart's farthest point
            far = d2.min(axis=2).argmax(axis=0)  # (R,)
            for r, j in zip(*np.nonzero(~nonempty)):
                centers[r, j] = points[far[r]]
    inertia = d2.min(axis=2).sum(axis=0)  # (R,)
    best = int(inertia.argmin())
    return labels[best].astype(np.int64)


def cluster_count(decomp: SpectralDecomposition, batch_size: int,
                  threshold: float = 0.1) -> int:
    k = int(np.sum(decomp.eigenvalues < threshold))
    return int(np.clip(k, 1, max(1, batch_size // 2)))


def spectral_labels(decomp: SpectralDecomposition, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    n = decomp.eigenvectors.shape[0]
    if k <= 1:
        return np.zeros(n, dtype=np.int64)
    emb = decomp.eigenvectors[:, :k].copy()
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
    return kmeans_labels(emb, k, rng)


def redundancy_score(decomp_i: SpectralDecomposition, decomp_j: SpectralDecomposition,
                     seed=0) -> float:
    """AMI between the two adaptors' spectral clusterings over the shared
    batch; 1.0 when both collapse to a single cluster."""
    n_i = decomp_i.eigenvectors.shape[0]
    n_j = decomp_j.eigenvectors.shape[0]
    if n_i != n_j:
        raise DimensionError("decompositions must cover the same batch")
    k_i = cluster_count(decomp_i, n_i)
    k_j = cluster_count(decomp_j, n_j)
    # fresh generator per labeling keeps the score symmetric in its args
    labels_i = spectral_labels(decomp_i, k_i, np.random.default_rng(seed))
    labels_j = spectral_labels(decomp_j, k_j, np.random.default_rng(seed))
    return ami(labels_i, labels_j)


# ---------------------------------------------------------------------------
# combined score
# ---------------------------------------------------------------------------


@dataclass
class ScoreBreakdown:
    expressivity: dict[int, float]  # tap id -> s_exp
    redundancy: dict[tuple[int, int], float]  # (tap_i, tap_j) -> s_red
    param_count: int
    single_cluster_pairs: list[tuple[int, int]] = field(default_factory=list)
    beta0: float = 3e-6
    beta1: float = 5.0

    @property
    def score(self) -> float:
        return combine_scores(
            list(self.expressivity.values()),
            self.param_count,
            list(self.redundancy.values()),
            self.beta0,
            self.beta1,
        )


def combine_scores(expressivities, param_count, redundancies,
                   beta0: float = 3e-6, beta1: float = 5.0) -> float:
    """Expressivity is rewarded; parameters and pairwise redundancy are
    penalized. Higher is better."""
    return float(sum(expressivities) - beta0 * param_count - beta1 * sum(redundancies))


def combined_score(candidate: CandidateArchitecture, tap_matrices: list[np.ndarray],
                   num_classes: int, beta0: float = 3e-6, beta1: float = 5.0,
                   gamma: float = 3.0, knn: int = 2, seed: int = 0) -> ScoreBreakdown:
    """Zero-shot score of a candidate on one shared feature batch.

    Adaptor parameters are freshly initialized from (seed, tap, depth,
    width) and never updated; the batch is the same for every candidate
    in a search so scores stay comparable.
    """
    out_dim = dimensionality_for(num_classes, candidate.num_adaptors)
    expressivity: dict[int, float] = {}
    labelings: dict[int, np.ndarray] = {}
    cluster_counts: dict[int, int] = {}
    param_total = 0
    for choice in candidate.choices:
        feats = tap_matrices[choice.tap_id]
        spec = choice.spec(out_dim)
        param_total += spec.param_count(feats.shape[1])
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, choice.tap_id, choice.depth, choice.width])
        )
        params = init_params(spec, feats.shape[1], rng)
        hidden = penultimate(params, feats)
        s, decomp = expressivity_score(hidden, gamma=gamma, knn=knn)
        expressivity[choice.tap_id] = s
        # cluster each adaptor once; pairs compare the cached labelings
        n = hidden.shape[0]
        k = cluster_count(decomp, n)
        cluster_counts[choice.tap_id] = k
        labelings[choice.tap_id] = spectral_labels(
            decomp, k, np.random.default_rng(np.random.SeedSequence([seed, 7919, choice.tap_id]))
        )

    redundancy: dict[tuple[int, int], float] = {}
    flagged: list[tuple[int, int]] = []
    taps = sorted(labelings)
    for idx, ti in enumerate(taps):
        for tj in taps[idx + 1 :]:
            redundancy[(ti, tj)] = ami(labelings[ti], labelings[tj])
            if cluster_counts[ti] == 1 and cluster_counts[tj] == 1:
                flagged.append((ti, tj))
    return ScoreBreakdown(expressivity, redundancy, param_total, flagged, beta0, beta1)


# ---------------------------------------------------------------------------
# GP-UCB search with sequential domain reduction
# ---------------------------------------------------------------------------


@dataclass
class Evaluation:
    iteration: int
    x: np.ndarray
    y: float
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray


@dataclass
class SearchResult:
    best_x: np.ndarray
    best_y: float
    trace: list[Evaluation]
    discarded: list[np.ndarray]


class _GaussianProcess:
    """Squared-exponential GP on inputs normalized to the unit box."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray,
                 lengthscale: float = 0.2, jitter: float = 1e-6):
        self.lo = lo
        self.span = np.maximum(hi - lo, 1e-12)
        self.ell = lengthscale
        self.jitter = jitter
        self._x: list[np.ndarray] = []
        self._y: list[float] = []

    def _norm(self, x: np.ndarray) -> np.ndarray:
        return (x - self.lo) / self.span

    def add(self, x: np.ndarray, y: float):
        self._x.append(self._norm(x))
        self._y.append(y)
        self._refit()

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-0.5 * d2 / (self.ell**2))

    def _refit(self):
        X = np.stack(self._x)
        y = np.asarray(self._y)
        self._mu = y.mean()
        self._sd = y.std() if y.std() > 0 else 1.0
        K = self._kernel(X, X) + self.jitter * np.eye(len(y))
        self._chol = np.linalg.cholesky(K)
        resid = (y - self._mu) / self._sd
        self._alpha = np.linalg.solve(
            self._chol.T, np.linalg.solve(self._chol, resid)
        )
        self._X = X

    def posterior(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xs = (xs - self.lo) / self.span
        Ks = self._kernel(Xs, self._X)
        mean = Ks @ self._alpha
        v = np.linalg.solve(self._chol, Ks.T)
        var = np.maximum(1.0 - (v**2).sum(axis=0), 0.0)
        return self._mu + self._sd * mean, self._sd * np.sqrt(var)


def gp_ucb_search(objective, bounds: tuple[np.ndarray, np.ndarray],
                  budget: int = 50, warmup: int = 10, kappa: float = 2.5,
                  shrink: float = 0.9, min_span_frac: float = 0.05,
                  n_multistart: int = 256, seed=0) -> SearchResult:
    """Maximize a black-box objective over a box.

    Random warmup, then UCB (mu + kappa * sigma) maximized by random
    multistart inside the current box; after every post-warmup step the
    box contracts by ``shrink`` around the incumbent, floored at
    ``min_span_frac`` of the original span. Non-finite objective values
    are discarded (and logged) without entering the surrogate.
    """
    lo0 = np.asarray(bounds[0], dtype=np.float64)
    hi0 = np.asarray(bounds[1], dtype=np.float64)
    if lo0.shape != hi0.shape or (hi0 < lo0).any():
        raise ArgumentError("invalid bounds")
    if budget < warmup:
        raise ArgumentError("budget must cover the warmup phase")
    rng = np.random.default_rng(seed)
    gp = _GaussianProcess(lo0, hi0)
    lo, hi = lo0.copy(), hi0.copy()
    min_span = min_span_frac * (hi0 - lo0)

    trace: list[Evaluation] = []
    discarded: list[np.ndarray] = []
    best_x, best_y = None, -np.inf

    for it in range(budget):
        if it < warmup or not trace:
            x = rng.uniform(lo, hi)
        else:
            cands = rng.uniform(lo, hi, size=(n_multistart, lo.size))
            mean, sd = gp.posterior(cands)
            x = cands[int(np.argmax(mean + kappa * sd))]
        y = float(objective(x))
        if np.isfinite(y):
            gp.add(x, y)
            trace.append(Evaluation(it, x, y, lo.copy(), hi.copy()))
            if y > best_y:
                best_x, best_y = x, y
        else:
            discarded.append(x)
        if it >= warmup and best_x is not None:
            span = np.maximum(shrink * (hi - lo), min_span)
            center = np.clip(best_x, lo0 + span / 2.0, hi0 - span / 2.0)
            lo = center - span / 2.0
            hi = center + span / 2.0
    if best_x is None:
        raise GrowthError("no finite objective value observed")
    return SearchResult(best_x, best_y, trace, discarded)
