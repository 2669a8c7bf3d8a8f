"""Streaming class-incremental engine.

Models are grown, never edited: each confirmed distribution shift adds a
frozen adaptor set + head for the new domain, so earlier tasks cannot be
forgotten. Routing picks among registered models by calibrated OOD score,
either per sample (instant), by windowed majority vote (slow), or via the
oracle's task knowledge (upper bound). Hidden event truth is only touched
by the oracle and by the evaluator writing the log.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .adaptor import TrainConfig, train_adaptor_set
from .encoder import FeatureDataset, Scenario, StreamEvent, TapFeatures
from .errors import ArgumentError, EarError, GrowthError, StateError
from .hdc import generate_codebook
from .reconfigurator import (
    DomainModel,
    build_prototypes,
    calibrate,
    encode_sample,
    evaluate_accuracy,
    infer_bits,
)
from .zsnas import SearchSpace, combined_score, gp_ucb_search

PHASE_NORMAL = "normal"
PHASE_COLLECTING = "collecting"
PHASE_TRAINING = "training"

MARKER_NONE = "none"
MARKER_TASK_CHANGE = "task_change"
MARKER_TRIGGER = "trigger"
MARKER_MISFIRE = "misfire"


@dataclass
class StreamConfig:
    """Engine knobs; defaults follow the experimental protocol."""

    window: int = 50
    trigger_fraction: float = 0.6
    ood_threshold: float = 0.7
    buffer_size: int = 1000
    routing: str = "slow"  # oracle | slow | instant
    nas_budget: int = 20
    nas_warmup: int = 8
    nas_batch: int = 128
    nas_kappa: float = 2.5
    nas_shrink: float = 0.9
    nas_beta0: float = 3e-6
    nas_beta1: float = 5.0
    nas_gamma: float = 3.0
    nas_knn: int = 2
    width_min: int = 16
    width_max: int = 128
    max_depth: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_seed: int = 20_001

    def validate(self):
        if not (0.0 < self.trigger_fraction <= 1.0):
            raise ArgumentError("trigger_fraction must lie in (0, 1]")
        if not (0.0 < self.ood_threshold < 1.0):
            raise ArgumentError("ood_threshold must lie in (0, 1)")
        if self.window < 1 or self.buffer_size < 1:
            raise ArgumentError("window and buffer_size must be positive")
        if self.routing not in ("oracle", "slow", "instant"):
            raise ArgumentError(f"unknown routing mode {self.routing!r}")
        if self.nas_budget < self.nas_warmup:
            raise ArgumentError("nas_budget must cover nas_warmup")


@dataclass
class WindowEntry:
    model_id: int  # per-sample greedy argmin assignment
    score: float   # that model's calibrated OOD score


class RoutingState:
    """Ring buffer of the last W greedy assignments and their scores."""

    def __init__(self, window: int):
        self.window = window
        self._buf: deque[WindowEntry] = deque(maxlen=window)

    def append(self, entry: WindowEntry):
        self._buf.append(entry)

    def clear(self):
        self._buf.clear()

    def __len__(self):
        return len(self._buf)

    @property
    def full(self) -> bool:
        return len(self._buf) == self.window

    def entries(self) -> list[WindowEntry]:
        return list(self._buf)


def detect_shift(state: RoutingState, cfg: StreamConfig) -> bool:
    """True iff the window is full and enough of it scored as OOD."""
    if not state.full:
        return False
    hot = sum(1 for e in state.entries() if e.score >= cfg.ood_threshold)
    return hot / state.window >= cfg.trigger_fraction


@dataclass
class ModelVerdict:
    model_index: int
    label: int
    score: float


def score_against_models(models: list[DomainModel], taps: TapFeatures,
                         rng: np.random.Generator) -> list[ModelVerdict]:
    if not models:
        raise StateError("no registered models")
    verdicts = []
    for idx, model in enumerate(models):
        agg = encode_sample(model, taps, rng)
        label, score = infer_bits(model, agg)
        verdicts.append(ModelVerdict(idx, label, score))
    return verdicts


def route_instant(verdicts: list[ModelVerdict],
                  ood_threshold: float) -> tuple[int, bool]:
    """Greedy per-sample choice: argmin score, lowest index on ties;
    second value flags OOD-everywhere (still routed for best effort)."""
    best = min(verdicts, key=lambda v: (v.score, v.model_index))
    return best.model_index, best.score > ood_threshold


def route_slow(state: RoutingState, verdicts: list[ModelVerdict],
               current: WindowEntry, ood_threshold: float) -> int:
    """Majority vote over the window's greedy assignments (current sample
    included); ties go to the voted model with the lower mean score."""
    entries = state.entries() + [current]
    if len(entries) == 1:
        return route_instant(verdicts, ood_threshold)[0]
    counts: dict[int, int] = {}
    for e in entries:
        counts[e.model_id] = counts.get(e.model_id, 0) + 1
    top = max(counts.values())
    tied = [m for m, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    means = {
        m: float(np.mean([e.score for e in entries if e.model_id == m])) for m in tied
    }
    return min(tied, key=lambda m: (means[m], m))


class StreamOracle:
    """Stand-in for the human in the loop: confirms genuine shifts and
    labels buffered samples. The only component allowed to read truth."""

    def __init__(self):
        self.confirmations = 0
        self.refusals = 0

    def confirm_shift(self, event: StreamEvent, registered_domains) -> bool:
        genuine = event.truth.domain_id not in registered_domains
        if genuine:
            self.confirmations += 1
        else:
            self.refusals += 1
        return genuine

    def annotate(self, event: StreamEvent) -> tuple[int, int]:
        return event.truth.label, event.truth.domain_id

    def true_domain(self, event: StreamEvent) -> int:
        return event.truth.domain_id


@dataclass
class StepRecord:
    step: int
    true_task: int  # evaluator-only field
    chosen_model: int
    predicted_class: int
    correct: bool
    ood_score: float
    phase: str
    marker: str

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "true_task": self.true_task,
            "chosen_model": self.chosen_model,
            "predicted_class": self.predicted_class,
            "correct": bool(self.correct),
            "ood_score": None if np.isnan(self.ood_score) else round(self.ood_score, 6),
            "phase": self.phase,
            "marker": self.marker,
        }


@dataclass
class GrowthRecord:
    step: int
    domain_id: int
    model_index: int
    num_adaptors: int
    param_count: int
    nas_score: float
    accuracy_at_registration: float


@dataclass
class StreamRunResult:
    records: list[StepRecord]
    growths: list[GrowthRecord]
    misfire_steps: list[int]
    trigger_steps: list[int]
    reset_steps: list[int]  # first step after each training period
    config: StreamConfig
    engine: "ContinualEngine | None" = field(default=None, repr=False)

    @property
    def models_learned(self) -> int:
        return len(self.growths)

    def accuracy(self, phase: str | None = PHASE_NORMAL) -> float:
        recs = [r for r in self.records if phase is None or r.phase == phase]
        if not recs:
            return float("nan")
        return float(np.mean([r.correct for r in recs]))

    def per_task_accuracy(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for task in sorted({r.true_task for r in self.records}):
            recs = [r for r in self.records
                    if r.true_task == task and r.phase == PHASE_NORMAL]
            if recs:
                out[task] = float(np.mean([r.correct for r in recs]))
        return out

    def summary(self) -> dict:
        return {
            "overall_accuracy": self.accuracy(),
            "accuracy_all_steps": self.accuracy(phase=None),
            "per_task_accuracy": {str(k): v for k, v in self.per_task_accuracy().items()},
            "models_learned": self.models_learned,
            "triggers": len(self.trigger_steps),
            "misfires": len(self.misfire_steps),
            "routing": self.config.routing,
            "steps": len(self.records),
        }


class ContinualEngine:
    """Owns the registered models, the routing window, and growth."""

    def __init__(self, cfg: StreamConfig, seed=0):
        cfg.validate()
        self.cfg = cfg
        self.models: list[DomainModel] = []
        self.window = RoutingState(cfg.window)
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self._growth_seed = np.random.SeedSequence([seed, 2])

    @property
    def registered_domains(self) -> set[int]:
        return {m.domain_id for m in self.models}

    def model_for_domain(self, domain_id: int) -> int | None:
        for idx, m in enumerate(self.models):
            if m.domain_id == domain_id:
                return idx
        return None

    def grow(self, buffer: list[tuple[TapFeatures, int, int]],
             domain_id: int) -> tuple[DomainModel, dict]:
        """Search, train, calibrate and register a model for a confirmed
        new domain from the oracle-labeled buffer."""
        cfg = self.cfg
        kept = [(t, label) for t, label, dom in buffer if dom == domain_id]
        if not kept:
            raise GrowthError("buffer holds no samples for the confirmed domain")
        taps = [t for t, _ in kept]
        labels = np.array([l for _, l in kept])
        num_classes_global = int(labels.max()) + 1
        data = FeatureDataset.from_taps(taps, labels,
                                        np.full(len(kept), domain_id),
                                        num_classes_global)
        class_list = np.unique(labels)

        seeds = self._growth_seed.spawn(4)
        batch_rng = np.random.default_rng(seeds[0])
        pick = batch_rng.choice(len(data), size=min(cfg.nas_batch, len(data)),
                                replace=False)
        batch_mats = [m[pick] for m in data.tap_matrices]

        space = SearchSpace(num_taps=data.num_taps, width_min=cfg.width_min,
                            width_max=cfg.width_max, max_depth=cfg.max_depth)
        nas_seed = int(np.random.default_rng(seeds[1]).integers(2**31))

        def objective(vec):
            cand = space.decode(vec)
            return combined_score(
                cand, batch_mats, num_classes=len(class_list),
                beta0=cfg.nas_beta0, beta1=cfg.nas_beta1, gamma=cfg.nas_gamma,
                knn=cfg.nas_knn, seed=nas_seed,
            ).score

        result = gp_ucb_search(objective, space.bounds(), budget=cfg.nas_budget,
                               warmup=cfg.nas_warmup, kappa=cfg.nas_kappa,
                               shrink=cfg.nas_shrink, seed=nas_seed)
        winner = space.decode(result.best_x)

        specs = winner.specs(len(class_list))
        codebook = generate_codebook(len(class_list), winner.num_adaptors,
                                     seed=int(np.random.default_rng(seeds[2]).integers(2**31)))
        train_cfg = TrainConfig(**{**vars(cfg.train),
                                   "seed": int(np.random.default_rng(seeds[3]).integers(2**31))})
        trained = train_adaptor_set(specs, data, codebook, train_cfg)

        model = DomainModel(domain_id=domain_id, specs=specs, params=trained.params,
                            codebook=codebook, class_list=trained.class_list,
                            tau_pi=cfg.ood_threshold)
        proto_rng = np.random.default_rng(np.random.SeedSequence([nas_seed, 3]))
        build_prototypes(model, data, proto_rng)
        calibrate(model, data, np.random.default_rng(np.random.SeedSequence([nas_seed, 4])))
        self.models.append(model)
        info = {
            "nas_score": result.best_y,
            "num_adaptors": winner.num_adaptors,
            "param_count": sum(s.param_count(data.tap_matrices[s.tap_id].shape[1])
                               for s in specs),
        }
        return model, info


def run_stream(scenario: Scenario, cfg: StreamConfig, seed=0) -> StreamRunResult:
    """Process the scenario's events in order; grow on confirmed shifts.

    Deterministic given (scenario, cfg, seed). Component failures during
    growth are logged and the stream continues on existing models.
    """
    cfg.validate()
    engine = ContinualEngine(cfg, seed=seed)
    oracle = StreamOracle()
    records: list[StepRecord] = []
    growths: list[GrowthRecord] = []
    misfires: list[int] = []
    triggers: list[int] = []
    resets: list[int] = []

    phase = PHASE_NORMAL
    buffer: list[tuple[TapFeatures, int, int]] = []
    pending_domain = -1
    segment = scenario.segment_length

    for event in scenario.events:
        step = event.step
        marker = MARKER_TASK_CHANGE if (step > 0 and step % segment == 0) else MARKER_NONE
        chosen = -1
        predicted = -1
        min_score = float("nan")

        if engine.models:
            verdicts = score_against_models(engine.models, event.taps, engine.rng)
            greedy_idx, _ = route_instant(verdicts, cfg.ood_threshold)
            entry = WindowEntry(greedy_idx, verdicts[greedy_idx].score)
            if cfg.routing == "instant":
                chosen = greedy_idx
            elif cfg.routing == "slow":
                chosen = route_slow(engine.window, verdicts, entry, cfg.ood_threshold)
            else:  # oracle upper bound: perfect task knowledge for routing
                idx = engine.model_for_domain(oracle.true_domain(event))
                chosen = idx if idx is not None else greedy_idx
            engine.window.append(entry)
            predicted = verdicts[chosen].label
            min_score = verdicts[greedy_idx].score

        if phase == PHASE_NORMAL:
            if not engine.models:
                # cold start: nothing is registered, so the very first
                # sample is a confirmed shift
                if oracle.confirm_shift(event, engine.registered_domains):
                    phase = PHASE_COLLECTING
                    pending_domain = oracle.true_domain(event)
                    buffer = []
                    triggers.append(step)
                    marker = MARKER_TRIGGER
            elif detect_shift(engine.window, cfg):
                if oracle.confirm_shift(event, engine.registered_domains):
                    phase = PHASE_COLLECTING
                    pending_domain = oracle.true_domain(event)
                    buffer = []
                    triggers.append(step)
                    marker = MARKER_TRIGGER
                else:
                    misfires.append(step)
                    marker = MARKER_MISFIRE
                engine.window.clear()

        record_phase = phase
        if phase == PHASE_COLLECTING:
            label, dom = oracle.annotate(event)
            buffer.append((event.taps, label, dom))
            if len(buffer) >= cfg.buffer_size:
                record_phase = PHASE_TRAINING
                try:
                    model, info = engine.grow(buffer, pending_domain)
                    acc = evaluate_accuracy(
                        model, scenario.test_sets[pending_domain],
                        seed=np.random.SeedSequence([cfg.eval_seed, len(engine.models) - 1]),
                    )
                    growths.append(GrowthRecord(
                        step=step, domain_id=pending_domain,
                        model_index=len(engine.models) - 1,
                        num_adaptors=info["num_adaptors"],
                        param_count=info["param_count"],
                        nas_score=info["nas_score"],
                        accuracy_at_registration=acc,
                    ))
                except EarError:
                    pass  # keep streaming on the existing models
                phase = PHASE_NORMAL
                buffer = []
                pending_domain = -1
                engine.window.clear()
                resets.append(step + 1)

        records.append(StepRecord(
            step=step, true_task=event.truth.domain_id, chosen_model=chosen,
            predicted_class=predicted,
            correct=(predicted == event.truth.label),
            ood_score=min_score, phase=record_phase, marker=marker,
        ))

    return StreamRunResult(records, growths, misfires, triggers, resets, cfg,
                           engine=engine)


def verify_zero_forgetting(result: StreamRunResult, scenario: Scenario) -> bool:
    """Re-evaluate every registered model on its task's held-out set and
    demand bit-exact agreement with its accuracy at registration."""
    engine = result.engine
    for growth in result.growths:
        model = engine.models[growth.model_index]
        acc = evaluate_accuracy(
            model, scenario.test_sets[growth.domain_id],
            seed=np.random.SeedSequence([result.config.eval_seed, growth.model_index]),
        )
        if acc != growth.accuracy_at_registration:
            return False
    return True
