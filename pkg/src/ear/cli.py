"""Command-line entry point.

Subcommands map one-to-one onto the pipeline stages:

    gen-synthetic   write per-task EARF feature files for a curriculum
    train           fit an adaptor set + head on an EARF file -> EARM
    eval-ood        score a model on ID vs OOD test files
    nas             zero-shot architecture search over one EARF file
    stream          run the continual engine over a synthetic curriculum
    metrics         re-derive summary tables from a stream event log

Every JSON/CSV artifact embeds the resolved config hash; reruns with the
same config and inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .adaptor import AdaptorSpec, train_adaptor_set
from .config import SCHEMA_VERSION, RunConfig, load_config
from .continual import run_stream
from .encoder import (
    FeatureDataset,
    SyntheticEncoder,
    load_feature_file,
    make_synthetic_scenario,
    scenario_train_dataset,
    write_feature_file,
)
from .errors import ConfigError, EarError, FeatureFileError
from .hdc import generate_codebook
from .metrics import auroc, macro_f1, optimal_macro_f1_threshold, tnr_at_tpr
from .model_io import load_model, save_model
from .reconfigurator import (
    DomainModel,
    build_prototypes,
    calibrate,
    encode_batch,
    evaluate_accuracy,
    nearest_distances,
)
from .zsnas import SearchSpace, combined_score, gp_ucb_search

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_json_default, sort_keys=True)
        fh.write("\n")


def _write_metric_csv(path, rows: list[tuple[str, object]], config_hash: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION} config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(rows)


def _build_encoder(cfg: RunConfig) -> SyntheticEncoder:
    return SyntheticEncoder(
        cfg.scenario.raw_dim,
        tap_dims=cfg.encoder.parsed_tap_dims(),
        seed=int(np.random.SeedSequence([cfg.seeds.data_seed, 0]).generate_state(1)[0] % (2**31)),
    )


def _scenario(cfg: RunConfig):
    return make_synthetic_scenario(cfg.scenario_spec(), seed=cfg.seeds.data_seed,
                                   encoder=_build_encoder(cfg))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_synthetic(cfg: RunConfig, args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = _scenario(cfg)
    files = {}
    for task in range(cfg.scenario.num_tasks):
        train_ds = scenario_train_dataset(
            scenario, task, cfg.scenario.train_per_task,
            seed=np.random.SeedSequence([cfg.seeds.data_seed, 100 + task]))
        test_ds = scenario.test_sets[task]
        train_path = out / f"task{task:02d}_train.earf"
        test_path = out / f"task{task:02d}_test.earf"
        write_feature_file(train_path, train_ds)
        write_feature_file(test_path, test_ds)
        files[f"task{task:02d}"] = {"train": train_path.name, "test": test_path.name,
                                    "classes": sorted(int(c) for c in np.unique(test_ds.labels))}
    _write_json(out / "manifest.json", {
        "dataset": "synthetic-curriculum",
        "backbone": f"synthetic-tanh-stack(dims={cfg.encoder.tap_dims})",
        "num_tasks": cfg.scenario.num_tasks,
        "tap_dims": list(cfg.encoder.parsed_tap_dims()),
        "curriculum": scenario.curriculum,
        "files": files,
        "config_hash": cfg.hash(),
    })
    print(f"wrote {2 * cfg.scenario.num_tasks} EARF files to {out}")
    return EXIT_OK


def _default_specs(cfg: RunConfig, data: FeatureDataset, taps, dim: int):
    widths = (cfg.train.hidden_width,) * cfg.train.depth
    return [AdaptorSpec(t, widths, dim) for t in taps]


def cmd_train(cfg: RunConfig, args) -> int:
    data = load_feature_file(args.data)
    taps = ([int(t) for t in args.taps.split(",")] if args.taps
            else list(range(data.num_taps)))
    class_list = np.unique(data.labels)
    cb_seed = int(np.random.SeedSequence([cfg.seeds.train_seed, 1]).generate_state(1)[0] % (2**31))
    codebook = generate_codebook(len(class_list), len(taps), seed=cb_seed)
    specs = _default_specs(cfg, data, taps, codebook.dim)
    result = train_adaptor_set(specs, data, codebook, cfg.train_config())
    domain_id = int(np.bincount(data.domain_ids).argmax()) if len(data) else 0
    model = DomainModel(domain_id=domain_id, specs=specs, params=result.params,
                        codebook=codebook, class_list=result.class_list,
                        tau_pi=cfg.stream.ood_threshold)
    build_prototypes(model, data,
                     np.random.default_rng(np.random.SeedSequence([cfg.seeds.train_seed, 2])))
    calibrate(model, data,
              np.random.default_rng(np.random.SeedSequence([cfg.seeds.train_seed, 3])))
    save_model(args.out, model)
    summary_path = Path(args.out).with_suffix(".train.json")
    _write_json(summary_path, {
        "model": str(args.out),
        "taps": taps,
        "embedding_dim": codebook.dim,
        "num_classes": len(class_list),
        "parameters": int(sum(p.num_params() for p in result.params)),
        "epoch_losses": {str(i): a.epoch_losses for i, a in enumerate(result.adaptors)},
        "config_hash": cfg.hash(),
    })
    print(f"trained {len(taps)} adaptors (D={codebook.dim}) -> {args.out}")
    return EXIT_OK


def cmd_eval_ood(cfg: RunConfig, args) -> int:
    model = load_model(args.model)
    id_ds = load_feature_file(args.id_data)
    ood_ds = load_feature_file(args.ood_data)

    id_acc = evaluate_accuracy(model, id_ds,
                               seed=np.random.SeedSequence([cfg.seeds.eval_seed, 1]))

    def scores_for(ds, slot):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seeds.eval_seed, slot]))
        agg = encode_batch(model, ds, rng)
        return model.weibull.cdf(nearest_distances(model, agg))

    ood_scores = np.concatenate([scores_for(id_ds, 2), scores_for(ood_ds, 3)])
    labels = np.concatenate([np.ones(len(id_ds), int), np.zeros(len(ood_ds), int)])
    id_oriented = 1.0 - ood_scores

    threshold, best_f1 = optimal_macro_f1_threshold(id_oriented, labels)
    metrics = {
        "id_accuracy": id_acc,
        "auroc": auroc(id_oriented, labels),
        "macro_f1": best_f1,
        "optimal_threshold": threshold,
        "tnr_at_tpr95": tnr_at_tpr(id_oriented, labels, 0.95),
        "tnr_at_tpr90": tnr_at_tpr(id_oriented, labels, 0.90),
        "n_id": len(id_ds),
        "n_ood": len(ood_ds),
    }
    _write_json(args.out, {**metrics, "config_hash": cfg.hash()})
    if args.csv:
        _write_metric_csv(args.csv, sorted(metrics.items()), cfg.hash())
    print(" ".join(f"{k}={v:.4f}" for k, v in metrics.items() if isinstance(v, float)))
    return EXIT_OK


def cmd_nas(cfg: RunConfig, args) -> int:
    data = load_feature_file(args.data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    num_classes = len(np.unique(data.labels))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seeds.nas_seed, 0]))
    pick = rng.choice(len(data), size=min(cfg.nas.batch, len(data)), replace=False)
    batch = [m[pick] for m in data.tap_matrices]
    space = SearchSpace(num_taps=data.num_taps, width_min=cfg.nas.width_min,
                        width_max=cfg.nas.width_max, max_depth=cfg.nas.max_depth)

    def objective(vec):
        return combined_score(space.decode(vec), batch, num_classes=num_classes,
                              beta0=cfg.nas.beta0, beta1=cfg.nas.beta1,
                              gamma=cfg.nas.gamma_spectral, knn=cfg.nas.knn,
                              seed=cfg.seeds.nas_seed).score

    result = gp_ucb_search(objective, space.bounds(), budget=cfg.nas.budget,
                           warmup=cfg.nas.warmup, kappa=cfg.nas.kappa,
                           shrink=cfg.nas.shrink, seed=cfg.seeds.nas_seed)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        header = {"schema_version": SCHEMA_VERSION, "config_hash": cfg.hash()}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ev in result.trace:
            fh.write(json.dumps({
                "iteration": ev.iteration,
                "x": [round(float(v), 6) for v in ev.x],
                "score": ev.y,
                "bounds_lo": [round(float(v), 6) for v in ev.bounds_lo],
                "bounds_hi": [round(float(v), 6) for v in ev.bounds_hi],
            }, default=_json_default, sort_keys=True) + "\n")
    best = space.decode(result.best_x)
    breakdown = combined_score(best, batch, num_classes=num_classes,
                               beta0=cfg.nas.beta0, beta1=cfg.nas.beta1,
                               gamma=cfg.nas.gamma_spectral, knn=cfg.nas.knn,
                               seed=cfg.seeds.nas_seed)
    _write_json(out / "best.json", {
        "encoded": [float(v) for v in result.best_x],
        "score": result.best_y,
        "choices": [{"tap": c.tap_id, "depth": c.depth, "width": c.width}
                    for c in best.choices],
        "expressivity": {str(k): v for k, v in breakdown.expressivity.items()},
        "redundancy": {f"{i}-{j}": v for (i, j), v in breakdown.redundancy.items()},
        "param_count": breakdown.param_count,
        "evaluations": len(result.trace),
        "discarded": len(result.discarded),
        "config_hash": cfg.hash(),
    })
    print(f"best score {result.best_y:.3f} with "
          f"{best.num_adaptors} adaptors -> {out / 'best.json'}")
    return EXIT_OK


def cmd_stream(cfg: RunConfig, args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = _scenario(cfg)
    stream_cfg = cfg.stream_config(routing=args.routing)
    result = run_stream(scenario, stream_cfg, seed=cfg.seeds.stream_seed)
    log_path = out / "events.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": SCHEMA_VERSION,
                             "config_hash": cfg.hash(),
                             "routing": stream_cfg.routing}, sort_keys=True) + "\n")
        for rec in result.records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    _write_json(out / "summary.json", {
        **result.summary(),
        "growths": [{
            "step": g.step, "domain_id": g.domain_id, "model_index": g.model_index,
            "num_adaptors": g.num_adaptors, "param_count": g.param_count,
            "nas_score": g.nas_score,
            "accuracy_at_registration": g.accuracy_at_registration,
        } for g in result.growths],
        "trigger_steps": result.trigger_steps,
        "misfire_steps": result.misfire_steps,
        "reset_steps": result.reset_steps,
        "config_hash": cfg.hash(),
    })
    print(f"{len(result.records)} steps, {result.models_learned} models, "
          f"accuracy {result.accuracy():.3f} -> {out}")
    return EXIT_OK


def cmd_metrics(cfg: RunConfig, args) -> int:
    records = []
    header = {}
    with open(args.log, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            row = json.loads(line)
            if i == 0 and "schema_version" in row and "step" not in row:
                header = row
                continue
            records.append(row)
    if not records:
        raise ConfigError(f"{args.log}: no event records")
    normal = [r for r in records if r["phase"] == "normal"]
    rows: list[tuple[str, object]] = [
        ("steps", len(records)),
        ("overall_accuracy", float(np.mean([r["correct"] for r in normal]))),
        ("accuracy_all_steps", float(np.mean([r["correct"] for r in records]))),
        ("triggers", sum(r["marker"] == "trigger" for r in records)),
        ("misfires", sum(r["marker"] == "misfire" for r in records)),
        ("task_changes", sum(r["marker"] == "task_change" for r in records)),
    ]
    for task in sorted({r["true_task"] for r in records}):
        task_recs = [r for r in normal if r["true_task"] == task]
        if task_recs:
            rows.append((f"task{task}_accuracy",
                         float(np.mean([r["correct"] for r in task_recs]))))
    _write_metric_csv(args.out, rows, header.get("config_hash", cfg.hash()))
    print(f"{len(rows)} metrics -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ear",
        description="continual learning with hypervector heads and zero-shot search",
    )
    parser.add_argument("--config", help="path to INI config (or set EAR_CONFIG)")
    parser.add_argument("--seed", type=int, help="override seeds.master")
    parser.add_argument("--threads", type=int, default=1,
                        help="cap for internal scoring parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write per-task EARF files")
    p.add_argument("--out-dir", default="data")

    p = sub.add_parser("train", help="train adaptors + head on an EARF file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--taps", help="comma-separated tap ids (default: all)")

    p = sub.add_parser("eval-ood", help="OOD metrics for a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--id-data", required=True)
    p.add_argument("--ood-data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")

    p = sub.add_parser("nas", help="zero-shot architecture search")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", default="nas_out")

    p = sub.add_parser("stream", help="run the continual engine")
    p.add_argument("--out-dir", default="stream_out")
    p.add_argument("--routing", choices=["oracle", "slow", "instant"])

    p = sub.add_parser("metrics", help="summaries from a stream event log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    return parser


_COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "eval-ood": cmd_eval_ood,
    "nas": cmd_nas,
    "stream": cmd_stream,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seeds.master = args.seed
            cfg.seeds.data = cfg.seeds.train = cfg.seeds.stream = -1
            cfg.seeds.eval = cfg.seeds.nas = -1
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FeatureFileError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except EarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
