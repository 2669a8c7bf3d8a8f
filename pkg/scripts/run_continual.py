#!/usr/bin/env python3
"""Continual-learning curriculum experiment: run all three routing modes
over the same task stream and print the accuracy table plus growth log.

Usage: python scripts/run_continual.py [--tasks N] [--repeats R] [--segment L]
"""

import argparse

from ear.adaptor import TrainConfig
from ear.continual import StreamConfig, run_stream, verify_zero_forgetting
from ear.encoder import ScenarioSpec, make_synthetic_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tasks", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=2)
    ap.add_argument("--segment", type=int, default=2000)
    ap.add_argument("--buffer", type=int, default=1000)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--nas-budget", type=int, default=15)
    args = ap.parse_args()

    spec = ScenarioSpec(num_tasks=args.tasks, classes_per_task=args.classes,
                        repeats=args.repeats, segment_length=args.segment,
                        separation=16.0, class_spread=3.0, noise_scale=1.0,
                        raw_dim=24, test_per_class=40)
    scenario = make_synthetic_scenario(spec, seed=args.seed)
    print(f"curriculum: {scenario.curriculum} "
          f"({len(scenario.events)} steps)")

    for mode in ("oracle", "slow", "instant"):
        cfg = StreamConfig(buffer_size=args.buffer, routing=mode,
                           nas_budget=args.nas_budget,
                           nas_warmup=max(3, args.nas_budget // 3),
                           train=TrainConfig(epochs=40, batch_size=128))
        res = run_stream(scenario, cfg, seed=args.seed + 7)
        s = res.summary()
        print(f"\n== routing: {mode} ==")
        print(f"overall accuracy (normal phase): {s['overall_accuracy']:.4f}")
        print(f"models learned: {s['models_learned']}  "
              f"triggers: {s['triggers']}  misfires: {s['misfires']}")
        for g in res.growths:
            print(f"  step {g.step}: learned domain {g.domain_id} "
                  f"({g.num_adaptors} adaptors, {g.param_count} params, "
                  f"registration accuracy {g.accuracy_at_registration:.3f})")
        print(f"zero forgetting: {verify_zero_forgetting(res, scenario)}")


if __name__ == "__main__":
    main()
