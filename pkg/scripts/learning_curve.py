"""Train one algorithm on a single level and dump its per-episode metrics.

    python3 scripts/learning_curve.py reptile --budget 200 --out results/reptile.jsonl
"""

import argparse
import statistics
from pathlib import Path

import numpy as np

from metamario.bench import RunConfig, evaluate_policy, make_env_factory, train_algorithm
from metamario.metrics import write_jsonl


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("algorithm", choices=["reptile", "ppo", "dqn"])
    p.add_argument("--level-seed", type=int, default=0)
    p.add_argument("--difficulty", type=int, default=3)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--out", type=Path)
    args = p.parse_args()

    cfg = RunConfig(algorithm=args.algorithm, level_seed=args.level_seed, difficulty=args.difficulty,
                    budget=args.budget, dqn={"train_every": 4})
    net, metrics = train_algorithm(args.algorithm, cfg, args.seed, args.level_seed)
    for i in range(0, len(metrics), args.window):
        chunk = metrics[i : i + args.window]
        print(f"episodes {i:4d}-{i + len(chunk) - 1:4d}  "
              f"mean distance {statistics.fmean(m.distance for m in chunk):7.1f}  "
              f"mean reward {statistics.fmean(m.total_reward for m in chunk):8.1f}")
    env = make_env_factory(cfg)(args.level_seed)
    greedy = evaluate_policy(net, [env]).avg_distance
    rand = evaluate_policy(None, [env], 20, np.random.default_rng(0)).avg_distance
    print(f"greedy distance {greedy:.0f}  random baseline {rand:.0f}")
    if args.out:
        write_jsonl(args.out, metrics)


if __name__ == "__main__":
    main()
