"""Multi-run comparison of Reptile, PPO, DQN and random play on one level.

    python3 scripts/run_benchmark.py --runs 10 --budget 200 --out results/bench
"""

import argparse
import json
import time
from pathlib import Path

from metamario.bench import RunConfig, export_results, format_summary, run_benchmark


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", type=Path, default=Path(__file__).parent.parent / "configs" / "bench.json")
    p.add_argument("--algos", default="reptile,ppo,dqn,random")
    p.add_argument("--runs", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results/bench"))
    args = p.parse_args()

    doc = json.loads(args.config.read_text()) if args.config.exists() else {}
    cfg = RunConfig.from_json(doc, num_runs=args.runs, budget=args.budget, master_seed=args.seed)
    start = time.perf_counter()
    records, summary = run_benchmark(cfg, args.algos.split(","), workers=args.workers)
    print(format_summary(summary))
    print(f"({time.perf_counter() - start:.0f}s)")
    for path in export_results(records, summary, args.out).values():
        print("wrote", path)


if __name__ == "__main__":
    main()
