"""Command-line entry point: ``train``, ``eval`` and ``bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ALGORITHMS,
    RunConfig,
    evaluate_policy,
    export_results,
    format_summary,
    make_env_factory,
    run_benchmark,
    train_algorithm,
)
from .metrics import write_jsonl
from .policy import PolicyNetwork

log = logging.getLogger("metamario")


def _load_config(args, **overrides) -> RunConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SystemExit(f"error: cannot read config {args.config}: {exc}")
    return RunConfig.from_json(doc, budget=getattr(args, "budget", None), **overrides)


def _algorithms(text: str) -> list[str]:
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    return algos


def cmd_train(args) -> int:
    cfg = _load_config(args, algorithm=args.algo)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net, metrics = train_algorithm(args.algo, cfg, args.seed, cfg.level_seed)
    write_jsonl(out / "metrics.jsonl", metrics)
    if net is not None:
        net.save(args.checkpoint or out / "checkpoint.json")
    if metrics:
        best = max(m.distance for m in metrics)
        print(f"{args.algo}: {len(metrics)} episodes, best training distance {best}")
    print(f"wrote results to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    net = None
    if args.checkpoint:
        net = PolicyNetwork.load(args.checkpoint)
    elif args.algo != "random":
        raise SystemExit("error: eval needs --checkpoint unless --algo random")
    env = make_env_factory(cfg)(cfg.level_seed)
    res = evaluate_policy(net, [env], args.episodes, np.random.default_rng([args.seed, 30]))
    print(f"average reward {res.avg_reward:.2f}  distance {res.avg_distance:.1f}  moves {res.avg_moves:.1f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"avg_reward": res.avg_reward, "avg_distance": res.avg_distance, "avg_moves": res.avg_moves,
               "episodes": res.episodes}
        (out / "eval.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_bench(args) -> int:
    algos = args.algo
    cfg = _load_config(args, algorithm=algos[0], num_runs=args.runs, master_seed=args.seed)
    records, summary = run_benchmark(cfg, algos, workers=args.workers)
    print(format_summary(summary))
    if args.out:
        paths = export_results(records, summary, args.out)
        print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metamario", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with RunConfig fields and reptile/ppo/dqn blocks")
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train one algorithm on the configured level")
    common(t)
    t.add_argument("--algo", choices=[a for a in ALGORITHMS if a != "random"], required=True)
    t.add_argument("--budget", type=int, help="training episodes")
    t.add_argument("--out", default="runs/train")
    t.add_argument("--checkpoint", help="checkpoint path (default: <out>/checkpoint.json)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint, or of random play")
    common(e)
    e.add_argument("--algo", choices=ALGORITHMS, default="reptile")
    e.add_argument("--checkpoint")
    e.add_argument("--episodes", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="seeded multi-run benchmark")
    common(b)
    b.add_argument("--algo", type=_algorithms, default=["reptile", "ppo", "dqn", "random"],
                   help="comma-separated list")
    b.add_argument("--runs", type=int)
    b.add_argument("--budget", type=int)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
