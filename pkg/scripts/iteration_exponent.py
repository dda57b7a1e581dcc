"""Iteration exponent of TD (or Q-learning) on a random instance, with an epsilon threshold table.

    python3 scripts/iteration_exponent.py --algorithm sync_td --runs 20 --out-dir out/iteration
"""
import argparse
import json
import os

from qlab import experiments as ex
from qlab.io import atomic_write, write_json


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--algorithm", default="sync_td", choices=("sync_td", "sync_q"))
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--instance-seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--T", type=int, nargs="+", default=[10**4, 10**5, 10**6])
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-exponent", type=int, default=2)
    p.add_argument("--epsilons", type=float, nargs="*", default=[0.1, 0.03, 0.01])
    p.add_argument("--out-dir", default="out/iteration")
    args = p.parse_args()

    inst = {"kind": "random", "states": args.states, "actions": args.actions, "seed": args.instance_seed}
    schedule = {"kind": "rescaled_linear", "c": 1.0, "log_exponent": args.log_exponent}
    cfg = ex.SweepConfig(args.algorithm, inst, [args.gamma], sorted(args.T), schedule, args.runs, seed=args.seed)
    fit, cells = ex.iteration_exponent_sweep(cfg)
    table = ex.epsilon_threshold_table(cfg, args.epsilons, cells)
    os.makedirs(args.out_dir, exist_ok=True)
    atomic_write(os.path.join(args.out_dir, "results.csv"), ex.results_csv(cfg, cells))
    summary = ex.summary(cfg, {"iteration": fit}, cells)
    summary["epsilon_table"] = {str(k): v for k, v in table.items()}
    write_json(os.path.join(args.out_dir, "summary.json"), summary)
    print(json.dumps({"slope": fit.slope, "stderr": fit.stderr, "flags": fit.flags, "epsilon_table": summary["epsilon_table"]}, indent=1))


if __name__ == "__main__":
    main()
