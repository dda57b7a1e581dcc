"""Horizon exponents of synchronous Q-learning on M_hard and TD on its single-action restriction.

Both sweeps share run keys, so the bootstrap on the slope difference is paired.

    python3 scripts/horizon_separation.py --runs 20 --T 1000000 --out-dir out/horizon
"""
import argparse
import json
import os

from qlab import experiments as ex
from qlab.io import atomic_write, write_json


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gammas", type=float, nargs="+", default=[0.85, 0.9, 0.95])
    p.add_argument("--T", type=int, default=10**6)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-exponent", type=int, default=0)
    p.add_argument("--metric", default="rms_sup_error", choices=ex.METRICS)
    p.add_argument("--out-dir", default="out/horizon")
    args = p.parse_args()

    schedule = {"kind": "rescaled_linear", "c": 1.0, "log_exponent": args.log_exponent}
    os.makedirs(args.out_dir, exist_ok=True)
    fits = {}
    for alg in ("sync_q", "sync_td"):
        cfg = ex.SweepConfig(alg, {"kind": "hard_mdp"}, args.gammas, [args.T], schedule, args.runs, args.metric, seed=args.seed)
        fits[alg], cells = ex.horizon_exponent_sweep(cfg)
        atomic_write(os.path.join(args.out_dir, f"{alg}_results.csv"), ex.results_csv(cfg, cells))
        atomic_write(os.path.join(args.out_dir, f"{alg}_plot_data.csv"), ex.plot_data_csv(cfg, cells))
        write_json(os.path.join(args.out_dir, f"{alg}_summary.json"), ex.summary(cfg, {"horizon": fits[alg]}, cells))
    diff, se = ex.slope_difference(fits["sync_q"], fits["sync_td"])
    out = {
        "q_slope": fits["sync_q"].slope, "q_stderr": fits["sync_q"].stderr,
        "td_slope": fits["sync_td"].slope, "td_stderr": fits["sync_td"].stderr,
        "difference": diff, "paired_stderr": se,
    }
    write_json(os.path.join(args.out_dir, "separation.json"), out)
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
