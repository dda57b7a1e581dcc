"""Bias, variance and MSE of V_T(1) on M_hard across discount factors, with the state-3 control.

    python3 scripts/overestimation.py --gammas 0.8 0.9 0.95 --T 100000 --runs 200
"""
import argparse
import json

from qlab import experiments as ex
from qlab.schedules import Schedule


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gammas", type=float, nargs="+", default=[0.8, 0.9, 0.95])
    p.add_argument("--T", type=int, default=10**5)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-exponent", type=int, default=0)
    p.add_argument("--out", help="write the rows as JSON here")
    args = p.parse_args()

    schedule = Schedule("rescaled_linear", c=1.0, log_exponent=args.log_exponent)
    rows = ex.overestimation_report(args.gammas, schedule, args.T, args.runs, args.seed)
    for r in rows:
        est = r["estimate"]
        print(
            f"gamma {r['gamma']}: bias {est.bias:+.4f} (se {est.bias_stderr:.4f}) var {est.variance:.4f} "
            f"mse {est.mse:.4f} positive={r['positive_bias']} control bias {r['control'].bias:+.2e} "
            f"(expected {r['control_expected_bias']:+.2e}) {'; '.join(r['warnings'])}"
        )
    if args.out:
        doc = [{**r, "estimate": r["estimate"].to_dict(), "control": r["control"].to_dict()} for r in rows]
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)


if __name__ == "__main__":
    main()
