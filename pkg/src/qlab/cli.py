"""Command-line entry point ``qlab``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 numerical
non-convergence. Environment overrides: QLAB_WORKERS (sweep worker count)
and QLAB_OUTPUT_DIR (default sweep output directory).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import experiments as ex
from .chain import MixingTimeError, diagnose
from .hard_instance import GammaRangeError, build_hard_mdp, hard_oracle
from .io import (
    ExperimentFile,
    SchemaError,
    VersionError,
    atomic_write,
    load_behavior,
    load_experiment,
    load_mdp,
    read_json,
    resolve_instance,
    save_mdp,
    write_json,
)
from .learners import RunConfig, RunRecord, run_async_q, run_finite_horizon_q, run_sync_q
from .mdp import ConvergenceError, FiniteHorizonMdp, InvalidMdpError, TabularMdp, backward_induction, value_iteration
from .sampling import uniform_behavior
from .schedules import Schedule

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(doc, out=None) -> None:
    if out:
        write_json(out, doc)
    else:
        print(json.dumps(doc, indent=1))


# -- subcommands ---------------------------------------------------------------

def cmd_solve(args) -> int:
    mdp = load_mdp(args.mdp)
    if isinstance(mdp, FiniteHorizonMdp):
        q = backward_induction(mdp)
        doc = {"version": "qlab/1", "q_star": q.tolist(), "v_star": q.max(axis=2).tolist()}
    else:
        sol = value_iteration(mdp, tol=args.tol, max_iters=args.max_iters)
        doc = {
            "version": "qlab/1",
            "q_star": sol.q_star.tolist(),
            "v_star": sol.v_star.tolist(),
            "iterations": sol.iterations,
            "residual": sol.residual,
        }
    _emit(doc, args.out)
    return EXIT_OK


def _run_config(args, exp: ExperimentFile | None) -> RunConfig:
    if exp is not None:
        return exp.run
    if args.iterations is None or args.schedule is None:
        raise UsageError("train needs --config, or both --iterations and --schedule")
    return RunConfig(
        Schedule.from_dict(json.loads(args.schedule)),
        args.iterations,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )


def cmd_train(args) -> int:
    exp = load_experiment(args.config) if args.config else None
    if exp is not None and exp.run is None:
        raise UsageError("train needs an experiment file with a 'run' section")
    if args.mdp:
        mdp = load_mdp(args.mdp)
    elif exp is not None and exp.instance is not None:
        mdp = resolve_instance(exp.instance, os.path.dirname(os.path.abspath(args.config)))
    else:
        raise UsageError("train needs --mdp or an experiment file with an instance")
    algorithm = args.algorithm or (exp.algorithm if exp else "sync_q")
    cfg = _run_config(args, exp)
    oracle = None
    if args.oracle_from_solve:
        oracle = np.array(read_json(args.oracle_from_solve)["q_star"], dtype=float)
    elif exp is not None and exp.instance is not None and exp.instance.get("kind") == "hard_mdp":
        # closed form is exact and free, so errors are always reported on M_hard
        oracle = hard_oracle(exp.instance["gamma"]).q_star
    if isinstance(mdp, FiniteHorizonMdp):
        if algorithm != "finite_q":
            raise UsageError("episodic instances need --algorithm finite_q")
        cfg = dataclasses.replace(cfg, schedule=cfg.schedule.bind(gamma=1.0 - 1.0 / mdp.horizon, horizon_T=cfg.iterations))
        rec = run_finite_horizon_q(mdp, cfg, oracle)
    elif algorithm in ("sync_q", "sync_td"):
        if algorithm == "sync_td" and mdp.num_actions != 1:
            raise UsageError("sync_td needs a single-action instance")
        cfg = dataclasses.replace(cfg, schedule=cfg.schedule.bind(gamma=mdp.gamma, horizon_T=cfg.iterations))
        rec = run_sync_q(mdp, cfg, oracle)
        rec.algorithm = algorithm
    elif algorithm == "async_q":
        if cfg.schedule.kind != "constant":
            raise UsageError("async_q uses a constant schedule")
        if args.behavior:
            behavior = load_behavior(args.behavior)
        elif exp is not None and exp.behavior is not None:
            behavior = np.array(exp.behavior, dtype=float)
        else:
            behavior = uniform_behavior(mdp)
        rec = run_async_q(
            mdp, behavior, cfg.schedule.eta, cfg.iterations, cfg.seed, cfg.init, oracle,
            stream_id=cfg.stream_id, checkpoint_every=cfg.checkpoint_every,
        )
    else:
        raise UsageError(f"unknown algorithm {algorithm!r}")
    if args.out:
        atomic_write(args.out, rec.to_json() + "\n")
    else:
        print(rec.to_json())
    if args.checkpoints_csv:
        atomic_write(args.checkpoints_csv, rec.checkpoints_csv())
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = load_experiment(args.config)
    if exp.sweep is None:
        raise UsageError("sweep needs an experiment file with a 'sweep' section")
    cfg = exp.sweep
    out_dir = args.out_dir or cfg.output or os.environ.get("QLAB_OUTPUT_DIR") or "."
    os.makedirs(out_dir, exist_ok=True)
    fits, extra = {}, {}
    if exp.mode == "horizon":
        fit, cells = ex.horizon_exponent_sweep(cfg)
        fits["horizon"] = fit
    elif exp.mode == "iteration":
        fit, cells = ex.iteration_exponent_sweep(cfg)
        fits["iteration"] = fit
    else:
        cells = ex.run_cells(cfg, [(g, T) for g in cfg.gamma_grid for T in cfg.T_grid])
    if exp.epsilons:
        if len(cfg.gamma_grid) != 1:
            raise UsageError("epsilon tables need a single gamma")
        extra["epsilon_table"] = {str(k): v for k, v in ex.epsilon_threshold_table(cfg, exp.epsilons, cells).items()}
    summary = ex.summary(cfg, fits, cells)
    summary.update(extra)
    summary["experiment"] = exp.to_dict()
    atomic_write(os.path.join(out_dir, "results.csv"), ex.results_csv(cfg, cells))
    write_json(os.path.join(out_dir, "summary.json"), summary)
    if args.plot_data:
        atomic_write(os.path.join(out_dir, "plot_data.csv"), ex.plot_data_csv(cfg, cells))
    print(json.dumps({k: v.to_dict() for k, v in fits.items()} | extra, indent=1))
    return EXIT_OK


def cmd_hard_mdp(args) -> int:
    if args.action == "emit":
        if not args.out:
            raise UsageError("hard-mdp emit needs --out")
        save_mdp(build_hard_mdp(args.gamma), args.out)
        return EXIT_OK
    if not args.oracle:
        raise UsageError("hard-mdp needs 'emit' or --oracle")
    o = hard_oracle(args.gamma)
    print(json.dumps({"gamma": o.gamma, "p": o.p, "v_star": o.v_star.tolist(), "q_star": o.q_star.tolist()}))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    mdp = load_mdp(args.mdp)
    if not isinstance(mdp, TabularMdp):
        raise UsageError("diagnose needs a discounted instance")
    behavior = load_behavior(args.behavior) if args.behavior else uniform_behavior(mdp)
    print(json.dumps(diagnose(mdp, behavior).to_dict()))
    return EXIT_OK


def cmd_validate(args) -> int:
    load_mdp(args.mdp)
    print("ok")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qlab", description="Tabular Q-learning and TD experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="value iteration or backward induction on an MDP file")
    s.add_argument("--mdp", required=True)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iters", type=int, default=10**6)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="one learner run; writes a RunRecord")
    t.add_argument("--config", help="experiment file with a 'run' section")
    t.add_argument("--mdp")
    t.add_argument("--algorithm", choices=ex.ALGORITHMS)
    t.add_argument("--iterations", type=int)
    t.add_argument("--schedule", help='schedule JSON, e.g. {"kind": "constant", "eta": 0.1}')
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--behavior", help="behavior policy JSON for async_q")
    t.add_argument("--oracle-from-solve", help="output file of 'qlab solve'")
    t.add_argument("--out")
    t.add_argument("--checkpoints-csv")
    t.set_defaults(func=cmd_train)

    w = sub.add_parser("sweep", help="run an experiment sweep")
    w.add_argument("--config", required=True)
    w.add_argument("--out-dir")
    w.add_argument("--plot-data", action="store_true", help="also write long-format plot_data.csv")
    w.set_defaults(func=cmd_sweep)

    h = sub.add_parser("hard-mdp", help="emit the hard instance or print its optimal values")
    h.add_argument("action", nargs="?", choices=["emit"])
    h.add_argument("--gamma", type=float, required=True)
    h.add_argument("--out")
    h.add_argument("--oracle", action="store_true")
    h.set_defaults(func=cmd_hard_mdp)

    d = sub.add_parser("diagnose", help="behavior-chain diagnostics as JSON")
    d.add_argument("--mdp", required=True)
    d.add_argument("--behavior")
    d.set_defaults(func=cmd_diagnose)

    v = sub.add_parser("validate", help="check an MDP file")
    v.add_argument("mdp")
    v.set_defaults(func=cmd_validate)
    return p


def cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print("schema errors:", file=sys.stderr)
        for ptr, msg in exc.errors:
            print(f"  {ptr or '/'}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidMdpError as exc:
        print("invalid MDP:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    except (VersionError, GammaRangeError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, MixingTimeError) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
