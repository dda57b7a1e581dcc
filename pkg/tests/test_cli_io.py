import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlab import experiments as ex
from qlab.cli import cli
from qlab.hard_instance import build_hard_mdp
from qlab.instances import random_finite_mdp, random_mdp
from qlab.io import (
    ExperimentFile,
    SchemaError,
    VersionError,
    load_experiment,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    save_experiment,
    save_mdp,
)
from qlab.learners import RunConfig, RunRecord, run_sync_q
from qlab.mdp import InvalidMdpError, value_iteration
from qlab.schedules import Schedule, constant, rescaled_linear


def test_hard_mdp_round_trip_bit_for_bit(tmp_path):
    m = build_hard_mdp(0.8)
    save_mdp(m, tmp_path / "h.json")
    back = load_mdp(tmp_path / "h.json")
    assert back == m
    assert back.transition.tobytes() == m.transition.tobytes()


def test_large_random_round_trip(tmp_path):
    m = random_mdp(100, 3, 0.95, seed=1)
    save_mdp(m, tmp_path / "big.json")
    back = load_mdp(tmp_path / "big.json")
    assert np.abs(back.transition - m.transition).max() == 0.0
    assert np.abs(back.reward - m.reward).max() == 0.0


@settings(max_examples=25, deadline=None)
@given(S=st.integers(1, 6), A=st.integers(1, 3), gamma=st.floats(0.01, 0.99), seed=st.integers(0, 10**6))
def test_mdp_dict_round_trip(S, A, gamma, seed):
    m = random_mdp(S, A, gamma, seed)
    assert mdp_from_dict(json.loads(json.dumps(mdp_to_dict(m)))) == m


def test_finite_round_trip(tmp_path):
    for inv in (True, False):
        f = random_finite_mdp(3, 2, 4, seed=2, time_invariant=inv)
        save_mdp(f, tmp_path / "f.json")
        back = load_mdp(tmp_path / "f.json")
        np.testing.assert_array_equal(back.transition, f.transition)
        np.testing.assert_array_equal(back.reward, f.reward)
        assert back.time_invariant == f.time_invariant


def test_missing_discount_names_pointer():
    doc = mdp_to_dict(build_hard_mdp(0.8))
    del doc["discount"]
    with pytest.raises(SchemaError) as exc:
        mdp_from_dict(doc)
    assert ("/discount", "required field is missing") in exc.value.errors


def test_schema_pointer_for_nested_type_error():
    doc = mdp_to_dict(build_hard_mdp(0.8))
    doc["action_mask"][2][1] = "no"
    with pytest.raises(SchemaError) as exc:
        mdp_from_dict(doc)
    assert exc.value.errors[0][0] == "/action_mask/2/1"


def test_shape_mismatch_is_schema_error():
    doc = mdp_to_dict(random_mdp(2, 2, 0.9, seed=0))
    doc["rewards"] = [[0.1, 0.2]]
    with pytest.raises(SchemaError) as exc:
        mdp_from_dict(doc)
    assert exc.value.errors[0][0] == "/rewards"


def test_validation_on_load():
    doc = mdp_to_dict(random_mdp(2, 2, 0.9, seed=0))
    doc["transitions"][0][0] = [0.5, 0.4]
    with pytest.raises(InvalidMdpError):
        mdp_from_dict(doc)


def test_unknown_version_rejected_with_hint():
    doc = mdp_to_dict(random_mdp(2, 2, 0.9, seed=0))
    doc["version"] = "qlab/9"
    with pytest.raises(VersionError, match="qlab/1"):
        mdp_from_dict(doc)


def _run_file():
    return ExperimentFile(
        algorithm="sync_q",
        instance={"kind": "hard_mdp", "gamma": 0.9},
        run=RunConfig(rescaled_linear(0.9, 1000, log_exponent=0), 1000, seed=3, checkpoint_every=100),
        seeds=[3],
    )


def _sweep_file():
    cfg = ex.SweepConfig("sync_td", {"kind": "random", "states": 5, "actions": 1, "seed": 0}, [0.8, 0.85, 0.9], [500], {"kind": "rescaled_linear", "c": 1.0, "log_exponent": 2}, 3)
    return ExperimentFile(algorithm="sync_td", sweep=cfg, mode="horizon", seeds=[0])


@pytest.mark.parametrize("make", [_run_file, _sweep_file])
def test_experiment_file_round_trip(tmp_path, make):
    exp = make()
    save_experiment(exp, tmp_path / "e.json")
    back = load_experiment(tmp_path / "e.json")
    assert back.to_dict() == exp.to_dict()
    assert ExperimentFile.from_json(back.to_json()).to_dict() == back.to_dict()


def test_experiment_file_version_and_fields():
    d = _run_file().to_dict()
    with pytest.raises(VersionError):
        ExperimentFile.from_dict({**d, "version": "qlab/0"})
    with pytest.raises(VersionError):
        ExperimentFile.from_dict({k: v for k, v in d.items() if k != "version"})
    with pytest.raises(SchemaError):
        ExperimentFile.from_dict({**d, "extra": 1})


# -- CLI ---------------------------------------------------------------------------

def test_cli_hard_mdp_oracle(capsys):
    assert cli(["hard-mdp", "--gamma", "0.8", "--oracle"]) == 0
    out = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(out["v_star"], [0, 3.75, 3.75, 5], atol=1e-12)


def test_cli_emit_then_validate(tmp_path, capsys):
    path = tmp_path / "h.json"
    assert cli(["hard-mdp", "emit", "--gamma", "0.9", "--out", str(path)]) == 0
    assert load_mdp(path) == build_hard_mdp(0.9)
    assert cli(["validate", str(path)]) == 0


def test_cli_validate_bad_file(tmp_path, capsys):
    doc = mdp_to_dict(random_mdp(2, 2, 0.9, seed=0))
    doc["transitions"][1][0] = [0.2, 0.2]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert cli(["validate", str(tmp_path / "bad.json")]) == 2
    err = capsys.readouterr().err
    assert "row-sum" in err and "(.|1,0)" in err


def test_cli_usage_errors(capsys):
    assert cli(["--bogus"]) == 1
    assert cli(["solve", "--frobnicate"]) == 1
    assert cli(["hard-mdp", "--gamma", "0.9"]) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_gamma_out_of_range(capsys):
    assert cli(["hard-mdp", "--gamma", "0.5", "--oracle"]) == 2


def test_cli_non_convergence(tmp_path, capsys):
    save_mdp(random_mdp(3, 2, 0.99, seed=0), tmp_path / "m.json")
    assert cli(["solve", "--mdp", str(tmp_path / "m.json"), "--max-iters", "3"]) == 3


def test_cli_solve_then_train_matches_in_process(tmp_path):
    m = random_mdp(3, 2, 0.9, seed=4)
    save_mdp(m, tmp_path / "m.json")
    assert cli(["solve", "--mdp", str(tmp_path / "m.json"), "--out", str(tmp_path / "sol.json")]) == 0
    sched = {"kind": "rescaled_linear", "c": 1.0, "log_exponent": 2}
    args = [
        "train", "--mdp", str(tmp_path / "m.json"), "--iterations", "2000", "--schedule", json.dumps(sched),
        "--seed", "5", "--checkpoint-every", "500", "--oracle-from-solve", str(tmp_path / "sol.json"),
        "--out", str(tmp_path / "rec.json"), "--checkpoints-csv", str(tmp_path / "cp.csv"),
    ]
    assert cli(args) == 0
    rec = RunRecord.from_json((tmp_path / "rec.json").read_text())
    oracle = value_iteration(m).q_star
    direct = run_sync_q(m, RunConfig(Schedule.from_dict(sched).bind(gamma=0.9, horizon_T=2000), 2000, seed=5, checkpoint_every=500), oracle)
    assert [c.sup_error for c in rec.checkpoints] == [c.sup_error for c in direct.checkpoints]
    assert (tmp_path / "cp.csv").read_text().splitlines()[0] == "t,sup_error"


def test_cli_train_from_experiment_file(tmp_path):
    save_experiment(_run_file(), tmp_path / "e.json")
    assert cli(["train", "--config", str(tmp_path / "e.json"), "--out", str(tmp_path / "r.json")]) == 0
    rec = RunRecord.from_json((tmp_path / "r.json").read_text())
    assert [c.t for c in rec.checkpoints][-1] == 1000
    # M_hard has a closed-form oracle, so errors are filled in without --oracle-from-solve
    assert all(c.sup_error is not None for c in rec.checkpoints)


def test_cli_train_async_and_finite(tmp_path):
    save_mdp(random_mdp(3, 2, 0.9, seed=1), tmp_path / "m.json")
    assert cli(["train", "--mdp", str(tmp_path / "m.json"), "--algorithm", "async_q", "--iterations", "500",
                "--schedule", '{"kind": "constant", "eta": 0.1}', "--out", str(tmp_path / "a.json")]) == 0
    assert sum(map(sum, json.loads((tmp_path / "a.json").read_text())["visit_counts"])) == 500
    save_mdp(random_finite_mdp(2, 2, 3, seed=0), tmp_path / "f.json")
    assert cli(["train", "--mdp", str(tmp_path / "f.json"), "--algorithm", "finite_q", "--iterations", "200",
                "--schedule", '{"kind": "rescaled_linear", "log_exponent": 2}', "--out", str(tmp_path / "fr.json")]) == 0


def test_cli_sweep_writes_outputs(tmp_path, capsys):
    save_experiment(_sweep_file(), tmp_path / "s.json")
    assert cli(["sweep", "--config", str(tmp_path / "s.json"), "--out-dir", str(tmp_path / "out"), "--plot-data"]) == 0
    for name in ("results.csv", "summary.json", "plot_data.csv"):
        assert (tmp_path / "out" / name).exists()
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert "horizon" in summary["fits"]
    assert ExperimentFile.from_dict(summary["experiment"]).to_dict() == _sweep_file().to_dict()


def test_cli_sweep_output_dir_from_env(tmp_path, monkeypatch, capsys):
    save_experiment(_sweep_file(), tmp_path / "s.json")
    monkeypatch.setenv("QLAB_OUTPUT_DIR", str(tmp_path / "envout"))
    assert cli(["sweep", "--config", str(tmp_path / "s.json")]) == 0
    assert (tmp_path / "envout" / "results.csv").exists()


def test_cli_diagnose(tmp_path, capsys):
    save_mdp(random_mdp(3, 2, 0.9, seed=0), tmp_path / "m.json")
    assert cli(["diagnose", "--mdp", str(tmp_path / "m.json")]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["ergodic"] and abs(sum(d["stationary"]) - 1) < 1e-12
    (tmp_path / "b.json").write_text(json.dumps({"version": "qlab/1", "behavior": [[1, 0], [1, 0], [1, 0]]}))
    assert cli(["diagnose", "--mdp", str(tmp_path / "m.json"), "--behavior", str(tmp_path / "b.json")]) in (0, 3)


def test_every_written_file_reads_back(tmp_path):
    # atomic writes leave no temporary files behind
    save_mdp(build_hard_mdp(0.9), tmp_path / "a.json")
    save_experiment(_run_file(), tmp_path / "b.json")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.json", "b.json"]
