"""JSON file formats for instances, experiment configs and results.

Every file written here carries ``"version": "qlab/1"``. MDP files written by
other tools may omit the tag; any other tag is rejected.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .experiments import SweepConfig
from .learners import RunConfig
from .mdp import FiniteHorizonMdp, InvalidMdpError, TabularMdp, validate, validate_finite

VERSION = "qlab/1"


class SchemaError(ValueError):
    """Schema violations, each as (json pointer, message)."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in errors))


class VersionError(ValueError):
    pass


_NUM_ARRAY = {"type": "array"}

MDP_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"type": "string"},
        "num_states": {"type": "integer", "minimum": 1},
        "num_actions": {"type": "integer", "minimum": 1},
        "discount": {"type": "number"},
        "horizon": {"type": "integer", "minimum": 1},
        "rewards": _NUM_ARRAY,
        "transitions": _NUM_ARRAY,
        "action_mask": {"type": "array", "items": {"type": "array", "items": {"type": "boolean"}}},
    },
    "required": ["num_states", "num_actions", "rewards", "transitions"],
    # episodic files carry a horizon instead of a discount
    "if": {"required": ["horizon"]},
    "else": {"required": ["discount"]},
}


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def schema_errors(doc, schema) -> list[tuple[str, str]]:
    out = []
    for err in jsonschema.Draft7Validator(schema).iter_errors(doc):
        path = list(err.absolute_path)
        if err.validator == "required" and isinstance(err.instance, dict):
            for key in err.validator_value:
                if key not in err.instance:
                    out.append((_pointer(path + [key]), "required field is missing"))
        else:
            out.append((_pointer(path), err.message))
    return sorted(set(out))


def check_version(doc: dict, required: bool) -> None:
    tag = doc.get("version")
    if tag is None and not required:
        return
    if tag != VERSION:
        raise VersionError(
            f"unsupported file version {tag!r}; this tool reads {VERSION!r}. "
            f"Re-export the file with a matching release or update its version field after checking the format."
        )


def atomic_write(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(path, doc) -> None:
    atomic_write(path, json.dumps(doc, indent=1) + "\n")


# -- MDP files -----------------------------------------------------------------

def mdp_to_dict(mdp) -> dict:
    if isinstance(mdp, FiniteHorizonMdp):
        P = mdp.transition[0] if mdp.time_invariant else mdp.transition
        return {
            "version": VERSION,
            "num_states": mdp.num_states,
            "num_actions": mdp.num_actions,
            "horizon": mdp.horizon,
            "rewards": mdp.reward.tolist(),
            "transitions": P.tolist(),
        }
    doc = {
        "version": VERSION,
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "discount": mdp.discount,
        "rewards": mdp.reward.tolist(),
        "transitions": mdp.transition.tolist(),
    }
    if not mdp.mask.all():
        doc["action_mask"] = mdp.mask.tolist()
    return doc


def _array(doc, key, shapes) -> np.ndarray:
    try:
        arr = np.array(doc[key], dtype=float)
    except (ValueError, TypeError):
        raise SchemaError([(f"/{key}", "must be a rectangular array of numbers")])
    if arr.shape not in shapes:
        raise SchemaError([(f"/{key}", f"has shape {arr.shape}, expected {' or '.join(map(str, shapes))}")])
    return arr


def mdp_from_dict(doc, check: bool = True):
    """Parse and (by default) validate; raises SchemaError or InvalidMdpError."""
    errs = schema_errors(doc, MDP_SCHEMA)
    if errs:
        raise SchemaError(errs)
    check_version(doc, required=False)
    S, A = doc["num_states"], doc["num_actions"]
    if "horizon" in doc:
        H = doc["horizon"]
        r = _array(doc, "rewards", [(H, S, A)])
        P = _array(doc, "transitions", [(S, A, S), (H, S, A, S)])
        mdp = FiniteHorizonMdp(P, r)
        violations = validate_finite(mdp) if check else []
    else:
        r = _array(doc, "rewards", [(S, A)])
        P = _array(doc, "transitions", [(S, A, S)])
        mask = None
        if "action_mask" in doc:
            mask = np.array(doc["action_mask"], dtype=bool)
            if mask.shape != (S, A):
                raise SchemaError([("/action_mask", f"has shape {mask.shape}, expected {(S, A)}")])
        mdp = TabularMdp(P, r, doc["discount"], mask)
        violations = validate(mdp) if check else []
    if violations:
        raise InvalidMdpError(violations)
    return mdp


def load_mdp(path, check: bool = True):
    return mdp_from_dict(read_json(path), check)


def save_mdp(mdp, path) -> None:
    write_json(path, mdp_to_dict(mdp))


def load_behavior(path) -> np.ndarray:
    doc = read_json(path)
    if isinstance(doc, dict):
        check_version(doc, required=False)
        doc = doc["behavior"]
    return np.array(doc, dtype=float)


# -- experiment files ------------------------------------------------------------

SWEEP_MODES = ("horizon", "iteration", "cells")


@dataclass
class ExperimentFile:
    """A single learner run or a sweep, plus the instance it refers to.

    instance: {"kind": "file", "path": ...} | {"kind": "hard_mdp", "gamma": g}
              | {"kind": "random", "states": S, "actions": A, "seed": k, "gamma": g}
    For sweeps the instance lives inside the SweepConfig.
    """

    algorithm: str
    instance: dict | None = None
    run: RunConfig | None = None
    sweep: SweepConfig | None = None
    mode: str = "horizon"
    epsilons: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    behavior: list | None = None
    version: str = VERSION

    def __post_init__(self):
        if (self.run is None) == (self.sweep is None):
            raise ValueError("an experiment file holds exactly one of run or sweep")
        if self.mode not in SWEEP_MODES:
            raise ValueError(f"unknown sweep mode {self.mode!r}")

    def to_dict(self) -> dict:
        d = {"version": self.version, "algorithm": self.algorithm, "seeds": list(self.seeds)}
        if self.run is not None:
            d["instance"] = self.instance
            d["run"] = self.run.to_dict()
            if self.behavior is not None:
                d["behavior"] = self.behavior
        else:
            d["sweep"] = self.sweep.to_dict()
            d["mode"] = self.mode
            d["epsilons"] = list(self.epsilons)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentFile":
        check_version(d, required=True)
        known = {"version", "algorithm", "instance", "run", "sweep", "mode", "epsilons", "seeds", "behavior"}
        unknown = set(d) - known
        if unknown:
            raise SchemaError([("/" + k, "unknown field") for k in sorted(unknown)])
        d = dict(d)
        if "run" in d:
            d["run"] = RunConfig.from_dict(d["run"])
        if "sweep" in d:
            d["sweep"] = SweepConfig.from_dict(d["sweep"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentFile":
        return cls.from_dict(json.loads(text))


def load_experiment(path) -> ExperimentFile:
    return ExperimentFile.from_dict(read_json(path))


def save_experiment(exp: ExperimentFile, path) -> None:
    atomic_write(path, exp.to_json())


def resolve_instance(ref: dict, base_dir: str = "."):
    """Build the instance an ExperimentFile refers to."""
    from .hard_instance import build_hard_mdp
    from .instances import random_mdp

    kind = ref.get("kind")
    if kind == "file":
        path = ref["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_mdp(path)
    if kind == "hard_mdp":
        return build_hard_mdp(ref["gamma"])
    if kind == "random":
        return random_mdp(ref["states"], ref["actions"], ref["gamma"], ref["seed"])
    raise SchemaError([("/instance/kind", f"unknown instance kind {kind!r}")])
