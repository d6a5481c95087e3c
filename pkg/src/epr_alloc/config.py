"""JSON config files and report serialisation for the command-line tool."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .allocation import NodeProfile
from .montecarlo import PLAN_SOURCES, THETA_METHODS, ExperimentConfig, SimulationReport
from .risk import CategoricalLogLoss, LossModel, QuadraticEmbedding
from .simplex import Distribution

SCHEMA_VERSION = 1
PROB_SUM_TOL = 1e-9
CSV_HEADER = ("trial-id", "excess-risk", "phi-dist", "mass-defect")

EXAMPLE_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "model": {"kind": "quadratic-embedding", "embeddings": [[0.0], [1.0]]},
    "probabilities": [0.5, 0.5],
    "nodes": {"n0": 400, "helpers": [400]},
    "m": 1,
    "solver": {"tol": 1e-10, "max_iters": 200, "pinv_tolerance": 1e-10},
    "experiment": {"trials": 20000, "seed": 0, "theta_method": "erm-resolve",
                   "plan_source": "algorithm"},
}


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass
class ConfigFile:
    raw: dict
    model: LossModel
    reference: Distribution
    profile: NodeProfile
    tol: float
    max_iters: int
    pinv_tolerance: float
    experiment: dict

    def experiment_config(self, trials: Optional[int] = None, seed: Optional[int] = None) -> ExperimentConfig:
        exp = dict(self.experiment)
        if trials is not None:
            exp["trials"] = trials
        if seed is not None:
            exp["seed"] = seed
        try:
            return ExperimentConfig(
                model=self.model, reference=self.reference, profile=self.profile,
                plan_source=exp["plan_source"], plan=exp.get("plan"), trials=exp["trials"],
                theta_method=exp["theta_method"], seed=exp["seed"],
                as_printed=exp["as_printed_estimator"], tol=self.tol,
                max_iters=self.max_iters, pinv_tolerance=self.pinv_tolerance,
            )
        except ValueError as exc:
            raise ConfigError("experiment", str(exc)) from None

    def effective(self, trials=None, seed=None) -> dict:
        """The parsed config with command-line overrides applied."""
        eff = json.loads(json.dumps(self.raw))
        eff.setdefault("experiment", {})
        eff["experiment"] = dict(self.experiment)
        if trials is not None:
            eff["experiment"]["trials"] = trials
        if seed is not None:
            eff["experiment"]["seed"] = seed
        eff["probabilities"] = self.reference.mass.tolist()
        eff["solver"] = {"tol": self.tol, "max_iters": self.max_iters,
                         "pinv_tolerance": self.pinv_tolerance}
        return eff


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _need(doc, key, where):
    if key not in doc:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return doc[key]


def _pos_int(value, where):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(where, f"expected a positive integer, got {value!r}")
    return value


def _pos_float(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(where, f"expected a positive number, got {value!r}")
    return float(value)


def _model(spec, size) -> LossModel:
    if not isinstance(spec, dict):
        raise ConfigError("model", "expected an object")
    kind = _need(spec, "kind", "model")
    if kind == "quadratic-embedding":
        emb = _need(spec, "embeddings", "model")
        try:
            arr = np.array(emb, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("model.embeddings", "expected a list of numeric rows") from None
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] != size or not np.all(np.isfinite(arr)):
            raise ConfigError("model.embeddings", f"expected {size} finite rows of equal length")
        return QuadraticEmbedding(arr)
    if kind == "categorical-logloss":
        return CategoricalLogLoss(size)
    raise ConfigError("model.kind", f"unknown model kind {kind!r}; "
                      "expected 'quadratic-embedding' or 'categorical-logloss'")


def parse_config(doc: dict) -> ConfigFile:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")

    probs = _need(doc, "probabilities", "")
    if not isinstance(probs, list) or len(probs) < 2 or not all(
            isinstance(p, (int, float)) and not isinstance(p, bool) for p in probs):
        raise ConfigError("probabilities", "expected a list of at least two numbers")
    probs = np.array(probs, dtype=float)
    if np.any(probs <= 0):
        raise ConfigError("probabilities", "entries must be strictly positive")
    if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
        raise ConfigError("probabilities", f"entries sum to {probs.sum():.12g}, not 1")
    labels = doc.get("labels")
    try:
        reference = Distribution.from_probs(probs / probs.sum(), labels)
    except ValueError as exc:
        raise ConfigError("labels", str(exc)) from None

    model = _model(_need(doc, "model", ""), len(probs))

    nodes = _need(doc, "nodes", "")
    if not isinstance(nodes, dict):
        raise ConfigError("nodes", "expected an object")
    n0 = _pos_int(_need(nodes, "n0", "nodes"), "nodes.n0")
    helpers = nodes.get("helpers", [])
    if not isinstance(helpers, list):
        raise ConfigError("nodes.helpers", "expected a list")
    helpers = [_pos_int(n, f"nodes.helpers[{i}]") for i, n in enumerate(helpers)]
    m = _pos_int(doc.get("m", 1), "m")
    profile = NodeProfile(n0, tuple(helpers), m)

    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("solver", "expected an object")
    tol = _pos_float(solver.get("tol", 1e-10), "solver.tol")
    max_iters = _pos_int(solver.get("max_iters", 200), "solver.max_iters")
    pinv_tol = _pos_float(solver.get("pinv_tolerance", 1e-10), "solver.pinv_tolerance")

    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "expected an object")
    experiment = {
        "trials": _pos_int(exp.get("trials", 1000), "experiment.trials"),
        "seed": exp.get("seed", 0),
        "theta_method": exp.get("theta_method", "erm-resolve"),
        "plan_source": exp.get("plan_source", "algorithm"),
        "plan": exp.get("plan"),
        "as_printed_estimator": bool(exp.get("as_printed_estimator", False)),
    }
    seed = experiment["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("experiment.seed", f"expected an unsigned 64-bit integer, got {seed!r}")
    if experiment["theta_method"] not in THETA_METHODS:
        raise ConfigError("experiment.theta_method", f"expected one of {THETA_METHODS}")
    if experiment["plan_source"] not in PLAN_SOURCES:
        raise ConfigError("experiment.plan_source", f"expected one of {PLAN_SOURCES}")
    return ConfigFile(doc, model, reference, profile, tol, max_iters, pinv_tol, experiment)


def load_config(path) -> ConfigFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return parse_config(doc)


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_header(command: str, effective: dict) -> dict:
    return {
        "tool": "epr-alloc",
        "tool_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": config_hash(effective),
        "config": effective,
    }


def trials_csv(report: SimulationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.records:
        w.writerow([r.trial_id, repr(r.excess_risk), repr(r.phi_dist), repr(r.mass_defect)])
    return buf.getvalue()
