"""Run configuration: built-in or inline problem definitions plus overrides.

A config file is JSON::

    {
      "problem": "tls",                      # or an inline definition object
      "overrides": {"N_t": 2048, "tau": 1e-4, "max_iterations": 300,
                    "gamma_schedule": {"every": 20, "factor": 2}},
      "output_dir": "out/tls",
      "checkpoint_every": 10
    }

Inline definitions use either a level basis::

    {"name": "two-level", "T": 100, "N_t": 1024,
     "levels": {"H0": [[1, 0], [0, 4]], "mu": [[0, 1], [1, 0]]},
     "psi0": "ground",
     "field_filter": "20*sech(20*(w-1)^4)",
     "target_filter": "exp(-10*(w-3)^2)",
     "initial_field": "sech(20*(w-1)^4)",
     "K_init": 0.5, "tau": 1e-3}

or a periodic grid::

    {"grid": {"x_min": -40, "x_max": 40, "N_x": 128, "mass": 1,
              "potential": "1 - 1/sqrt(x^2+1)", "dipole": "x"}, ...}

Optional keys: ``"target"`` (matrix or expression in ``x``; defaults to the
dipole), ``"kappa"``, and ``"subspace"`` with any of ``allowed_levels``,
``forbidden_levels`` (lists or expressions in ``n``), ``allowed_energy``,
``forbidden_energy`` (expressions in ``E``), ``allowed_x``, ``forbidden_x``.
Frequency expressions use ``w``; the dipole expression may use ``i``.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import problems
from .expressions import ExpressionError, evaluate
from .functional import FunctionalWeights, GammaSchedule, SubspaceSpec
from .optimizer import RelaxationConfig
from .problems import ProblemSpec, confine
from .quantum import HamiltonianModel, OperatorSpec, SpatialGrid, eigensolve, kinetic
from .spectral import FrequencyGrid, TimeGrid


class ConfigError(ValueError):
    pass


_OVERRIDE_TYPES = {
    "T": float,
    "N_t": int,
    "K_init": float,
    "tau": float,
    "max_iterations": int,
    "K_floor": float,
    "max_backtracks": int,
    "kappa": float,
    "gamma_schedule": dict,
}
# keys that do not change the sequence of iterates; excluded from the config hash
_UNHASHED = {"max_iterations"}


@dataclass
class RunConfig:
    problem: str | dict
    overrides: dict = dc_field(default_factory=dict)
    output_dir: str = "hgoct-out"
    checkpoint_every: int = 0

    def __post_init__(self):
        if isinstance(self.problem, str):
            name = self.problem
            if name.startswith("file:"):
                self.problem = load_definition(name[5:])
            elif name not in problems.BUILDERS:
                raise ConfigError(f"unknown problem {name!r}; choose from {sorted(problems.BUILDERS)}")
        elif not isinstance(self.problem, dict):
            raise ConfigError("problem must be a built-in name or an inline definition")
        self.overrides = check_overrides(self.overrides)
        if not isinstance(self.checkpoint_every, int) or self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be a nonnegative integer")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"problem", "overrides", "output_dir", "checkpoint_every"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "problem" not in d:
            raise ConfigError("config needs a 'problem' entry")
        return cls(d["problem"], dict(d.get("overrides") or {}), d.get("output_dir", "hgoct-out"),
                   d.get("checkpoint_every", 0))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if "problem" not in data and ("levels" in data or "grid" in data):
            data = {"problem": data}
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"problem": copy.deepcopy(self.problem), "overrides": copy.deepcopy(self.overrides),
                "output_dir": self.output_dir, "checkpoint_every": self.checkpoint_every}

    def hash(self) -> str:
        payload = {"problem": self.problem,
                   "overrides": {k: v for k, v in self.overrides.items() if k not in _UNHASHED}}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def build_problem(self) -> ProblemSpec:
        o = self.overrides
        if isinstance(self.problem, str):
            kwargs = {k: v for k, v in (("T", o.get("T")), ("n_t", o.get("N_t")), ("kappa", o.get("kappa")))
                      if v is not None}
            return problems.build(self.problem, **kwargs)
        definition = dict(self.problem)
        for key in ("T", "N_t", "kappa"):
            if key in o:
                definition[key] = o[key]
        return problem_from_definition(definition)

    def relaxation(self, problem: ProblemSpec) -> RelaxationConfig:
        o = self.overrides
        sched = o.get("gamma_schedule")
        try:
            if sched is not None:
                sched = GammaSchedule(int(sched["every"]), float(sched["factor"]))
            return RelaxationConfig.for_problem(
                problem, K_init=o.get("K_init"), tau=o.get("tau"), max_iterations=o.get("max_iterations"),
                K_floor=o.get("K_floor"), max_backtracks=o.get("max_backtracks"), gamma_schedule=sched)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def check_overrides(overrides: dict) -> dict:
    if not isinstance(overrides, dict):
        raise ConfigError("overrides must be an object")
    out = {}
    for key, value in overrides.items():
        if value is None:
            continue
        kind = _OVERRIDE_TYPES.get(key)
        if kind is None:
            raise ConfigError(f"unknown override {key!r}")
        if kind is dict:
            if not isinstance(value, dict) or set(value) != {"every", "factor"}:
                raise ConfigError("gamma_schedule needs exactly 'every' and 'factor'")
            out[key] = {"every": int(value["every"]), "factor": float(value["factor"])}
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"override {key!r} must be a number")
        if kind is int and int(value) != value:
            raise ConfigError(f"override {key!r} must be an integer")
        out[key] = kind(value)
    return out


def load_definition(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read problem definition {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("problem definition must be a JSON object")
    return data


def _matrix(value, label):
    if isinstance(value, dict):
        arr = np.asarray(value.get("re", 0.0), dtype=float) + 1j * np.asarray(value.get("im", 0.0), dtype=float)
    else:
        arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{label} must be a square matrix")
    return arr


def _weights(value, variable, grid_values, label):
    if value is None:
        return None
    if isinstance(value, str):
        return evaluate(value, {variable: grid_values})
    arr = np.asarray(value, dtype=float)
    if arr.shape != np.shape(grid_values):
        raise ConfigError(f"{label} must have {len(grid_values)} entries")
    return arr


def _raw_arrays(d: dict) -> dict:
    """Evaluate every array of an inline definition without constructing the problem."""
    if "levels" in d == "grid" in d:
        raise ConfigError("definition needs exactly one of 'levels' or 'grid'")
    for key in ("T", "N_t", "field_filter", "target_filter", "initial_field"):
        if key not in d:
            raise ConfigError(f"definition is missing {key!r}")
    raw = {"T": float(d["T"]), "N_t": int(d["N_t"])}
    tgrid = TimeGrid(raw["T"], raw["N_t"])
    omega = FrequencyGrid.for_time_grid(tgrid).nodes
    for key in ("field_filter", "target_filter", "initial_field"):
        raw[key] = evaluate(d[key], {"w": omega, "omega": omega})
    if "levels" in d:
        lv = d["levels"]
        raw["H0"] = _matrix(lv["H0"], "H0")
        raw["mu"] = _matrix(lv["mu"], "mu")
        raw["target"] = _matrix(lv["target"], "target") if "target" in lv else None
        raw["grid"] = None
    else:
        g = d["grid"]
        grid = SpatialGrid(float(g["x_min"]), float(g["x_max"]), int(g["N_x"]))
        raw["grid"] = grid
        raw["mass"] = float(g.get("mass", 1.0))
        raw["potential"] = evaluate(g["potential"], {"x": grid.x})
        raw["mu"] = evaluate(g["dipole"], {"x": grid.x}, allow_complex=True)
        raw["target"] = evaluate(g["target"], {"x": grid.x}) if "target" in g else None
    return raw


def problem_from_definition(d: dict) -> ProblemSpec:
    try:
        raw = _raw_arrays(d)
        return _assemble(d, raw)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad problem definition: {exc}") from None


def _assemble(d, raw):
    grid = raw["grid"]
    if grid is None:
        model = HamiltonianModel(OperatorSpec.dense(raw["H0"]), OperatorSpec.dense(raw["mu"]))
        target = OperatorSpec.dense(raw["target"]) if raw["target"] is not None else model.mu
    else:
        model = HamiltonianModel((kinetic(grid, raw["mass"]), OperatorSpec.spatial(raw["potential"])),
                                 OperatorSpec.spatial(raw["mu"]), grid)
        target = OperatorSpec.spatial(raw["target"]) if raw["target"] is not None else model.mu
    energies, vecs = eigensolve(model)

    psi0 = d.get("psi0", "ground")
    if psi0 == "ground":
        psi0 = vecs[:, 0]
    elif isinstance(psi0, dict):
        psi0 = np.asarray(psi0.get("re", 0.0), dtype=float) + 1j * np.asarray(psi0.get("im", 0.0), dtype=float)
    else:
        psi0 = np.asarray(psi0, dtype=float)

    sub = d.get("subspace") or {}
    unknown = set(sub) - {"allowed_levels", "forbidden_levels", "allowed_energy", "forbidden_energy",
                          "allowed_x", "forbidden_x"}
    if unknown:
        raise ConfigError(f"unknown subspace keys {sorted(unknown)}")
    n = np.arange(model.dim, dtype=float)
    if {"allowed_x", "forbidden_x"} & set(sub):
        if grid is None:
            raise ConfigError("spatial subspace weights need a grid problem")
        subspace = SubspaceSpec.spatial(_weights(sub.get("allowed_x"), "x", grid.x, "allowed_x"),
                                        _weights(sub.get("forbidden_x"), "x", grid.x, "forbidden_x"))
    elif {"allowed_energy", "forbidden_energy"} & set(sub):
        subspace = SubspaceSpec.energy(vecs, _weights(sub.get("allowed_energy"), "E", energies, "allowed_energy"),
                                       _weights(sub.get("forbidden_energy"), "E", energies, "forbidden_energy"))
    elif sub:
        subspace = SubspaceSpec.energy(vecs, _weights(sub.get("allowed_levels"), "n", n, "allowed_levels"),
                                       _weights(sub.get("forbidden_levels"), "n", n, "forbidden_levels"))
    else:
        subspace = SubspaceSpec()

    tgrid = TimeGrid(raw["T"], raw["N_t"])
    weights = FunctionalWeights(raw["field_filter"], raw["target_filter"], target, float(d.get("kappa", 0.0)),
                                subspace)
    return ProblemSpec(
        d.get("name", "custom"), model, weights, np.asarray(psi0, dtype=complex), tgrid,
        np.array(raw["initial_field"]), float(d.get("K_init", 1.0)), float(d.get("tau", 1e-3)),
        energies, vecs,
    )


def validate(config: RunConfig) -> list[str]:
    """Collect everything wrong with a config without running it."""
    found = []
    if isinstance(config.problem, dict):
        try:
            d = dict(config.problem)
            for key in ("T", "N_t", "kappa"):
                if key in config.overrides:
                    d[key] = config.overrides[key]
            raw = _raw_arrays(d)
        except (ConfigError, ExpressionError, KeyError, TypeError, ValueError) as exc:
            return [f"definition: {exc}"]
        ff, tf, eps0 = raw["field_filter"], raw["target_filter"], raw["initial_field"]
        if np.any(ff < 0):
            found.append("field filter must be nonnegative")
        if np.any(tf < 0):
            found.append("target filter must be nonnegative")
        if np.any(eps0[ff <= 0] != 0):
            found.append("field outside filter support")
        for label in ("H0", "mu", "target"):
            mat = raw.get(label)
            if isinstance(mat, np.ndarray) and mat.ndim == 2 and np.max(np.abs(mat - mat.conj().T)) > 1e-12:
                found.append(f"{label} operator is not Hermitian")
        if raw["grid"] is None and raw["H0"].shape != raw["mu"].shape:
            found.append("H0 and mu have different dimensions")
        if found:
            return found
        try:
            problem = _assemble(d, raw)
        except (ConfigError, ValueError, RuntimeError) as exc:
            return [f"definition: {exc}"]
    else:
        problem = config.build_problem()
    found.extend(problem.violations())
    try:
        config.relaxation(problem)
    except ConfigError as exc:
        found.append(str(exc))
    if problem.tgrid.n < 2:
        found.append("time grid needs at least two nodes")
    # field bins must resolve the target band
    if not np.any(problem.weights.target_filter > 0):
        found.append("target filter is zero on every frequency bin")
    return found


def confined_initial(problem: ProblemSpec) -> np.ndarray:
    return confine(problem.initial_field, problem.weights.field_filter)
