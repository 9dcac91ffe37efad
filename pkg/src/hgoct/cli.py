"""Batch front end: ``hgoct run``, ``hgoct resume`` and ``hgoct validate``.

Exit codes: 0 converged, 4 iteration cap reached, 5 no improving step
(K underflow), 2 invalid configuration, 3 numerical failure.
"""

import argparse
import base64
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, RunConfig, check_overrides, validate
from .functional import UnsupportedConfiguration, target_spectrum
from .optimizer import (
    CONVERGED,
    K_UNDERFLOW,
    MAX_ITERATIONS,
    IterationRecord,
    OptimizationResult,
    OptimizerState,
    optimize,
)
from .quantum import EigensolverError, PropagationError

log = logging.getLogger("hgoct")

EXIT_CODES = {CONVERGED: 0, MAX_ITERATIONS: 4, K_UNDERFLOW: 5}
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CHECKPOINT_NAME = "checkpoint.json"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------- files


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, columns) -> str:
    """Comma-separated, one header row, 17 significant digits ('%' formatting ignores locale)."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    buf = io.StringIO()
    np.savetxt(buf, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def convergence_csv(history) -> str:
    cols = list(zip(*[(r.index, r.terms.j_max, r.terms.j_penal, r.terms.j_forb, r.terms.j_bound,
                       r.j_total, r.metric, r.K) for r in history]))
    return csv_text(["iter", "J_max", "J_penal", "J_forb", "J_bound", "J_total", "metric", "K"], cols)


# ---------------------------------------------------------------- checkpoints


def _encode(arr) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    if len(raw) % 8:
        raise CheckpointError("field spectrum payload has a partial float")
    return np.frombuffer(raw, dtype="<f8").astype(float)


def _finite_or_none(v):
    return v if math.isfinite(v) else None


@dataclass
class Checkpoint:
    config: dict
    config_hash: str
    iteration: int
    K: float
    field_spectrum: np.ndarray
    history: list
    termination: str | None = None

    def to_json(self) -> str:
        history = [{k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in r.as_dict().items()}
                   for r in self.history]
        doc = {
            "version": CHECKPOINT_VERSION,
            "config": self.config,
            "config_hash": self.config_hash,
            "iteration": self.iteration,
            "K": self.K,
            "termination": self.termination,
            "field_spectrum": {"dtype": "<f8", "n": len(self.field_spectrum),
                               "base64": _encode(self.field_spectrum)},
            "history": history,
        }
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        try:
            doc = json.loads(text)
            if doc.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
            entry = doc["field_spectrum"]
            field = _decode(entry["base64"])
            if len(field) != entry["n"]:
                raise CheckpointError("field spectrum length does not match its header")
            history = []
            for d in doc["history"]:
                d = {k: (float("nan") if v is None and k != "index" else v) for k, v in d.items()}
                history.append(IterationRecord.from_dict(d))
            return cls(doc["config"], doc["config_hash"], int(doc["iteration"]), float(doc["K"]), field,
                       history, doc["termination"])
        except CheckpointError:
            raise
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}") from None

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        return cls.from_json(text)

    def state(self) -> OptimizerState:
        return OptimizerState(self.iteration, self.field_spectrum.copy(), self.K, list(self.history),
                              self.termination)


# ---------------------------------------------------------------- run


def _write_outputs(out: Path, problem, config: RunConfig, result: OptimizationResult, elapsed: float):
    fgrid, tgrid = problem.fgrid, problem.tgrid
    dipole = target_spectrum(result.trajectory, problem.weights)
    atomic_write(out / "field_spectrum.csv", csv_text(["omega", "eps_bar"], [fgrid.nodes, result.field_spectrum]))
    atomic_write(out / "dipole_spectrum.csv", csv_text(["omega", "target_bar"], [fgrid.nodes, dipole]))
    atomic_write(out / "field_signal.csv", csv_text(["t", "eps"], [tgrid.nodes, result.field_signal]))
    atomic_write(out / "convergence.csv", convergence_csv(result.history))
    peak = int(np.argmax(np.abs(dipole) * (problem.weights.target_filter > 0)))
    summary = {
        "problem": problem.name,
        "config_hash": config.hash(),
        "termination": result.termination,
        "iterations": result.iterations,
        "K": result.K,
        "terms": {**result.terms.as_dict(), "j_total": result.terms.j_total},
        "initial_j_total": result.history[0].j_total if result.history else None,
        "target_band_peak": {"omega": float(fgrid.nodes[peak]), "value": float(dipole[peak])},
        "final_norm": float(np.linalg.norm(result.trajectory.final)),
        "T": tgrid.T,
        "N_t": tgrid.n,
        "seconds": round(elapsed, 3),
    }
    summary = {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in summary.items()}
    atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n")


def execute(config: RunConfig, start: Checkpoint | None = None) -> int:
    """Build, optimize and write outputs; returns the process exit code."""
    t0 = time.perf_counter()
    try:
        problem = config.build_problem()
        found = problem.violations()
        if found:
            raise ConfigError("; ".join(found))
        relax = config.relaxation(problem)
    except (ConfigError, UnsupportedConfiguration) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except (EigensolverError, PropagationError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure while building the problem: %s", exc)
        return EXIT_NUMERICAL

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.hash()
    every = config.checkpoint_every

    def save(state: OptimizerState):
        ck = Checkpoint(config.to_dict(), digest, state.iteration, state.K, state.field_spectrum,
                        state.history, state.termination)
        atomic_write(out / CHECKPOINT_NAME, ck.to_json())

    def on_accept(state: OptimizerState):
        if every and state.iteration % every == 0:
            save(state)
            atomic_write(out / "convergence.csv", convergence_csv(state.history))

    def observer(rec: IterationRecord):
        log.info("iter %4d  J=%.10g  metric=%.3e  K=%.3g", rec.index, rec.j_total, rec.metric, rec.K)

    try:
        result = optimize(problem, relax, observer, start=start.state() if start else None, on_accept=on_accept)
    except (PropagationError, EigensolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ValueError, UnsupportedConfiguration) as exc:
        log.error("optimization failed: %s", exc)
        return EXIT_NUMERICAL

    save(OptimizerState(result.iterations, result.field_spectrum, result.K, result.history, result.termination))
    _write_outputs(out, problem, config, result, time.perf_counter() - t0)
    log.info("%s after %d iterations; outputs in %s", result.termination, result.iterations, out)
    return EXIT_CODES[result.termination]


def run(config: RunConfig) -> int:
    return execute(config)


def resume(path, config: RunConfig | None = None, max_iterations: int | None = None,
           output_dir: str | None = None) -> int:
    """Continue from a checkpoint.  A supplied ``config`` must hash to the stored value."""
    try:
        ck = Checkpoint.load(path)
        stored = RunConfig.from_dict(ck.config)
        if stored.hash() != ck.config_hash:
            raise CheckpointError("checkpoint config does not match its own hash")
        if config is not None and config.hash() != ck.config_hash:
            raise CheckpointError(f"config hash mismatch: checkpoint {ck.config_hash[:12]}, "
                                  f"config {config.hash()[:12]}")
        config = config or stored
        if ck.termination == MAX_ITERATIONS:
            # the cap that stopped the saved run does not carry over
            ck.termination = None
            config.overrides.pop("max_iterations", None)
        if max_iterations is not None:
            config.overrides["max_iterations"] = int(max_iterations)
        if output_dir is not None:
            config.output_dir = output_dir
    except (CheckpointError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    if ck.termination == CONVERGED:
        log.info("checkpoint is already converged")
    return execute(config, start=ck)


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hgoct", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="optimize a built-in or configured problem")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", help="tls, 11ls, hcl, coulomb or file:PATH")
    src.add_argument("--config", help="run configuration JSON")
    r.add_argument("--out", help="output directory")
    r.add_argument("--max-iterations", type=int)
    r.add_argument("--tau", type=float)
    r.add_argument("--k-init", type=float)
    r.add_argument("--checkpoint-every", type=int)

    s = sub.add_parser("resume", help="continue from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--config", help="run configuration that must match the checkpoint")
    s.add_argument("--out", help="output directory")
    s.add_argument("--max-iterations", type=int)

    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("path", help="config JSON, problem definition JSON, or built-in name")
    return p


def _run_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    elif args.problem.startswith("file:"):
        config = RunConfig.load(args.problem[5:])
    else:
        config = RunConfig(args.problem)
    cli = {"max_iterations": args.max_iterations, "tau": args.tau, "K_init": args.k_init}
    config.overrides = check_overrides({**config.overrides, **cli})
    if args.out:
        config.output_dir = args.out
    if args.checkpoint_every is not None:
        if args.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be a nonnegative integer")
        config.checkpoint_every = args.checkpoint_every
    return config


def _threads():
    value = os.environ.get("HGOCT_THREADS")
    if not value:
        return None
    n = int(value)
    if n < 1:
        raise ValueError
    return n


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        threads = _threads()
    except ValueError:
        log.error("HGOCT_THREADS must be a positive integer")
        return EXIT_CONFIG

    with threadpool_limits(limits=threads):
        if args.command == "validate":
            return _validate(args.path)
        try:
            if args.command == "run":
                return run(_run_config(args))
            config = RunConfig.load(args.config) if args.config else None
        except ConfigError as exc:
            log.error("invalid configuration: %s", exc)
            return EXIT_CONFIG
        return resume(args.checkpoint, config, args.max_iterations, args.out)


def _validate(path) -> int:
    try:
        config = RunConfig(path) if not os.path.exists(path) else RunConfig.load(path)
        found = validate(config)
    except ConfigError as exc:
        found = [str(exc)]
    if found:
        for item in found:
            print(f"violation: {item}")
        return EXIT_CONFIG
    print("ok: no violations")
    return 0


if __name__ == "__main__":
    sys.exit(main())
