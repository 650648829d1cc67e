"""Command-line front end.

    frares <mode> --config CONFIG.json [--seed N] [--out DIR]

Modes: simulate, estimate-l0, estimate-l1, check, bound, end-to-end.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver failure.
Set ``FRARES_LOG_LEVEL`` (e.g. ``DEBUG``) for log output on stderr.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .core import ArtifactSpec, FracSystem, MeasurementBlock, build_propagators
from .correctability import (
    DEFAULT_ENUMERATION_CAP,
    check_correctable_exact,
    correctable_channel_cap,
    max_correctable_q,
    observability_index,
    sufficient_bound,
)
from .estimators import SolverConfig, estimate_windows, nullspace_property_check
from .exceptions import (
    ConfigurationError,
    DataError,
    EnumerationCapError,
    FraresError,
    SolverError,
)
from .scenarios import ScenarioSpec, generate_scenario, score_windows, synthetic_eeg

log = logging.getLogger("frares")

MODES = ("simulate", "estimate-l0", "estimate-l1", "check", "bound", "end-to-end")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4


@dataclass
class RunConfig:
    mode: str
    system: FracSystem
    output_dir: Path
    measurements: Path = None
    scenario: dict = None
    eeg: dict = None
    method: str = "l1"
    window: int = 6
    q_max: int = 1
    q: int = 1
    k: int = None
    trials: int = 10000
    nullspace: bool = False
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    rank_tol: float = 1e-9
    l0_tol: float = 1e-8
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    @classmethod
    def from_dict(cls, mode, doc, base_dir=Path(".")):
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {"system", "output_dir", "measurements", "scenario", "eeg", "method", "window",
                 "q_max", "q", "k", "trials", "nullspace", "seed", "solver", "tolerances",
                 "enumeration_cap"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

        def path(value):
            p = Path(value)
            return p if p.is_absolute() else base_dir / p

        if "system" not in doc:
            raise ConfigurationError("config: 'system' (path or inline object) is required")
        system_doc = doc["system"]
        if isinstance(system_doc, str):
            system = io.load_system(path(system_doc))
        else:
            system = io.system_from_dict(system_doc, "config.system")

        tolerances = doc.get("tolerances", {})
        unknown_tol = set(tolerances) - {"rank", "l0"}
        if unknown_tol:
            raise ConfigurationError(f"unknown tolerances: {sorted(unknown_tol)}")
        cfg = cls(
            mode=mode,
            system=system,
            output_dir=path(doc.get("output_dir", "out")),
            measurements=path(doc["measurements"]) if doc.get("measurements") else None,
            scenario=doc.get("scenario"),
            eeg=doc.get("eeg"),
            method=doc.get("method", "l1"),
            window=doc.get("window", 6),
            q_max=doc.get("q_max", 1),
            q=doc.get("q", 1),
            k=doc.get("k"),
            trials=doc.get("trials", 10000),
            nullspace=bool(doc.get("nullspace", False)),
            seed=doc.get("seed", 0),
            solver=SolverConfig.from_dict(doc.get("solver", {})),
            rank_tol=tolerances.get("rank", 1e-9),
            l0_tol=tolerances.get("l0", 1e-8),
            enumeration_cap=doc.get("enumeration_cap", DEFAULT_ENUMERATION_CAP),
        )
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("window", "trials", "enumeration_cap"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        for name in ("q", "q_max", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigurationError(f"{name} must be a nonnegative integer")
        for name in ("rank_tol", "l0_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"tolerance {name} must be positive")
        if self.method not in ("l0", "l1"):
            raise ConfigurationError("method must be 'l0' or 'l1'")
        if self.mode in ("check", "bound") and self.k is None:
            raise ConfigurationError(f"mode {self.mode!r} requires 'k' (horizon)")
        if self.k is not None and (not isinstance(self.k, int) or self.k < 1):
            raise ConfigurationError("k must be a positive integer")
        if self.mode == "simulate" and self.scenario is None and self.eeg is None:
            raise ConfigurationError("mode 'simulate' requires a 'scenario' or 'eeg' section")
        if self.mode in ("estimate-l0", "estimate-l1") and self.measurements is None \
                and self.scenario is None and self.eeg is None:
            raise ConfigurationError(f"mode {self.mode!r} requires 'measurements' or a scenario")
        if self.mode == "end-to-end" and self.scenario is None and self.eeg is None:
            raise ConfigurationError("mode 'end-to-end' requires a 'scenario' or 'eeg' section")


def _artifact_from_dict(doc):
    if doc is None:
        return ArtifactSpec()
    allowed = set(ArtifactSpec.__dataclass_fields__)
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigurationError(f"unknown artifact keys: {sorted(unknown)}")
    return ArtifactSpec(**doc)


def _simulate(cfg):
    """Measurements plus ground truth from the config's scenario section."""
    if cfg.eeg is not None:
        eeg = dict(cfg.eeg)
        for key in ("pop_amplitude", "noise_std"):
            if key not in eeg:
                raise ConfigurationError(f"eeg: '{key}' is required")
        eeg.setdefault("window", cfg.window)
        try:
            return synthetic_eeg(system=cfg.system, seed=cfg.seed, **eeg)
        except TypeError as exc:
            raise ConfigurationError(f"eeg: {exc}") from None
    sc = dict(cfg.scenario)
    unknown = set(sc) - {"k", "x0", "artifact"}
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
    if "k" not in sc:
        raise ConfigurationError("scenario: 'k' is required")
    spec = ScenarioSpec(cfg.system, sc["k"], _artifact_from_dict(sc.get("artifact")),
                        sc.get("x0"), min(cfg.window, sc["k"]), cfg.seed)
    block, truth = generate_scenario(spec)
    times = np.arange(spec.k, dtype=float)
    return MeasurementBlock(block.Y, None, times), truth


def _truth_doc(truth):
    return {
        "x0": truth.x0,
        "states": truth.states,
        "artifacts": truth.artifacts,
        "support": sorted(truth.support),
        "windows": [list(w) for w in truth.windows],
        "window_x0": truth.window_x0,
    }


def _window_docs(window_results):
    return [{"window": w, "start": s, "stop": e, "result": r.to_dict()}
            for w, (s, e, r) in enumerate(window_results)]


def _strip_histories(window_results):
    for _, _, r in window_results:
        for key in ("objective_history", "merit_history", "rho_history", "dual"):
            r.diagnostics.pop(key, None)


def _estimate(cfg, block, method):
    window_results, states = estimate_windows(cfg.system, block, cfg.window, method=method,
                                              q_max=cfg.q_max, config=cfg.solver, tol=cfg.l0_tol)
    if any(r.status == "infeasible" for _, _, r in window_results):
        raise SolverError("no artifact set of size <= q_max explains at least one window")
    for w, (_, _, r) in enumerate(window_results):
        if r.status == "max-iterations":
            log.warning("window %d: solver hit max_iterations", w)
    _strip_histories(window_results)
    return window_results, states


def run_pipeline(cfg):
    """Execute ``cfg`` and write its artifacts; returns the output directory."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    if cfg.mode == "simulate":
        block, truth = _simulate(cfg)
        io.save_measurements(block, out / "measurements.csv")
        io.write_json(_truth_doc(truth), out / "truth.json")
        return out

    if cfg.mode in ("estimate-l0", "estimate-l1"):
        if cfg.measurements is not None:
            block = io.load_measurements(cfg.measurements)
        else:
            block, _ = _simulate(cfg)
        if block.n_channels != cfg.system.n_channels:
            raise DataError(f"measurements have {block.n_channels} channels, "
                            f"system expects {cfg.system.n_channels}")
        method = "l0" if cfg.mode == "estimate-l0" else "l1"
        window_results, states = _estimate(cfg, block, method)
        io.write_json({"method": method, "window": cfg.window, "windows": _window_docs(window_results)},
                      out / "results.json")
        times = block.times if block.times is not None else np.arange(block.k, dtype=float)
        _write_states(out / "states_est.csv", times, states)
        return out

    if cfg.mode == "check":
        report = check_correctable_exact(cfg.system, cfg.k, cfg.q, cfg.rank_tol, cfg.enumeration_cap)
        obs = observability_index(cfg.system, cfg.k, cfg.rank_tol)
        doc = {"correctability": report.to_dict(), "observability": obs.to_dict(),
               "max_correctable_q": max_correctable_q(cfg.system, cfg.k, cfg.rank_tol,
                                                      cfg.enumeration_cap)}
        if obs.found:
            cap = correctable_channel_cap(cfg.system.n_channels, cfg.k, obs.k_star)
            doc["channel_cap"] = {"numerator": cap.numerator, "denominator": cap.denominator,
                                  "value": float(cap)}
        if cfg.nullspace:
            cache = build_propagators(cfg.system, cfg.k)
            doc["nullspace"] = nullspace_property_check(cache, cfg.q, cfg.trials, cfg.seed).to_dict()
        io.write_json(doc, out / "check.json")
        return out

    if cfg.mode == "bound":
        report = sufficient_bound(build_propagators(cfg.system, cfg.k), cfg.rank_tol)
        io.write_json(report.to_dict(), out / "bound.json")
        return out

    # end-to-end
    block, truth = _simulate(cfg)
    window_results, states = _estimate(cfg, block, cfg.method)
    popped = sorted(truth.support)
    clean_states = [i for i in range(cfg.system.n_states) if i not in popped] \
        if np.array_equal(cfg.system.C, np.eye(cfg.system.n_states)) else None
    metrics = score_windows(window_results, truth, states)
    if clean_states is not None:
        metrics["outside_artifact_channels"] = score_windows(window_results, truth, states,
                                                             channels=clean_states)
    io.save_measurements(block, out / "measurements.csv")
    io.write_json(_truth_doc(truth), out / "truth.json")
    io.write_json({"method": cfg.method, "window": cfg.window, "windows": _window_docs(window_results)},
                  out / "results.json")
    io.write_json(metrics, out / "metrics.json")
    times = block.times if block.times is not None else np.arange(block.k, dtype=float)
    io.write_trajectory_csv(out / "trajectory.csv", times, truth.states, states)
    return out


def _write_states(path, times, states):
    import csv

    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *(f"state_{i + 1}_est" for i in range(states.shape[1]))])
        for m in range(states.shape[0]):
            w.writerow([io._fmt(times[m]), *(io._fmt(v) for v in states[m])])


def _error_exit(exc, code, out_dir=None):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(io.dumps(doc))
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            io.write_json(doc, out_dir / "error.json")
        except OSError:
            pass
    return code


def build_parser():
    parser = argparse.ArgumentParser(
        prog="frares",
        description="Fractional-order state estimation under sensor artifacts.",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None):
    level = getattr(logging, os.environ.get("FRARES_LOG_LEVEL", "WARNING").upper(), None)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK

    out_dir = Path(args.out) if args.out else None
    try:
        config_path = Path(args.config)
        try:
            doc = io.read_json(config_path)
        except DataError as exc:
            raise ConfigurationError(f"config: {exc}") from None
        if isinstance(doc, dict):
            if out_dir is None and isinstance(doc.get("output_dir"), str):
                out_dir = config_path.parent / doc["output_dir"]
            if args.seed is not None:
                doc["seed"] = args.seed
            if args.out is not None:
                doc["output_dir"] = str(Path(args.out).resolve())
        cfg = RunConfig.from_dict(args.mode, doc, config_path.parent)
        out_dir = cfg.output_dir
        run_pipeline(cfg)
    except (ConfigurationError, EnumerationCapError) as exc:
        return _error_exit(exc, EXIT_CONFIG, out_dir)
    except DataError as exc:
        return _error_exit(exc, EXIT_DATA, out_dir)
    except (SolverError, FraresError) as exc:
        return _error_exit(exc, EXIT_SOLVER, out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
