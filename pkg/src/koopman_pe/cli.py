"""Command-line entry point: ``koopman-pe <command> --config PATH --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 design budget exhausted.
Relative data paths inside a config file are resolved against the config file's directory.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import build_record, field_from_spec, load_config_text, parse_config, resolve_config_path
from .dictionary import dictionary_from_descriptor, state_dictionary
from .doe import Region, design_pe_ics, sample_region
from .edmd import fit_trajectories, load_model, predict, save_model
from .errors import BudgetExhausted, ConfigError, KoopmanPEError, NonFiniteState
from .evaluation import ExperimentConfig, run_basin_experiment, trajectory_error
from .ode_sim import SimConfig, read_trajectory_csv, write_trajectory_csv
from .pe_analysis import (PEConfig, analyze, lifted_ensemble, rank_curve, save_certificate,
                          write_periodogram_csv, write_rank_curve_csv)

log = logging.getLogger("koopman_pe")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4


@dataclass
class SimulateConfig:
    system: dict = field(default_factory=lambda: {"kind": "repressilator"})
    ics: list | None = None
    region: dict | None = None
    n_ics: int = 1
    t0: float = 0.0
    tf: float = 100.0
    dt_int: float = 0.01
    dt_sample: float = 0.1
    seed: int = 0

    def __post_init__(self):
        SimConfig(self.t0, self.tf, self.dt_int, self.dt_sample)
        if self.ics is None and self.region is None:
            self.ics = [[1.0, 0, 0, 0, 0, 0]]


@dataclass
class FitConfig:
    data: list
    dictionary: dict = field(default_factory=lambda: {"basis": "state"})
    svd_tol: float = 1e-10
    ridge: float = 0.0


@dataclass
class PredictConfig:
    model: str
    x0: list | None = None
    truth: str | None = None
    steps: int | None = None
    dt_sample: float = 1.0
    error_mode: str = "rmse_rel"
    model_sha256: str | None = None

    def __post_init__(self):
        if self.x0 is None and self.truth is None:
            raise ValueError("predict needs x0 or truth")
        if self.truth is None and self.steps is None:
            raise ValueError("steps is required without a truth trajectory")


@dataclass
class PEFileConfig:
    data: list
    dictionary: dict = field(default_factory=lambda: {"basis": "state"})
    order: int = 2
    pe: dict = field(default_factory=dict)


@dataclass
class DesignConfig:
    region: dict
    system: dict = field(default_factory=lambda: {"kind": "repressilator"})
    dictionary: dict = field(default_factory=lambda: {"basis": "hermite", "max_degree": 3})
    target_lines: int | None = None
    batch: int = 2
    max_iter: int = 10
    sim: dict = field(default_factory=lambda: {"tf": 25.0})
    pe: dict = field(default_factory=lambda: {"estimator": "biased"})
    order: int = 1
    seed: int = 0


class _Loaded:
    def __init__(self, path):
        self.text = load_config_text(path)
        where = resolve_config_path(path)
        self.base = Path(where).parent if isinstance(where, Path) else Path.cwd()
        self.data = parse_config(self.text)

    def record(self, cls, data=None, where=""):
        return build_record(cls, self.data if data is None else data, self.text, where)

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _region(cfg: _Loaded, data, where: str) -> Region:
    return Region.from_dict(cfg.record(Region, data, where).to_dict())


def _pe_config(cfg: _Loaded, data: dict, center: bool) -> PEConfig:
    pe = cfg.record(PEConfig, data, "pe")
    return dataclasses.replace(pe, center=True) if center else pe


def cmd_simulate(cfg: _Loaded, args) -> int:
    c = cfg.record(SimulateConfig)
    f = field_from_spec(c.system)
    if c.ics is not None:
        X0 = np.atleast_2d(np.asarray(c.ics, dtype=float))
    else:
        region = _region(cfg, c.region, "region")
        X0 = sample_region(region, c.n_ics, c.seed if args.seed is None else args.seed)
    trajs = SimConfig(c.t0, c.tf, c.dt_int, c.dt_sample).run(f, X0)
    for k, tr in enumerate(trajs):
        write_trajectory_csv(tr, args.out / f"trajectory_{k:03d}.csv")
    log.info("wrote %d trajectories of %d samples", len(trajs), len(trajs[0]))
    return EXIT_OK


def _read_all(cfg: _Loaded, paths):
    if isinstance(paths, str):
        paths = [paths]
    return [read_trajectory_csv(cfg.path(p)) for p in paths]


def cmd_fit(cfg: _Loaded, args) -> int:
    c = cfg.record(FitConfig)
    trajs = _read_all(cfg, c.data)
    d = dictionary_from_descriptor(c.dictionary, trajs[0].n_state)
    model = fit_trajectories(d, trajs, c.svd_tol, c.ridge)
    path = args.out / "model.json"
    save_model(model, path)
    _write_json(args.out / "fit.json", {"model": "model.json", "model_sha256": _sha256(path),
                                        "training_residual": model.training_residual,
                                        "rank": model.rank, "n_lifted": model.n_lifted})
    return EXIT_OK


def cmd_predict(cfg: _Loaded, args) -> int:
    c = cfg.record(PredictConfig)
    mpath = cfg.path(c.model)
    if c.model_sha256 is not None and _sha256(mpath) != c.model_sha256:
        raise ConfigError(f"{mpath}: digest does not match model_sha256")
    model = load_model(mpath)
    truth = read_trajectory_csv(cfg.path(c.truth)) if c.truth else None
    x0 = truth.states[0] if c.x0 is None else np.asarray(c.x0, dtype=float)
    steps = len(truth) - 1 if c.steps is None else c.steps
    dt = truth.dt_sample if truth is not None else c.dt_sample
    t0 = truth.times[0] if truth is not None else 0.0
    pred = predict(model, x0, steps, dt, t0)
    write_trajectory_csv(pred, args.out / "prediction.csv")
    out = {"steps": steps, "diverged": pred.meta["diverged"], "first_nonfinite": pred.meta["first_nonfinite"]}
    if truth is not None:
        err = trajectory_error(pred, truth, c.error_mode)
        out["error"] = err if np.isfinite(err) else None
        out["error_mode"] = c.error_mode
    _write_json(args.out / "prediction.json", out)
    log.info("prediction: %s", out)
    return EXIT_OK


def cmd_pe(cfg: _Loaded, args) -> int:
    c = cfg.record(PEFileConfig)
    trajs = _read_all(cfg, c.data)
    n = trajs[0].n_state
    d = dictionary_from_descriptor(c.dictionary, n) if c.dictionary else state_dictionary(n)
    res = analyze(lifted_ensemble(d, trajs), c.order, _pe_config(cfg, c.pe, args.center))
    save_certificate(res.certificate, args.out / "certificate.json")
    write_periodogram_csv(res.spectrum, args.out / "periodogram.csv")
    write_rank_curve_csv(rank_curve(res.spectrum, res.certificate.thresholds["rel_threshold"]),
                         args.out / "rank_curve.csv")
    log.info("is_pe=%s lines=%d", res.certificate.is_pe, res.certificate.spectral_line_count)
    return EXIT_OK


def _write_ics(path, ics):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(ics.shape[1])])
        for x in ics:
            w.writerow([f"{v:.17g}" for v in x])


def cmd_design(cfg: _Loaded, args) -> int:
    c = cfg.record(DesignConfig)
    f = field_from_spec(c.system)
    d = dictionary_from_descriptor(c.dictionary, f.dim)
    region = _region(cfg, c.region, "region")
    sim = cfg.record(SimConfig, c.sim, "sim")
    pe = _pe_config(cfg, c.pe, args.center)
    seed = c.seed if args.seed is None else args.seed
    try:
        res = design_pe_ics(f, d, region, c.target_lines, c.batch, c.max_iter, sim, seed, pe, c.order)
        code = EXIT_OK
    except BudgetExhausted as exc:
        res, code = exc.result, EXIT_BUDGET
        log.error("%s", exc)
    _write_json(args.out / "design.json", res.to_json_dict())
    _write_ics(args.out / "ics.csv", res.accepted_ics)
    return code


def cmd_experiment(cfg: _Loaded, args) -> int:
    data = dict(cfg.data)
    for key in ("train_region", "test_region"):
        if key in data:
            data[key] = _region(cfg, data[key], key)
    if "pe" in data:
        data["pe"] = cfg.record(PEConfig, data["pe"], "pe")
    if args.seed is not None:
        data["seed"] = args.seed
    c = cfg.record(ExperimentConfig, data)
    if args.center:
        c.pe = dataclasses.replace(c.pe, center=True)
    report = run_basin_experiment(c, args.out, threads=args.threads)
    log.info("stacked rank %d, mean test error %s", report.stacked_rank, report.summary["mean_test_error"])
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "pe": cmd_pe,
    "design": cmd_design,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="koopman-pe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config (comments allowed) or presets/<name>")
        s.add_argument("--out", default="out", type=Path, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--center", action="store_true", help="subtract per-channel means before PE analysis")
        s.add_argument("--threads", type=int, default=1, help="workers for per-IC evaluation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("KOOPMAN_PE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _Loaded(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteState as exc:
        print(f"numeric failure: NonFiniteState: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KoopmanPEError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
