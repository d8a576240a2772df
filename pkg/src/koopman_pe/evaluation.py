"""Train-in-one-region / test-in-another experiments on the repressilator.

A run samples training initial conditions from one region, fits an eDMD model, certifies the
training ensemble, and scores long-horizon predictions from initial conditions drawn in a
second region. "Basin" in the figure captions is read as "region" (inside or outside the unit
ball); the repressilator has a single basin of attraction.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from importlib import resources
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .config import field_from_spec, parse_config
from .dictionary import dictionary_from_descriptor, lift_trajectory
from .doe import Region, sample_region
from .edmd import KoopmanModel, dumps_model, fit_trajectories, predict
from .errors import GridMismatchError, InsufficientData
from .ode_sim import REPRESSILATOR_STATES, SimConfig, Trajectory
from .pe_analysis import (PEConfig, analyze, delta_input_ensemble, lifted_ensemble, rank_curve,
                          state_ensemble, write_periodogram_csv, write_rank_curve_csv)

ERROR_MODES = ("rmse_rel", "sup_rel")


def trajectory_error(pred: Trajectory, truth: Trajectory, mode: str = "rmse_rel") -> float:
    """Relative error of a predicted trajectory; ``inf`` flags a diverged prediction."""
    if mode not in ERROR_MODES:
        raise ValueError(f"mode must be one of {ERROR_MODES}")
    if pred.states.shape != truth.states.shape or not np.allclose(pred.times, truth.times, rtol=1e-12, atol=1e-12):
        raise GridMismatchError("prediction and truth are on different grids")
    P, T = pred.states, truth.states
    if not np.all(np.isfinite(P)):
        return math.inf
    with np.errstate(over="ignore", invalid="ignore"):
        if mode == "rmse_rel":
            num, den = np.linalg.norm(P - T), np.linalg.norm(T)
        else:
            num, den = np.max(np.abs(P - T)), np.max(np.abs(T))
    if not np.isfinite(num):
        return math.inf
    return float(num / den) if den > 0 else float(num)


def one_step_residual(model: KoopmanModel, trajectories) -> float:
    """``|K Psi_X - Psi_Y|_F / |Psi_Y|_F`` recomputed from trajectories."""
    xs, ys = [], []
    for tr in trajectories:
        L = lift_trajectory(model.dictionary, tr)
        xs.append(L[:, :-1])
        ys.append(L[:, 1:])
    X, Y = np.hstack(xs), np.hstack(ys)
    return float(np.linalg.norm(model.K @ X - Y) / np.linalg.norm(Y))


@dataclass
class ExperimentConfig:
    train_region: Region
    test_region: Region
    name: str = "experiment"
    system: dict = field(default_factory=lambda: {"kind": "repressilator"})
    dictionary: dict = field(default_factory=lambda: {"basis": "hermite", "max_degree": 3})
    n_train_ics: int = 6
    n_test_ics: int = 6
    train_ics: list | None = None
    test_ics: list | None = None
    train_horizon: float = 25.0
    test_horizon: float = 75.0
    dt_int: float = 0.01
    dt_sample: float = 0.1
    svd_tol: float = 1e-10
    ridge: float = 0.0
    pe: PEConfig = field(default_factory=lambda: PEConfig(estimator="biased"))
    pe_order: int = 2
    error_mode: str = "rmse_rel"
    delta_input_certificate: bool = True
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.train_region, dict):
            self.train_region = Region.from_dict(self.train_region)
        if isinstance(self.test_region, dict):
            self.test_region = Region.from_dict(self.test_region)
        if isinstance(self.pe, dict):
            self.pe = PEConfig(**self.pe)
        if not (self.train_horizon > 0 and self.test_horizon > 0):
            raise ValueError("train_horizon and test_horizon must be positive")
        if self.train_region.dim != self.test_region.dim:
            raise ValueError("train_region and test_region differ in dimension")
        if self.n_train_ics < 1 or self.n_test_ics < 1:
            raise ValueError("n_train_ics and n_test_ics must be >= 1")
        if self.error_mode not in ERROR_MODES:
            raise ValueError(f"error_mode must be one of {ERROR_MODES}")
        SimConfig(0.0, self.train_horizon, self.dt_int, self.dt_sample)
        SimConfig(0.0, self.test_horizon, self.dt_int, self.dt_sample)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_region"] = self.train_region.to_dict()
        d["test_region"] = self.test_region.to_dict()
        return d

    def seeds(self) -> tuple[int, int]:
        a, b = np.random.SeedSequence(self.seed).generate_state(2)
        return int(a), int(b)


def fig_preset(which: str, seed: int | None = None) -> ExperimentConfig:
    """Bundled preset: ``fig1`` trains inside the unit ball, ``fig2`` in the 1-3 shell."""
    path = resources.files("koopman_pe") / "presets" / f"{which}.json"
    if which not in ("fig1", "fig2") or not path.is_file():
        raise ValueError(f"unknown preset {which!r}")
    cfg = ExperimentConfig(**parse_config(path.read_text()))
    return cfg if seed is None else replace(cfg, seed=seed)


@dataclass
class ExperimentReport:
    name: str
    config: dict
    seeds: dict
    model_digest: str
    model_summary: dict
    train_certificate: dict
    state_certificate: dict
    delta_input_certificate: dict | None
    train_ics: list
    test_ics: list
    test_errors: list  # None marks a diverged prediction
    train_errors: list
    summary: dict
    files: dict = field(default_factory=dict)

    @property
    def spectral_rank(self) -> int:
        return self.train_certificate["spectral_rank"]

    @property
    def stacked_rank(self) -> int:
        return self.train_certificate["stacked_rank"]

    @property
    def mean_test_error(self) -> float:
        v = self.summary["mean_test_error"]
        return math.inf if v is None else v

    def to_json_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1, allow_nan=False)


def _finite_or_none(v):
    return None if not math.isfinite(v) else float(v)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_state_rows(path, rows, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for set_name, ic, source, tr, cols in rows:
            for t, x in zip(tr.times, tr.states[:, cols]):
                w.writerow([set_name, ic, source, f"{t:.17g}"] + [f"{v:.17g}" for v in x])


def run_basin_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> ExperimentReport:
    """Train, certify, predict out of region, and (optionally) write the report files."""
    field_ = field_from_spec(cfg.system)
    d = dictionary_from_descriptor(cfg.dictionary, field_.dim)
    train_seed, test_seed = cfg.seeds()
    train_ics = (np.asarray(cfg.train_ics, dtype=float) if cfg.train_ics is not None
                 else sample_region(cfg.train_region, cfg.n_train_ics, train_seed))
    test_ics = (np.asarray(cfg.test_ics, dtype=float) if cfg.test_ics is not None
                else sample_region(cfg.test_region, cfg.n_test_ics, test_seed))

    train_sim = SimConfig(0.0, cfg.train_horizon, cfg.dt_int, cfg.dt_sample)
    long_sim = SimConfig(0.0, cfg.test_horizon, cfg.dt_int, cfg.dt_sample)
    train_trajs = train_sim.run(field_, train_ics)
    model = fit_trajectories(d, train_trajs, cfg.svd_tol, cfg.ridge)

    lifted = analyze(lifted_ensemble(d, train_trajs), cfg.pe_order, cfg.pe)
    states = analyze(state_ensemble(train_trajs), min(cfg.pe_order, field_.dim), cfg.pe)
    delta = None
    if cfg.delta_input_certificate:
        delta = analyze(delta_input_ensemble(model, train_trajs), cfg.pe_order, cfg.pe).certificate

    test_truth = long_sim.run(field_, test_ics)
    train_long = long_sim.run(field_, train_ics)
    steps = len(test_truth[0]) - 1

    def score(args):
        x0, truth = args
        pred = predict(model, x0, steps, cfg.dt_sample)
        return pred, trajectory_error(pred, truth, cfg.error_mode)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        test_scored = list(pool.map(score, zip(test_ics, test_truth)))
        train_scored = list(pool.map(score, zip(train_ics, train_long)))
    test_err = [e for _, e in test_scored]
    train_err = [e for _, e in train_scored]
    finite = [e for e in test_err if math.isfinite(e)]
    diverged = len(finite) < len(test_err)

    cert = lifted.certificate
    summary = {
        "n_lifted": d.n_lifted,
        "stacked_rank": cert.stacked_rank,
        "spectral_rank": cert.spectral_rank,
        "spectral_line_count": cert.spectral_line_count,
        "state_stacked_rank": states.certificate.stacked_rank,
        "training_residual": model.training_residual,
        "mean_test_error": None if diverged else float(np.mean(test_err)),
        "median_test_error": _finite_or_none(float(np.median(test_err))),
        "max_finite_test_error": max(finite) if finite else None,
        "n_diverged": len(test_err) - len(finite),
        "mean_train_region_error": _finite_or_none(float(np.mean(train_err))),
    }
    report = ExperimentReport(
        name=cfg.name,
        config=cfg.to_dict(),
        seeds={"seed": cfg.seed, "train": train_seed, "test": test_seed},
        model_digest=model.digest(),
        model_summary={"rank": model.rank, "training_residual": model.training_residual,
                       "svd_tol": model.svd_tol, "n_lifted": model.n_lifted},
        train_certificate=cert.to_json_dict(),
        state_certificate=states.certificate.to_json_dict(),
        delta_input_certificate=None if delta is None else delta.to_json_dict(),
        train_ics=train_ics.tolist(),
        test_ics=test_ics.tolist(),
        test_errors=[_finite_or_none(e) for e in test_err],
        train_errors=[_finite_or_none(e) for e in train_err],
        summary=summary,
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        n = field_.dim
        names = list(REPRESSILATOR_STATES) if n == 6 else [f"x{i + 1}" for i in range(n)]
        rows = []
        for k, (tr, (pr, _)) in enumerate(zip(train_long, train_scored)):
            rows += [("train", k, "sim", tr), ("train", k, "pred", pr)]
        for k, (tr, (pr, _)) in enumerate(zip(test_truth, test_scored)):
            rows += [("test", k, "sim", tr), ("test", k, "pred", pr)]
        all_cols = list(range(n))
        _write_state_rows(out / "trajectories.csv", [r + (all_cols,) for r in rows],
                          ["set", "ic", "source", "t"] + names)
        tail = list(range(max(0, n - 3), n))
        _write_state_rows(out / "phase_portrait.csv", [r + (tail,) for r in rows],
                          ["set", "ic", "source", "t"] + [names[i] for i in tail])
        (out / "model.json").write_text(dumps_model(model))
        write_periodogram_csv(lifted.spectrum, out / "periodogram_lifted.csv")
        write_periodogram_csv(states.spectrum, out / "periodogram_state.csv")
        write_rank_curve_csv(rank_curve(lifted.spectrum, cfg.pe.rel_threshold), out / "rank_curve.csv")
        write_rank_curve_csv(rank_curve(states.spectrum, cfg.pe.rel_threshold), out / "rank_curve_state.csv")
        with open(out / "ics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["set"] + [f"x{i + 1}" for i in range(n)])
            for s, X in (("train", train_ics), ("test", test_ics)):
                for x in X:
                    w.writerow([s] + [f"{v:.17g}" for v in x])
        for fname in ("trajectories.csv", "phase_portrait.csv", "model.json", "periodogram_lifted.csv",
                      "periodogram_state.csv", "rank_curve.csv", "rank_curve_state.csv", "ics.csv"):
            report.files[fname] = {"path": fname, "sha256": _sha256(out / fname)}
        (out / "report.json").write_text(report.dumps())
    return report


@dataclass
class Correlation:
    rho: float
    degenerate: bool
    n: int


def rank_error_correlation(reports, rank_field: str = "spectral_rank") -> Correlation:
    """Spearman correlation between a training-certificate rank and mean test error.

    Diverged runs share the position just above the largest finite error.
    """
    if len(reports) < 5:
        raise InsufficientData(f"need at least 5 reports, got {len(reports)}")
    ranks = np.array([r.train_certificate[rank_field] for r in reports], dtype=float)
    errs = np.array([r.mean_test_error for r in reports], dtype=float)
    finite = errs[np.isfinite(errs)]
    top = finite.max() if finite.size else 0.0
    errs[~np.isfinite(errs)] = 2.0 * abs(top) + 1.0
    if np.ptp(ranks) == 0 or np.ptp(errs) == 0:
        return Correlation(0.0, True, len(reports))
    rho = spearmanr(ranks, errs).statistic
    if not np.isfinite(rho):
        return Correlation(0.0, True, len(reports))
    return Correlation(float(rho), False, len(reports))


def randomized_region_configs(n_runs: int = 10, seed: int = 0, r_min: float = 0.25, r_max: float = 10.0,
                              shell_width: float = 3.0, base: ExperimentConfig | None = None):
    """Training balls of log-uniform random radius ``r``; testing in the shell ``[r, r + width]``."""
    base = base or fig_preset("fig1")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_runs):
        r = float(np.exp(rng.uniform(np.log(r_min), np.log(r_max))))
        out.append(replace(
            base,
            name=f"radius_{i:02d}",
            train_region=Region.ball(base.train_region.dim, r, nonnegative=True),
            test_region=Region.shell(base.train_region.dim, r, r + shell_width, nonnegative=True),
            seed=int(rng.integers(2**31)),
        ))
    return out
