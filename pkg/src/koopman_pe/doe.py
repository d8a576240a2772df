"""Initial-condition design: sample, simulate, lift, certify, repeat."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dictionary import Dictionary
from .errors import BudgetExhausted, RejectionBudgetError
from .ode_sim import SimConfig, VectorField
from .pe_analysis import PECertificate, PEConfig, lifted_ensemble, pe_certificate

REGION_KINDS = ("ball", "shell", "box", "point")
_MAX_DRAWS = 1_000_000
_MIN_ACCEPTANCE = 1e-4


@dataclass(frozen=True)
class Region:
    """Where initial conditions are drawn from.

    ``ball``: ``|x - center| <= radius``; ``shell``: ``r_in <= |x - center| <= r_out``;
    ``box``: ``lo <= x <= hi``; ``point``: always ``center``. With ``nonnegative`` the ball and
    shell are intersected with the nonnegative orthant (concentrations).
    """

    kind: str
    dim: int
    center: tuple | None = None
    radius: float = 1.0
    r_in: float = 0.0
    r_out: float = 1.0
    lo: tuple | None = None
    hi: tuple | None = None
    nonnegative: bool = False

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"region kind must be one of {REGION_KINDS}")
        if self.dim < 1:
            raise ValueError("region dimension must be >= 1")
        if self.center is not None and len(self.center) != self.dim:
            raise ValueError("center has the wrong dimension")
        if self.kind == "ball" and not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.kind == "shell" and not (0 <= self.r_in < self.r_out):
            raise ValueError("shell needs 0 <= r_in < r_out")
        if self.kind == "box":
            lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
            if lo.shape != (self.dim,) or hi.shape != (self.dim,) or not np.all(lo < hi):
                raise ValueError("box needs lo < hi componentwise")

    @classmethod
    def ball(cls, dim, radius=1.0, center=None, nonnegative=False):
        return cls("ball", dim, _tuple(center), radius=float(radius), nonnegative=nonnegative)

    @classmethod
    def shell(cls, dim, r_in, r_out, center=None, nonnegative=False):
        return cls("shell", dim, _tuple(center), r_in=float(r_in), r_out=float(r_out),
                   nonnegative=nonnegative)

    @classmethod
    def box(cls, lo, hi):
        return cls("box", len(lo), lo=_tuple(lo), hi=_tuple(hi))

    @classmethod
    def point(cls, center):
        return cls("point", len(center), _tuple(center))

    @property
    def center_array(self) -> np.ndarray:
        return np.zeros(self.dim) if self.center is None else np.asarray(self.center, float)

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c = self.center_array
        if self.kind == "point":
            return np.all(X == c, axis=1)
        if self.kind == "box":
            return np.all((X >= np.asarray(self.lo)) & (X <= np.asarray(self.hi)), axis=1)
        r = np.linalg.norm(X - c, axis=1)
        ok = r <= self.radius if self.kind == "ball" else (r >= self.r_in) & (r <= self.r_out)
        if self.nonnegative:
            ok &= np.all(X >= 0, axis=1)
        return ok

    def bounding_box(self):
        c = self.center_array
        if self.kind == "box":
            return np.asarray(self.lo, float), np.asarray(self.hi, float)
        R = self.radius if self.kind == "ball" else self.r_out
        lo, hi = c - R, c + R
        if self.nonnegative:
            lo = np.maximum(lo, 0.0)
        return lo, hi

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        d = dict(d)
        for key in ("center", "lo", "hi"):
            if d.get(key) is not None:
                d[key] = _tuple(d[key])
        return cls(**d)


def _tuple(v):
    return None if v is None else tuple(float(x) for x in v)


def sample_region(region: Region, count: int, seed: int) -> np.ndarray:
    """``count`` points drawn uniformly from the region; deterministic in ``seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if region.kind == "point":
        return np.tile(region.center_array, (count, 1))
    rng = np.random.default_rng(seed)
    lo, hi = region.bounding_box()
    if np.any(hi <= lo):
        raise RejectionBudgetError("region does not intersect the sampling box")
    out = []
    have = draws = 0
    chunk = max(1024, 8 * count)
    while have < count:
        X = rng.uniform(lo, hi, size=(chunk, region.dim))
        draws += chunk
        X = X[region.contains(X)]
        out.append(X)
        have += X.shape[0]
        if draws >= _MAX_DRAWS and have / draws < _MIN_ACCEPTANCE:
            raise RejectionBudgetError(f"acceptance rate {have / draws:.2e} after {draws} draws")
    return np.concatenate(out)[:count]


@dataclass
class DesignResult:
    accepted_ics: np.ndarray
    certificate: PECertificate
    iterations_used: int
    rng_seed: int
    success: bool
    trace: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "accepted_ics": [[float(v) for v in x] for x in self.accepted_ics],
            "certificate": self.certificate.to_json_dict(),
            "iterations_used": self.iterations_used,
            "rng_seed": self.rng_seed,
            "success": self.success,
            "trace": self.trace,
        }


def iteration_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def evaluate_ic_set(field: VectorField, d: Dictionary, ics, sim: SimConfig | None = None,
                    pe: PEConfig | None = None, order: int = 1) -> PECertificate:
    """Simulate every initial condition, lift, and certify the resulting ensemble."""
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    if ics.shape[0] == 0:
        raise ValueError("need at least one initial condition")
    trajs = (sim or SimConfig()).run(field, ics)
    return pe_certificate(lifted_ensemble(d, trajs), order, pe)


def design_pe_ics(field: VectorField, d: Dictionary, region: Region, target_lines: int | None = None,
                  batch: int = 2, max_iter: int = 10, sim: SimConfig | None = None, seed: int = 0,
                  pe: PEConfig | None = None, order: int = 1) -> DesignResult:
    """Grow an initial-condition set batch by batch until the data is spectrally rich.

    Stops once the ensemble shows at least ``target_lines`` spectral lines and the stacked
    periodogram rank either equals the lifted dimension or did not grow in the last round.
    Raises ``BudgetExhausted`` carrying the partial result after ``max_iter`` rounds.
    """
    if batch < 1 or max_iter < 1:
        raise ValueError("batch and max_iter must be >= 1")
    sim = sim or SimConfig()
    target = d.n_lifted if target_lines is None else int(target_lines)
    ics = np.empty((0, d.n_state))
    ens = None
    prev_rank = None
    trace = []
    cert = None
    for it in range(1, max_iter + 1):
        new = sample_region(region, batch, iteration_seed(seed, it))
        part = lifted_ensemble(d, sim.run(field, new))
        ens = part if ens is None else ens.extend(part)
        ics = np.vstack([ics, new])
        cert = pe_certificate(ens, order, pe)
        trace.append({
            "iteration": it,
            "n_ics": int(ics.shape[0]),
            "spectral_line_count": cert.spectral_line_count,
            "stacked_rank": cert.stacked_rank,
            "spectral_rank": cert.spectral_rank,
            "pd_margin": cert.pd_margin,
        })
        enough_lines = cert.spectral_line_count >= target
        plateau = cert.stacked_rank >= d.n_lifted or (prev_rank is not None and cert.stacked_rank <= prev_rank)
        if enough_lines and plateau:
            return DesignResult(ics, cert, it, seed, True, trace)
        prev_rank = cert.stacked_rank
    result = DesignResult(ics, cert, max_iter, seed, False, trace)
    raise BudgetExhausted(
        f"{cert.spectral_line_count} lines / stacked rank {cert.stacked_rank} after {max_iter} rounds",
        result)
