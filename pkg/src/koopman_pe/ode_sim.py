"""Fixed-step simulation of continuous-time vector fields.

State ordering for the repressilator is ``[m_lacI, m_tetR, m_cI, p_lacI, p_tetR, p_cI]``
(mRNAs first, then proteins).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NonFiniteState

REPRESSILATOR_STATES = ("m_lacI", "m_tetR", "m_cI", "p_lacI", "p_tetR", "p_cI")
# protein index repressing each mRNA: lacI <- cI, tetR <- lacI, cI <- tetR
_REPRESSOR = np.array([2, 0, 1])


@dataclass(frozen=True)
class VectorField:
    """Autonomous or time-varying right-hand side ``dx/dt = eval(x, t)``.

    When ``vectorized`` is true, ``eval`` accepts a stack of states with shape
    ``(..., dim)`` and is applied to a whole batch of initial conditions at once.
    """

    dim: int
    eval: Callable[[np.ndarray, float], np.ndarray]
    vectorized: bool = False
    name: str = "custom"

    def __call__(self, x, t=0.0):
        return self.eval(np.asarray(x, dtype=float), t)


@dataclass(frozen=True)
class RepressilatorParams:
    alpha: float = 100.0
    alpha0: float = 0.0
    beta: float = 1.0
    n_hill: float = 2.0

    def __post_init__(self):
        if not (self.alpha >= 0 and self.alpha0 >= 0 and self.beta > 0 and self.n_hill > 0):
            raise ValueError(f"invalid repressilator parameters: {self}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, n)
    dt_sample: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states and times disagree in length")

    @property
    def n_state(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.times.shape[0]


def repressilator_field(params: RepressilatorParams | None = None) -> VectorField:
    p = params or RepressilatorParams()
    alpha, alpha0, beta, n = p.alpha, p.alpha0, p.beta, p.n_hill

    def f(x, t=0.0):
        m = x[..., :3]
        prot = x[..., 3:]
        rep = prot[..., _REPRESSOR]
        dm = -m + alpha / (1.0 + rep**n) + alpha0
        dp = -beta * (prot - m)
        return np.concatenate([dm, dp], axis=-1)

    return VectorField(6, f, vectorized=True, name="repressilator")


def linear_field(A) -> VectorField:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    return VectorField(A.shape[0], lambda x, t=0.0: x @ A.T, vectorized=True, name="linear")


def symmetric_fixed_point(params: RepressilatorParams | None = None) -> np.ndarray:
    """Fixed point with all six concentrations equal.

    With ``m_i = p_i = s`` the mRNA equation reduces to ``s = alpha / (1 + s**n) + alpha0``.
    """
    p = params or RepressilatorParams()
    g = lambda s: s - p.alpha / (1.0 + s**p.n_hill) - p.alpha0
    hi = p.alpha + p.alpha0 + 1.0
    s = brentq(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.full(6, s)


def repressilator_jacobian(x, params: RepressilatorParams | None = None) -> np.ndarray:
    p = params or RepressilatorParams()
    x = np.asarray(x, dtype=float)
    J = np.zeros((6, 6))
    prot = x[3:]
    for i in range(3):
        j = _REPRESSOR[i]
        J[i, i] = -1.0
        pj = prot[j]
        J[i, 3 + j] = -p.alpha * p.n_hill * pj ** (p.n_hill - 1) / (1.0 + pj**p.n_hill) ** 2
        J[3 + i, i] = p.beta
        J[3 + i, 3 + i] = -p.beta
    return J


def rk4_step(field: VectorField, x, t: float, dt: float):
    k1 = field.eval(x, t)
    k2 = field.eval(x + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = field.eval(x + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = field.eval(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _grid(t0, tf, dt_int, dt_sample):
    if not tf > t0:
        raise ValueError(f"need t0 < tf, got t0={t0}, tf={tf}")
    if not dt_int > 0:
        raise ValueError(f"dt_int must be positive, got {dt_int}")
    if not dt_sample > 0:
        raise ValueError(f"dt_sample must be positive, got {dt_sample}")
    ratio = dt_sample / dt_int
    substeps = int(round(ratio))
    if substeps < 1 or abs(ratio - substeps) > 1e-9 * ratio:
        raise ValueError(f"dt_sample={dt_sample} is not an integer multiple of dt_int={dt_int}")
    n_samples = int(math.floor((tf - t0) / dt_sample + 1e-9)) + 1
    h = dt_sample / substeps
    return substeps, n_samples, h


def simulate_many(field: VectorField, X0, t0: float = 0.0, tf: float = 25.0,
                  dt_int: float = 0.01, dt_sample: float = 0.1) -> list[Trajectory]:
    """Integrate a batch of initial conditions on a shared sample grid."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != field.dim:
        raise ValueError(f"initial conditions have dimension {X0.shape[1]}, field has {field.dim}")
    if not field.vectorized:
        return [simulate(field, x0, t0, tf, dt_int, dt_sample) for x0 in X0]
    substeps, n_samples, h = _grid(t0, tf, dt_int, dt_sample)
    out = np.empty((X0.shape[0], n_samples, field.dim))
    out[:, 0] = X0
    x = X0.copy()
    for k in range(1, n_samples):
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(substeps):
                x = rk4_step(field, x, t0 + ((k - 1) * substeps + s) * h, h)
        if not np.all(np.isfinite(x)):
            t = t0 + k * dt_sample
            raise NonFiniteState(f"non-finite state reached by t={t:g}", time=t)
        out[:, k] = x
    times = t0 + dt_sample * np.arange(n_samples)
    return [Trajectory(times, out[i], dt_sample) for i in range(X0.shape[0])]


def simulate(field: VectorField, x0, t0: float = 0.0, tf: float = 25.0,
             dt_int: float = 0.01, dt_sample: float = 0.1) -> Trajectory:
    """Fixed-step RK4 integration sampled every ``dt_sample``.

    The first stored state is ``x0`` itself. Raises ``NonFiniteState`` on blow-up.
    """
    if field.vectorized:
        return simulate_many(field, [x0], t0, tf, dt_int, dt_sample)[0]
    substeps, n_samples, h = _grid(t0, tf, dt_int, dt_sample)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (field.dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({field.dim},)")
    out = np.empty((n_samples, field.dim))
    out[0] = x
    for k in range(1, n_samples):
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(substeps):
                x = np.asarray(rk4_step(field, x, t0 + ((k - 1) * substeps + s) * h, h), dtype=float)
        if not np.all(np.isfinite(x)):
            t = t0 + k * dt_sample
            raise NonFiniteState(f"non-finite state reached by t={t:g}", time=t)
        out[k] = x
    return Trajectory(t0 + dt_sample * np.arange(n_samples), out, dt_sample)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    n = traj.n_state
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
        for t, x in zip(traj.times, traj.states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x])


def read_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times, states = data[:, 0], data[:, 1:]
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    if len(times) > 2 and not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0):
        raise ValueError(f"{path}: samples are not uniformly spaced")
    return Trajectory(times, states, dt, meta={"source": str(path)})


def trajectory_from_samples(states: Sequence, dt_sample: float = 1.0, t0: float = 0.0) -> Trajectory:
    """Wrap a ``(T, n)`` sample array (or a 1-D scalar series) as a Trajectory."""
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    return Trajectory(t0 + dt_sample * np.arange(states.shape[0]), states, dt_sample)


@dataclass(frozen=True)
class SimConfig:
    t0: float = 0.0
    tf: float = 25.0
    dt_int: float = 0.01
    dt_sample: float = 0.1

    def __post_init__(self):
        _grid(self.t0, self.tf, self.dt_int, self.dt_sample)

    def run(self, field: VectorField, X0) -> list[Trajectory]:
        return simulate_many(field, X0, self.t0, self.tf, self.dt_int, self.dt_sample)
