"""Extended DMD: least-squares Koopman matrices from lifted snapshot pairs.

Orientation: ``psi(x_{t+1}) = K psi(x_t)``, so ``K = Psi_Y pinv(Psi_X)`` with snapshots stored
as columns. Prediction lifts the initial state once and then iterates ``K`` (pure linear
rollout in the lifted space).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, dictionary_from_descriptor, lift, lift_trajectory, state_dictionary
from .errors import DegenerateDataError, DimensionError, MaskError, MixedSamplingError, PoleError
from .ode_sim import Trajectory


def trajectory_digest(traj: Trajectory) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(traj.times, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(traj.states, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class SnapshotPair:
    psi_x: np.ndarray  # (n_L, M), lifted states at t
    psi_y: np.ndarray  # (n_L, M), lifted states at t + 1
    source_meta: dict = field(default_factory=dict)
    dictionary: Dictionary | None = None

    @property
    def n_pairs(self) -> int:
        return self.psi_x.shape[1]


def build_snapshots(d: Dictionary, trajectories: list[Trajectory]) -> SnapshotPair:
    """Stack ``(t, t+1)`` pairs trajectory by trajectory, never across trajectories."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    dt0 = trajectories[0].dt_sample
    xs, ys, ids = [], [], []
    for k, tr in enumerate(trajectories):
        if abs(tr.dt_sample - dt0) > 1e-9 * abs(dt0):
            raise MixedSamplingError(f"trajectory {k} has dt_sample={tr.dt_sample}, expected {dt0}")
        if len(tr) < 2:
            raise ValueError(f"trajectory {k} has fewer than 2 samples")
        L = lift_trajectory(d, tr)
        xs.append(L[:, :-1])
        ys.append(L[:, 1:])
        ids.append(trajectory_digest(tr))
    meta = {"trajectories": ids, "dt_sample": dt0, "pairs_per_trajectory": [x.shape[1] for x in xs]}
    return SnapshotPair(np.hstack(xs), np.hstack(ys), meta, d)


@dataclass(frozen=True)
class KoopmanModel:
    K: np.ndarray
    dictionary: Dictionary
    output_rows: tuple  # rows of the lifted vector that make up the state
    svd_tol: float
    training_residual: float
    rank: int
    ridge: float = 0.0
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def n_lifted(self) -> int:
        return self.K.shape[0]

    @property
    def W_h(self) -> np.ndarray:
        W = np.zeros((len(self.output_rows), self.n_lifted))
        W[np.arange(len(self.output_rows)), list(self.output_rows)] = 1.0
        return W

    def to_json_dict(self) -> dict:
        return {
            "dictionary": self.dictionary.descriptor(),
            "K": [[float(v) for v in row] for row in self.K],
            "W_h_rows": list(self.output_rows),
            "svd_tol": self.svd_tol,
            "ridge": self.ridge,
            "rank": self.rank,
            "training_residual": self.training_residual,
            "provenance": self.provenance,
        }

    def digest(self) -> str:
        return hashlib.sha256(dumps_model(self).encode()).hexdigest()


def dumps_model(model: KoopmanModel) -> str:
    return json.dumps(model.to_json_dict(), sort_keys=True, indent=1)


def save_model(model: KoopmanModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> KoopmanModel:
    with open(path) as fh:
        d = json.load(fh)
    return KoopmanModel(
        K=np.asarray(d["K"], dtype=float),
        dictionary=dictionary_from_descriptor(d["dictionary"]),
        output_rows=tuple(d["W_h_rows"]),
        svd_tol=d["svd_tol"],
        training_residual=d["training_residual"],
        rank=d["rank"],
        ridge=d.get("ridge", 0.0),
        provenance=d.get("provenance", {}),
    )


def fit_edmd(snapshots: SnapshotPair, svd_tol: float = 1e-10, ridge: float = 0.0) -> KoopmanModel:
    """Least-squares Koopman matrix via a truncated SVD pseudoinverse.

    Singular values of ``Psi_X`` below ``svd_tol * sigma_max`` are discarded. A positive
    ``ridge`` switches to Tikhonov-damped inversion ``s / (s**2 + ridge)`` on the kept modes.
    """
    if not 0 < svd_tol < 1:
        raise ValueError("svd_tol must lie in (0, 1)")
    X, Y = snapshots.psi_x, snapshots.psi_y
    d = snapshots.dictionary or state_dictionary(X.shape[0])
    if X.shape != Y.shape:
        raise DimensionError("psi_x and psi_y differ in shape")
    if X.shape[0] != d.n_lifted:
        raise DimensionError(f"snapshots have {X.shape[0]} rows, dictionary has {d.n_lifted}")
    if X.shape[1] < 1:
        raise DegenerateDataError("no snapshot pairs")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or not s[0] > 0:
        raise DegenerateDataError("snapshot matrix is identically zero")
    keep = s > svd_tol * s[0]
    r = int(keep.sum())
    if r == 0:
        raise DegenerateDataError("all singular values fall below tolerance")
    s_inv = s[:r] / (s[:r] ** 2 + ridge) if ridge > 0 else 1.0 / s[:r]
    K = ((Y @ Vt[:r].T) * s_inv) @ U[:, :r].T
    ny = np.linalg.norm(Y)
    resid = float(np.linalg.norm(K @ X - Y) / ny) if ny > 0 else 0.0
    return KoopmanModel(K, d, tuple(range(d.n_state)), float(svd_tol), resid, r, float(ridge),
                        dict(snapshots.source_meta))


def fit_trajectories(d: Dictionary, trajectories: list[Trajectory], svd_tol: float = 1e-10,
                     ridge: float = 0.0) -> KoopmanModel:
    return fit_edmd(build_snapshots(d, trajectories), svd_tol, ridge)


def predict(model: KoopmanModel, x0, steps: int, dt_sample: float = 1.0, t0: float = 0.0,
            relift: bool = False) -> Trajectory:
    """Roll the model forward ``steps`` samples from ``x0``.

    By default the state is lifted once and ``psi_{k+1} = K psi_k``; ``relift=True`` instead
    projects to the state and lifts again at every step. Divergence is not an error: the
    returned trajectory carries ``meta['diverged']`` and the first non-finite index.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    x0 = np.asarray(x0, dtype=float)
    rows = list(model.output_rows)
    psi = lift(model.dictionary, x0)
    out = np.empty((steps + 1, len(rows)))
    out[0] = psi[rows]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            psi = model.K @ psi
            out[k] = psi[rows]
            if relift:
                psi = lift(model.dictionary, out[k])
    finite = np.all(np.isfinite(out), axis=1)
    bad = np.flatnonzero(~finite)
    meta = {"diverged": bool(bad.size), "first_nonfinite": int(bad[0]) if bad.size else None}
    return Trajectory(t0 + dt_sample * np.arange(steps + 1), out, dt_sample, meta)


@dataclass(frozen=True)
class InputKoopmanSplit:
    """``psi_x(t+1) = K_x psi_x(t) + K_u psi_u(t)`` plus the rows of the input observables.

    ``K_rest`` holds the rows of ``K`` for input-dependent observables so the full matrix can
    be put back together.
    """

    K_x: np.ndarray
    K_u: np.ndarray
    x_index: tuple
    u_index: tuple
    K_rest: np.ndarray | None = None

    def reassemble(self) -> np.ndarray:
        n = len(self.x_index) + len(self.u_index)
        K = np.zeros((n, n))
        xi, ui = list(self.x_index), list(self.u_index)
        K[np.ix_(xi, xi)] = self.K_x
        K[np.ix_(xi, ui)] = self.K_u
        if self.K_rest is not None and ui:
            K[ui, :] = self.K_rest
        return K


def split_dictionary_by_input(model: KoopmanModel, input_mask) -> InputKoopmanSplit:
    mask = np.asarray(input_mask, dtype=bool)
    if mask.shape != (model.n_lifted,):
        raise MaskError(f"mask has length {mask.size}, model has {model.n_lifted} observables")
    if mask[list(model.output_rows)].any():
        raise MaskError("state coordinates cannot be marked input-dependent")
    xi = tuple(int(i) for i in np.flatnonzero(~mask))
    ui = tuple(int(i) for i in np.flatnonzero(mask))
    K = model.K
    return InputKoopmanSplit(K[np.ix_(xi, xi)], K[np.ix_(xi, ui)], xi, ui, K[list(ui), :])


def delta_input_split(model: KoopmanModel) -> InputKoopmanSplit:
    """Input-Koopman view with the lifted initial condition as an impulse input.

    The augmented observable is ``[psi; phi(u)]`` with ``psi(t+1) = K psi(t) + phi(u_t)``, so
    the input block is the identity injection.
    """
    n = model.n_lifted
    xi = tuple(range(n))
    ui = tuple(range(n, 2 * n))
    return InputKoopmanSplit(model.K.copy(), np.eye(n), xi, ui, np.zeros((n, 2 * n)))


def transfer_function(split: InputKoopmanSplit, W_h, z: complex) -> np.ndarray:
    """``W_h (z I - K_x)^{-1} K_u`` evaluated by a linear solve."""
    W_h = np.atleast_2d(np.asarray(W_h, dtype=float))
    Kx = np.atleast_2d(split.K_x)
    M = z * np.eye(Kx.shape[0]) - Kx
    if np.linalg.cond(M) > 1.0 / (Kx.shape[0] * np.finfo(float).eps):
        raise PoleError(f"z={z} is numerically a pole")
    try:
        sol = np.linalg.solve(M, np.atleast_2d(split.K_u).astype(complex))
    except np.linalg.LinAlgError as exc:
        raise PoleError(f"z={z} is a pole") from exc
    return W_h @ sol


def koopman_poles(split: InputKoopmanSplit) -> np.ndarray:
    """Eigenvalues of ``K_x``, by decreasing modulus then increasing phase."""
    ev = np.linalg.eigvals(np.atleast_2d(split.K_x))
    order = np.lexsort((np.round(np.angle(ev), 12), -np.round(np.abs(ev), 12)))
    return ev[order]
