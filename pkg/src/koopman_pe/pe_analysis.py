"""Persistence-of-excitation analysis of lifted signals.

Pipeline: ensemble of lifted signals -> lagged auto-covariances ``R(k) = E[phi_t phi_{t+k}^T]``
-> block-Toeplitz covariance of order ``N`` (positive definite <=> persistently exciting of
order ``N``) and the matrix spectrum ``S(w) = sum_k R(k) exp(-i k w)`` whose non-vanishing
frequencies ("spectral lines") witness the same property.

The expectation is a joint average over time and realizations. Three estimators:

``circular``
    divide-by-T average over the periodic extension of each realization. ``R`` and ``S`` form
    an exact DFT pair on the T-point grid and the block covariance is a principal block of a
    positive semidefinite block-circulant matrix, so the line-count / definiteness equivalence
    holds exactly on finite data. Default for direct analysis.
``biased``
    divide-by-T average over the overlapping part; the full-lag spectrum on a zero-padded grid
    is the ordinary (interpolated) periodogram.
``unbiased``
    divide by ``T - |k|``; may produce indefinite lag sequences.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy.fft import next_fast_len

from .dictionary import Dictionary, lift_trajectory
from .errors import DimensionError, GridError, LagError, OrderWarning

log = logging.getLogger(__name__)

ESTIMATORS = ("circular", "biased", "unbiased")
LINE_CONVENTION = "grid points in (-pi, pi]; +w and -w counted as distinct lines"


@dataclass
class LiftedSignalEnsemble:
    """Realizations of a vector signal, stored as ``(R, n_channels, T)``."""

    signals: np.ndarray
    dt_sample: float = 1.0
    centered: bool = False

    def __post_init__(self):
        sig = np.asarray(self.signals, dtype=float)
        if sig.ndim == 2:
            sig = sig[None]
        if sig.ndim != 3:
            raise DimensionError("signals must be (R, n_channels, T)")
        if sig.shape[2] < 2:
            raise DimensionError("signals need at least 2 samples")
        self.signals = sig

    @classmethod
    def from_list(cls, signals, dt_sample=1.0, centered=False):
        shapes = {np.shape(s) for s in signals}
        if len(shapes) != 1:
            raise DimensionError(f"realizations differ in shape: {sorted(shapes)}")
        return cls(np.stack([np.asarray(s, dtype=float) for s in signals]), dt_sample, centered)

    @property
    def n_realizations(self) -> int:
        return self.signals.shape[0]

    @property
    def n_channels(self) -> int:
        return self.signals.shape[1]

    @property
    def length(self) -> int:
        return self.signals.shape[2]

    def center(self) -> "LiftedSignalEnsemble":
        if self.centered:
            return self
        sig = self.signals - self.signals.mean(axis=2, keepdims=True)
        return LiftedSignalEnsemble(sig, self.dt_sample, True)

    def scaled(self, c: float) -> "LiftedSignalEnsemble":
        return LiftedSignalEnsemble(c * self.signals, self.dt_sample, self.centered)

    def extend(self, other: "LiftedSignalEnsemble") -> "LiftedSignalEnsemble":
        return LiftedSignalEnsemble(np.concatenate([self.signals, other.signals]), self.dt_sample,
                                    self.centered)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.signals, dtype="<f8").tobytes()).hexdigest()


def lifted_ensemble(d: Dictionary, trajectories, center: bool = False) -> LiftedSignalEnsemble:
    ens = LiftedSignalEnsemble.from_list([lift_trajectory(d, tr) for tr in trajectories],
                                         trajectories[0].dt_sample)
    return ens.center() if center else ens


def state_ensemble(trajectories, center: bool = False) -> LiftedSignalEnsemble:
    ens = LiftedSignalEnsemble.from_list([tr.states.T for tr in trajectories],
                                         trajectories[0].dt_sample)
    return ens.center() if center else ens


def delta_input_signal(model, traj) -> LiftedSignalEnsemble:
    """Initial condition recast as an impulse input to the lifted linear system.

    Index 0 holds ``psi(x_0)``; index ``t >= 1`` holds the one-step residual
    ``psi(x_t) - K psi(x_{t-1})``. For an exactly closed dictionary the signal is a single
    impulse.
    """
    if traj.n_state != model.dictionary.n_state:
        raise DimensionError("trajectory does not match the model dictionary")
    L = lift_trajectory(model.dictionary, traj)
    sig = np.empty_like(L)
    sig[:, 0] = L[:, 0]
    sig[:, 1:] = L[:, 1:] - model.K @ L[:, :-1]
    return LiftedSignalEnsemble(sig[None], traj.dt_sample)


def delta_input_ensemble(model, trajectories) -> LiftedSignalEnsemble:
    parts = [delta_input_signal(model, tr).signals for tr in trajectories]
    return LiftedSignalEnsemble(np.concatenate(parts), trajectories[0].dt_sample)


@dataclass
class AutoCovarianceSequence:
    lags: np.ndarray  # -L..L
    R: np.ndarray  # (2L+1, n, n); R[i] belongs to lags[i]
    estimator: str
    n_samples: int

    @property
    def max_lag(self) -> int:
        return int(self.lags[-1])

    def at(self, k: int) -> np.ndarray:
        if abs(k) > self.max_lag:
            raise LagError(f"lag {k} not stored (max {self.max_lag})")
        return self.R[k + self.max_lag]


def autocovariance(ens: LiftedSignalEnsemble, max_lag: int | None = None,
                   estimator: str = "circular") -> AutoCovarianceSequence:
    """Lagged auto-covariances averaged over time and realizations.

    ``R(-k) = R(k)^T`` holds exactly: negative lags are stored as transposes.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    X = ens.signals
    n_real, n, T = X.shape
    L = T - 1 if max_lag is None else int(max_lag)
    if L >= T or L < 0:
        raise LagError(f"max_lag={L} needs 0 <= max_lag < T={T}")
    nfft = T if estimator == "circular" else next_fast_len(2 * T - 1)
    F = np.fft.fft(X, n=nfft, axis=2)
    # cross-spectrum; its inverse DFT at index k is sum_t phi_t phi_{t+k}^T
    C = np.einsum("rif,rjf->fij", F.conj(), F) / n_real
    del F
    pos = np.fft.ifft(C, axis=0)[: L + 1].real
    del C
    if estimator == "unbiased":
        pos /= (T - np.arange(L + 1))[:, None, None]
    else:
        pos /= T
    pos[0] = 0.5 * (pos[0] + pos[0].T)
    R = np.empty((2 * L + 1, n, n))
    R[L:] = pos
    R[:L] = np.swapaxes(pos[1:][::-1], 1, 2)
    return AutoCovarianceSequence(np.arange(-L, L + 1), R, estimator, T)


@dataclass
class BlockCovariance:
    N: int
    matrix: np.ndarray
    min_eigenvalue: float

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def pd_tolerance(self, rel_tol: float = 1e-10) -> float:
        return rel_tol * self.trace / self.matrix.shape[0]

    def is_positive_definite(self, rel_tol: float = 1e-10) -> bool:
        return self.min_eigenvalue > self.pd_tolerance(rel_tol)


def block_covariance(acs: AutoCovarianceSequence, N: int) -> BlockCovariance:
    """Block-Toeplitz matrix with block ``(i, j) = R(j - i)``, i, j = 0..N-1."""
    if N < 1:
        raise ValueError("order must be >= 1")
    if N - 1 > acs.max_lag:
        raise LagError(f"order {N} needs lags up to {N - 1}, only {acs.max_lag} stored")
    n = acs.R.shape[1]
    M = np.empty((N * n, N * n))
    for i in range(N):
        for j in range(N):
            M[i * n:(i + 1) * n, j * n:(j + 1) * n] = acs.at(j - i)
    M = 0.5 * (M + M.T)
    lam = np.linalg.eigvalsh(M)
    return BlockCovariance(N, M, float(lam[0]))


def _wrap(omega):
    # map to (-pi, pi]
    w = np.mod(omega + np.pi, 2 * np.pi) - np.pi
    w[np.isclose(w, -np.pi, rtol=0, atol=1e-12)] = np.pi
    return w


def default_n_freq(max_lag: int) -> int:
    need = 4 * (2 * max_lag + 1)
    return 1 << (need - 1).bit_length()


@dataclass
class PowerSpectrum:
    """Matrix spectrum on a uniform grid, in FFT order (``omegas`` wrapped into (-pi, pi])."""

    omegas: np.ndarray
    S: np.ndarray  # (F, n, n) complex Hermitian
    estimator: str
    max_lag: int
    n_samples: int
    line_threshold: float = 1e-8

    @property
    def n_freq(self) -> int:
        return self.omegas.shape[0]

    @cached_property
    def lambda_max(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(s)[-1] for s in self.S])

    @property
    def channel_power(self) -> np.ndarray:
        """Per-frequency diagonal powers ``diag S(w)``, shape ``(F, n)``."""
        return np.einsum("fii->fi", self.S).real


def power_spectrum(acs: AutoCovarianceSequence, n_freq: int | None = None,
                   line_threshold: float = 1e-8) -> PowerSpectrum:
    """DFT of the stored lag sequence.

    For the circular estimator the grid is the natural T-point grid of the periodic extension
    (needs lags up to ``T // 2``). Otherwise the truncated sum over ``|k| <= max_lag`` is
    evaluated on ``n_freq >= 2 max_lag + 1`` points, by default the next power of two above
    ``4 (2 max_lag + 1)``.
    """
    L = acs.max_lag
    n = acs.R.shape[1]
    if acs.estimator == "circular":
        T = acs.n_samples
        if L < T // 2:
            raise GridError(f"circular spectrum needs lags up to {T // 2}, have {L}")
        if n_freq not in (None, T):
            raise GridError(f"circular spectrum lives on the {T}-point grid, not {n_freq}")
        nf = T
        r = np.empty((T, n, n))
        for m in range(T):
            r[m] = acs.at(m) if m <= L else acs.at(m - T)
    else:
        nf = default_n_freq(L) if n_freq is None else int(n_freq)
        if nf < 2 * L + 1:
            raise GridError(f"n_freq={nf} cannot resolve lags up to {L}")
        r = np.zeros((nf, n, n))
        r[: L + 1] = acs.R[L:]
        if L:
            r[nf - L:] = acs.R[:L]
    S = np.fft.fft(r, axis=0)
    del r
    for lo in range(0, nf, 256):
        blk = S[lo:lo + 256]
        S[lo:lo + 256] = 0.5 * (blk + np.conj(np.swapaxes(blk, 1, 2)))
    omegas = _wrap(2 * np.pi * np.arange(nf) / nf)
    return PowerSpectrum(omegas, S, acs.estimator, L, acs.n_samples, line_threshold)


def lags_from_spectrum(spec: PowerSpectrum) -> np.ndarray:
    """Inverse DFT back to ``R(k)`` for ``k = -max_lag..max_lag``."""
    r = np.fft.ifft(spec.S, axis=0).real
    L, nf = spec.max_lag, spec.n_freq
    idx = np.r_[nf - np.arange(L, 0, -1), np.arange(L + 1)]
    return r[idx]


def bochner_roundtrip_error(spec: PowerSpectrum, acs: AutoCovarianceSequence) -> float:
    """Max-abs discrepancy between recovered and stored lags, relative to ``max |R|``."""
    scale = float(np.max(np.abs(acs.R)))
    err = float(np.max(np.abs(lags_from_spectrum(spec) - acs.R)))
    return err / scale if scale > 0 else err


def line_mask(spec: PowerSpectrum, rel_threshold: float | None = None) -> np.ndarray:
    thr = spec.line_threshold if rel_threshold is None else rel_threshold
    lam = spec.lambda_max
    top = lam.max()
    if not top > 0:
        return np.zeros(lam.shape, dtype=bool)
    return lam > thr * top


def spectral_line_count(spec: PowerSpectrum, rel_threshold: float = 1e-8) -> int:
    """Number of grid frequencies where ``lambda_max(S(w))`` exceeds ``rel_threshold`` of the peak."""
    return int(line_mask(spec, rel_threshold).sum())


def _numerical_rank(sv, rel_threshold):
    sv = np.asarray(sv)
    if sv.size == 0 or not sv.max() > 0:
        return 0
    return int((sv > rel_threshold * sv.max()).sum())


def spectral_rank(spec: PowerSpectrum, rel_threshold: float = 1e-8) -> int:
    """Rank of the stacked periodogram: the ``F x n`` matrix of per-frequency channel powers."""
    return _numerical_rank(np.linalg.svd(spec.channel_power, compute_uv=False), rel_threshold)


def aggregated_spectral_rank(spec: PowerSpectrum, rel_threshold: float = 1e-8) -> int:
    """Rank of ``sum S(w_j)`` over the spectral lines (Hermitian PSD ``n x n``)."""
    mask = line_mask(spec, rel_threshold)
    if not mask.any():
        return 0
    A = spec.S[mask].sum(axis=0)
    A = 0.5 * (A + A.conj().T)
    return _numerical_rank(np.clip(np.linalg.eigvalsh(A), 0, None), rel_threshold)


def rank_curve(spec: PowerSpectrum, rel_threshold: float = 1e-8, max_points: int = 128):
    """Stacked-periodogram rank using the lowest ``k`` frequencies (by ``|w|``), for growing ``k``."""
    order = np.lexsort((spec.omegas, np.abs(spec.omegas)))
    P = spec.channel_power[order]
    F = P.shape[0]
    ks = np.unique(np.r_[np.linspace(1, F, min(F, max_points)).round().astype(int), F])
    return [(int(k), _numerical_rank(np.linalg.svd(P[:k], compute_uv=False), rel_threshold))
            for k in ks]


@dataclass(frozen=True)
class PEConfig:
    estimator: str = "circular"
    max_lag: int | None = None
    n_freq: int | None = None
    rel_threshold: float = 1e-8
    pd_rel_tol: float = 1e-10
    center: bool = False
    check_theorem: bool = True

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if not 0 < self.rel_threshold < 1:
            raise ValueError("rel_threshold must lie in (0, 1)")
        if not self.pd_rel_tol > 0:
            raise ValueError("pd_rel_tol must be positive")


@dataclass
class PECertificate:
    n_lifted: int
    order_tested: int
    pd_margin: float
    pd_tol: float
    spectral_line_count: int
    spectral_rank: int  # rank of the summed spectrum over the lines
    stacked_rank: int  # rank of the stacked periodogram
    is_pe: bool
    theorem_consistent: bool
    n_freq: int
    n_realizations: int
    n_samples: int
    thresholds: dict = field(default_factory=dict)
    line_convention: str = LINE_CONVENTION
    input_digest: str = ""

    def to_json_dict(self) -> dict:
        return asdict(self)


@dataclass
class PEAnalysis:
    certificate: PECertificate
    acs: AutoCovarianceSequence
    spectrum: PowerSpectrum
    block: BlockCovariance


def analyze(ens: LiftedSignalEnsemble, order: int, config: PEConfig | None = None) -> PEAnalysis:
    cfg = config or PEConfig()
    if order > ens.n_channels:
        warnings.warn(f"order {order} exceeds the lifted dimension {ens.n_channels}", OrderWarning, stacklevel=2)
    if cfg.center:
        ens = ens.center()
    acs = autocovariance(ens, cfg.max_lag, cfg.estimator)
    blk = block_covariance(acs, order)
    spec = power_spectrum(acs, cfg.n_freq, cfg.rel_threshold)
    lines = spectral_line_count(spec, cfg.rel_threshold)
    pd_tol = blk.pd_tolerance(cfg.pd_rel_tol)
    is_pe = blk.min_eigenvalue > pd_tol
    consistent = (not is_pe) or lines >= order
    if cfg.check_theorem and not consistent:
        log.warning("positive definite of order %d with only %d spectral lines", order, lines)
    cert = PECertificate(
        n_lifted=ens.n_channels,
        order_tested=int(order),
        pd_margin=blk.min_eigenvalue,
        pd_tol=pd_tol,
        spectral_line_count=lines,
        spectral_rank=aggregated_spectral_rank(spec, cfg.rel_threshold),
        stacked_rank=spectral_rank(spec, cfg.rel_threshold),
        is_pe=bool(is_pe),
        theorem_consistent=bool(consistent),
        n_freq=spec.n_freq,
        n_realizations=ens.n_realizations,
        n_samples=ens.length,
        thresholds={
            "rel_threshold": cfg.rel_threshold,
            "pd_rel_tol": cfg.pd_rel_tol,
            "estimator": cfg.estimator,
            "max_lag": acs.max_lag,
            "centered": bool(ens.centered),
        },
        input_digest=ens.digest(),
    )
    return PEAnalysis(cert, acs, spec, blk)


def pe_certificate(ens: LiftedSignalEnsemble, order: int, config: PEConfig | None = None) -> PECertificate:
    return analyze(ens, order, config).certificate


def filter_response(q, omega: float, n_channels: int) -> np.ndarray:
    """``Q(e^{iw}) = sum_k e^{ikw} q_k`` for a stacked vector ``q = [q_0; ...; q_{N-1}]``."""
    q = np.asarray(q).reshape(-1, n_channels)
    k = np.arange(q.shape[0])
    return (np.exp(1j * k * omega)[:, None] * q).sum(axis=0)


def save_certificate(cert: PECertificate, path) -> None:
    with open(path, "w") as fh:
        json.dump(cert.to_json_dict(), fh, sort_keys=True, indent=1)


def write_periodogram_csv(spec: PowerSpectrum, path) -> None:
    order = np.argsort(spec.omegas, kind="stable")
    P = spec.channel_power
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "channel", "power"])
        for f in order:
            om = f"{spec.omegas[f]:.17g}"
            for c in range(P.shape[1]):
                w.writerow([om, c, f"{P[f, c]:.17g}"])


def write_rank_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_freq_used", "rank"])
        w.writerows(curve)
