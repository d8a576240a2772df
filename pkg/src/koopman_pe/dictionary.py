"""State-inclusive observable dictionaries.

Every dictionary puts the raw state coordinates first, so the state is recovered from a
lifted vector by taking its first ``n_state`` entries.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DimensionError, SizeError

DEFAULT_SIZE_CAP = 10_000


def multi_indices(n_state: int, max_degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree <= max_degree, graded lexicographic.

    Within a degree, tuples are ordered by descending exponent of the first variable
    (``x1**2, x1*x2, ..., x2**2, ...``).
    """
    out = []
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_state), deg):
            a = [0] * n_state
            for i in combo:
                a[i] += 1
            out.append(tuple(a))
    return out


def _state_inclusive_order(indices):
    # degree-1 terms first (these are the state coordinates), then the constant, then the rest
    lin = [a for a in indices if sum(a) == 1]
    const = [a for a in indices if sum(a) == 0]
    rest = [a for a in indices if sum(a) > 1]
    return lin + const + rest


def hermite_table(x, max_degree: int) -> np.ndarray:
    """Probabilists' Hermite values ``He_k(x)`` for k = 0..max_degree.

    Uses the three-term recurrence ``He_{k+1} = x He_k - k He_{k-1}``.
    Returns an array of shape ``(max_degree + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for k in range(1, max_degree):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def monomial_table(x, max_degree: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    for k in range(1, max_degree + 1):
        out[k] = out[k - 1] * x
    return out


@dataclass(frozen=True)
class Dictionary:
    """An ordered list of observables ``psi: R^n -> R^n_lifted``.

    ``basis_kind`` is one of ``"hermite"``, ``"monomial"``, ``"rbf"`` or ``"state"`` (identity).
    Polynomial dictionaries hold their exponent tuples in ``exponents``; RBF dictionaries hold
    ``centers`` and ``bandwidth``.
    """

    n_state: int
    basis_kind: str
    max_degree: int = 1
    exponents: tuple = ()
    centers: tuple = ()
    bandwidth: float = 1.0
    state_inclusive: bool = True

    @property
    def n_lifted(self) -> int:
        if self.basis_kind in ("hermite", "monomial"):
            return len(self.exponents)
        if self.basis_kind == "rbf":
            return self.n_state + len(self.centers)
        return self.n_state

    def labels(self) -> list[str]:
        if self.basis_kind in ("hermite", "monomial"):
            sym = "He" if self.basis_kind == "hermite" else "x^"
            out = []
            for a in self.exponents:
                if sum(a) == 0:
                    out.append("1")
                elif sum(a) == 1:
                    out.append(f"x{a.index(1) + 1}")
                else:
                    out.append("*".join(f"{sym}{k}(x{i + 1})" for i, k in enumerate(a) if k))
            return out
        names = [f"x{i + 1}" for i in range(self.n_state)]
        if self.basis_kind == "rbf":
            names += [f"rbf{j}" for j in range(len(self.centers))]
        return names

    def __call__(self, X) -> np.ndarray:
        return lift(self, X)

    def descriptor(self) -> dict:
        d = {"basis": self.basis_kind, "n_state": self.n_state}
        if self.basis_kind in ("hermite", "monomial"):
            d["max_degree"] = self.max_degree
        elif self.basis_kind == "rbf":
            d["centers"] = [list(map(float, c)) for c in self.centers]
            d["bandwidth"] = float(self.bandwidth)
        return d


def _polynomial(kind, n_state, max_degree, cap):
    if n_state < 1 or max_degree < 1:
        raise ValueError("need n_state >= 1 and max_degree >= 1")
    count = comb(n_state + max_degree, max_degree)
    if count > cap:
        raise SizeError(f"{kind} dictionary would have {count} functions (cap {cap})")
    idx = _state_inclusive_order(multi_indices(n_state, max_degree))
    return Dictionary(n_state, kind, max_degree, tuple(idx))


def hermite_dictionary(n_state: int, max_degree: int, cap: int = DEFAULT_SIZE_CAP) -> Dictionary:
    """Products of probabilists' Hermite polynomials with total degree <= max_degree."""
    return _polynomial("hermite", n_state, max_degree, cap)


def monomial_dictionary(n_state: int, max_degree: int, cap: int = DEFAULT_SIZE_CAP) -> Dictionary:
    return _polynomial("monomial", n_state, max_degree, cap)


def state_dictionary(n_state: int) -> Dictionary:
    return Dictionary(n_state, "state")


def rbf_dictionary(centers, bandwidth: float) -> Dictionary:
    """State coordinates followed by Gaussian bumps ``exp(-|x - c|^2 / (2 h^2))``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return Dictionary(centers.shape[1], "rbf", centers=tuple(map(tuple, centers)),
                      bandwidth=float(bandwidth))


def dictionary_from_descriptor(desc: dict, n_state: int | None = None) -> Dictionary:
    desc = dict(desc)
    kind = desc.pop("basis")
    n = desc.pop("n_state", n_state)
    if n is None:
        raise ValueError("dictionary descriptor needs n_state")
    if kind == "hermite":
        return hermite_dictionary(n, int(desc.get("max_degree", 3)))
    if kind == "monomial":
        return monomial_dictionary(n, int(desc.get("max_degree", 3)))
    if kind == "rbf":
        return rbf_dictionary(desc["centers"], desc["bandwidth"])
    if kind == "state":
        return state_dictionary(n)
    raise ValueError(f"unknown basis {kind!r}")


def lift(d: Dictionary, X) -> np.ndarray:
    """Evaluate the dictionary.

    ``X`` may be a single state (length ``n_state``), giving a vector of length ``n_lifted``,
    or a ``(T, n_state)`` stack, giving an ``(n_lifted, T)`` matrix. The leading
    ``n_state`` entries are copies of the input, bit for bit. NaNs propagate.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xs = X[None, :] if single else X
    if Xs.ndim != 2 or Xs.shape[1] != d.n_state:
        raise DimensionError(f"expected states of length {d.n_state}, got shape {X.shape}")
    n = d.n_state
    out = np.empty((d.n_lifted, Xs.shape[0]))
    out[:n] = Xs.T
    if d.basis_kind in ("hermite", "monomial"):
        table = (hermite_table if d.basis_kind == "hermite" else monomial_table)(Xs.T, d.max_degree)
        for row, a in enumerate(d.exponents[n:], start=n):
            v = np.ones(Xs.shape[0])
            for i, k in enumerate(a):
                if k:
                    v = v * table[k, i]
            out[row] = v
    elif d.basis_kind == "rbf":
        C = np.asarray(d.centers)
        sq = ((Xs[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)
        out[n:] = np.exp(-sq / (2.0 * d.bandwidth**2)).T
    return out[:, 0] if single else out


def lift_trajectory(d: Dictionary, traj) -> np.ndarray:
    """Columnwise lift of a trajectory: returns ``(n_lifted, T)``."""
    if traj.n_state != d.n_state:
        raise DimensionError(f"trajectory has {traj.n_state} states, dictionary expects {d.n_state}")
    return lift(d, traj.states)
