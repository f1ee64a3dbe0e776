"""Exact optimal transport between small weighted samples on T^d x R^d.

Ground metric: sqrt(d_T(x, y)^2 + |v - w|^2), with the periodic distance
``d_T`` taken per axis as ``min(|dx|, 2pi - |dx|)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse.csgraph import maximum_bipartite_matching

from .torus import TWO_PI

MAX_ATOMS = 512


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class Atoms:
    """Weighted point masses (w_i, x_i, v_i)."""

    w: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(w.size, -1)
        v = np.asarray(self.v, dtype=float).reshape(w.size, -1)
        if np.any(w < 0):
            raise TransportError("atom weights must be nonnegative")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return self.w.size

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "Atoms":
        """Rows ``w x_1..x_d v_1..v_d``."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        ncol = rows.shape[1]
        if ncol < 3 or (ncol - 1) % 2:
            raise TransportError(f"atom rows need 1 + 2d columns, got {ncol}")
        d = (ncol - 1) // 2
        return cls(rows[:, 0], rows[:, 1 : 1 + d], rows[:, 1 + d :])

    @classmethod
    def load(cls, path) -> "Atoms":
        return cls.from_rows(np.loadtxt(path, ndmin=2))


def torus_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise periodic distances, shape (len(x), len(y))."""
    dx = np.abs(np.mod(x[:, None, :] - y[None, :, :] + np.pi, TWO_PI) - np.pi)
    return np.sqrt(np.sum(dx**2, axis=-1))


def ground_distance(a: Atoms, b: Atoms) -> np.ndarray:
    dxt = torus_distance(a.x, b.x)
    dv = np.sqrt(np.sum((a.v[:, None, :] - b.v[None, :, :]) ** 2, axis=-1))
    return np.sqrt(dxt**2 + dv**2)


def _check(a: Atoms, b: Atoms) -> None:
    if len(a) > MAX_ATOMS or len(b) > MAX_ATOMS:
        raise TransportError(
            f"at most {MAX_ATOMS} atoms per side (got {len(a)}, {len(b)}); subsample first"
        )
    if len(a) == 0 or len(b) == 0:
        raise TransportError("empty sample")
    if a.x.shape[1] != b.x.shape[1] or a.v.shape[1] != b.v.shape[1]:
        raise TransportError("samples live in different dimensions")
    ma, mb = a.w.sum(), b.w.sum()
    if abs(ma - mb) > 1e-12 * max(ma, mb, 1.0):
        raise TransportError(f"total masses differ: {ma!r} vs {mb!r}")


def _uniform_square(a: Atoms, b: Atoms) -> bool:
    return len(a) == len(b) and np.all(a.w == a.w[0]) and np.all(b.w == b.w[0]) and a.w[0] == b.w[0]


def _transport_constraints(wa: np.ndarray, wb: np.ndarray, keep: np.ndarray | None = None):
    na, nb = wa.size, wb.size
    rows = sp.kron(sp.eye(na), np.ones((1, nb)))
    cols = sp.kron(np.ones((1, na)), sp.eye(nb))
    A = sp.vstack([rows, cols]).tocsc()
    if keep is not None:
        A = A[:, keep]
    # one marginal row is redundant
    return A[:-1], np.concatenate([wa, wb])[:-1]


def min_cost_transport(wa: np.ndarray, wb: np.ndarray, cost: np.ndarray) -> float:
    """Optimal value of the balanced transport LP (HiGHS simplex)."""
    A, rhs = _transport_constraints(wa, wb)
    res = linprog(cost.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise TransportError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _feasible(a: Atoms, b: Atoms, allowed: np.ndarray) -> bool:
    if _uniform_square(a, b):
        match = maximum_bipartite_matching(sp.csr_matrix(allowed), perm_type="column")
        return bool(np.all(match >= 0))
    keep = np.flatnonzero(allowed.ravel())
    if keep.size == 0:
        return False
    A, rhs = _transport_constraints(a.w, b.w, keep)
    res = linprog(np.zeros(keep.size), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    return res.status == 0


def bottleneck_distance(a: Atoms, b: Atoms, dist: np.ndarray | None = None) -> float:
    """W_inf: smallest threshold admitting a coupling supported on edges below it."""
    dist = ground_distance(a, b) if dist is None else dist
    levels = np.unique(dist)
    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(a, b, dist <= levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(levels[lo])


def wasserstein_exact(a: Atoms, b: Atoms, p: float) -> float:
    """Exact W_p between two weighted samples of equal total mass (p = inf allowed)."""
    if p < 1:
        raise TransportError(f"p must be >= 1, got {p}")
    _check(a, b)
    dist = ground_distance(a, b)
    if np.isinf(p):
        return bottleneck_distance(a, b, dist)
    cost = dist**p
    if _uniform_square(a, b):
        r, c = linear_sum_assignment(cost)
        total = float(a.w[0] * cost[r, c].sum())
    else:
        total = min_cost_transport(a.w, b.w, cost)
    return max(total, 0.0) ** (1.0 / p)
