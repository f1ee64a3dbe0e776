"""Heat kernel of the torus T^d = (R / 2piZ)^d and its L^p statistics.

The kernel factorizes over axes, ``Gamma(x, t) = prod_k theta(x_k, t)``, where the
one-dimensional factor has the Fourier form ``(2pi)^-1 sum_k e^{-t k^2 + i k x}`` and
the image form ``(4 pi t)^-1/2 sum_m e^{-(x - 2 pi m)^2 / 4t}`` (Poisson summation).
Integrals here are with respect to Lebesgue measure, so ``\\int Gamma dx = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitting import fit_decay_rate

TWO_PI = 2.0 * np.pi
SWITCH_TIME = 1.0


@dataclass(frozen=True)
class HeatKernelQuery:
    dim: int
    t: float
    x: tuple[float, ...] | None = None
    p: float | None = None
    tol: float = 1e-16

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.t > 0:
            raise ValueError(f"heat kernel needs t > 0, got {self.t}")
        if not 0 < self.tol <= 1e-8:
            raise ValueError(f"tolerance must lie in (0, 1e-8], got {self.tol}")
        if self.p is not None and self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")


def fourier_cutoff(t: float, tol: float) -> int:
    """Smallest K with the dropped Fourier tail 2 sum_{k>K} k e^{-t k^2} below tol."""
    K = 0
    while True:
        k = K + 1
        # geometric majorant of the tail starting at k (also covers the k-weighted derivative series)
        ratio = np.exp(-t * (2 * k + 1))
        if ratio < 1 and 2 * k * np.exp(-t * k * k) / (1 - ratio) ** 2 < tol:
            return K
        K += 1


def image_cutoff(t: float, tol: float) -> int:
    """Smallest M with the image tail beyond |m| > M below tol (x reduced to [-pi, pi))."""
    M = 0
    norm = 1.0 / np.sqrt(4 * np.pi * t)
    while True:
        r = (2 * M + 1) * np.pi
        tail = 2 * norm * (1 + r / t) * np.exp(-r * r / (4 * t)) / (1 - np.exp(-np.pi**2 / t))
        if tail < tol:
            return M
        M += 1


def _reduce(x):
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


def theta_fourier(x, t: float, tol: float = 1e-16, derivative: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    K = fourier_cutoff(t, tol)
    k = np.arange(1, K + 1).reshape((-1,) + (1,) * x.ndim)
    damp = np.exp(-t * k * k)
    if derivative:
        return -2.0 * np.sum(k * damp * np.sin(k * x), axis=0) / TWO_PI
    return (1.0 + 2.0 * np.sum(damp * np.cos(k * x), axis=0)) / TWO_PI


def theta_images(x, t: float, tol: float = 1e-16, derivative: bool = False) -> np.ndarray:
    x = _reduce(x)
    M = image_cutoff(t, tol)
    m = np.arange(-M, M + 1).reshape((-1,) + (1,) * x.ndim)
    y = x - TWO_PI * m
    g = np.exp(-y * y / (4 * t)) / np.sqrt(4 * np.pi * t)
    if derivative:
        return np.sum(-y / (2 * t) * g, axis=0)
    return np.sum(g, axis=0)


def theta(x, t: float, tol: float = 1e-16, derivative: bool = False, representation: str = "auto"):
    if t <= 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    if representation == "auto":
        representation = "images" if t < SWITCH_TIME else "fourier"
    if representation == "fourier":
        return theta_fourier(x, t, tol, derivative)
    if representation == "images":
        return theta_images(x, t, tol, derivative)
    raise ValueError(f"unknown representation {representation!r}")


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got shape {x.shape}")
    return x


def gamma(q: HeatKernelQuery, representation: str = "auto") -> float | np.ndarray:
    """Gamma(x, t); ``q.x`` may be a single point or an array of points (..., dim)."""
    x = _as_points(np.zeros(q.dim) if q.x is None else q.x, q.dim)
    out = np.ones(x.shape[:-1])
    for k in range(q.dim):
        out = out * theta(x[..., k], q.t, q.tol, representation=representation)
    return float(out) if out.ndim == 0 else out


def gamma_gradient(q: HeatKernelQuery, representation: str = "auto") -> np.ndarray:
    x = _as_points(np.zeros(q.dim) if q.x is None else q.x, q.dim)
    vals = [theta(x[..., k], q.t, q.tol, representation=representation) for k in range(q.dim)]
    ders = [theta(x[..., k], q.t, q.tol, True, representation) for k in range(q.dim)]
    comps = []
    for k in range(q.dim):
        c = ders[k]
        for j in range(q.dim):
            if j != k:
                c = c * vals[j]
        comps.append(c)
    return np.stack(comps, axis=-1)


def default_resolution(d: int) -> int:
    return {1: 1024, 2: 256, 3: 64}[d]


def _outer(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def _grid_values(t, d, n, gradient, x1d=None, tol=1e-16):
    """|Gamma - (2pi)^-d| or |grad Gamma| on a tensor grid built from 1-D axes."""
    axes = x1d if x1d is not None else [TWO_PI * np.arange(n) / n] * d
    vals = [theta(a, t, tol) for a in axes]
    if not gradient:
        return np.abs(_outer(vals) - TWO_PI ** (-d))
    ders = [theta(a, t, tol, derivative=True) for a in axes]
    sq = 0.0
    for k in range(d):
        sq = sq + _outer([ders[j] if j == k else vals[j] for j in range(d)]) ** 2
    return np.sqrt(sq)


def _lp(t, p, d, n, gradient):
    if t <= 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    n = default_resolution(d) if n is None else n
    g = _grid_values(t, d, n, gradient)
    h = TWO_PI / n
    if not np.isinf(p):
        return float((np.sum(g**p) * h**d) ** (1.0 / p))
    # one local refinement pass: factor-4 subgrid over the cells around the maximizer
    idx = np.unravel_index(np.argmax(g), g.shape)
    local = [TWO_PI * i / n + np.linspace(-h, h, 9) for i in idx]
    return float(max(g.max(), _grid_values(t, d, n, gradient, x1d=local).max()))


def lp_distance_to_mean(t: float, p: float, d: int, n: int | None = None) -> float:
    """``|| Gamma(., t) - (2pi)^-d ||_{L^p(T^d)}`` by tensor-grid quadrature."""
    return _lp(t, p, d, n, gradient=False)


def grad_lp_norm(t: float, p: float, d: int, n: int | None = None) -> float:
    """``|| grad Gamma(., t) ||_{L^p(T^d)}`` by tensor-grid quadrature."""
    return _lp(t, p, d, n, gradient=True)


def _inv(p):
    return 0.0 if np.isinf(p) else 1.0 / p


def distance_envelope(t: float, p: float, d: int) -> float:
    """``(t^-1 + t^-d/2)^(1-1/p) e^{-t(1-1/p)}`` (the constant set to 1)."""
    a = 1.0 - _inv(p)
    return (1.0 / t + t ** (-d / 2)) ** a * np.exp(-t * a)


def gradient_envelope(t: float, p: float, d: int) -> float:
    a = 1.0 - _inv(p)
    return (t ** (-(1.0 - 0.5 * _inv(p))) + t ** (-0.5 * d * a - 0.5)) * np.exp(-t * a)


@dataclass
class BoundReport:
    d: int
    rows: list[dict]
    sup_ratio: dict
    no_growth: dict
    tail_rate: dict

    @property
    def all_bounded(self) -> bool:
        return all(self.no_growth.values())


def bound_check(
    t_grid, p_list, d: int, n: int | None = None, tail_from: float = 1.0, tail_points: int = 16
) -> BoundReport:
    """Compare measured kernel norms with the envelopes above over a (t, p) grid.

    For every (kind, p) the report holds the sup of measured/envelope (the fitted
    constant), whether the ratio shows no growth (log-log slope of the ratio over the
    last third of the t-grid is <= 0), and ``(rate, r2)`` of the measured norm fitted
    on ``tail_points`` equispaced times in ``[tail_from, max(t_grid)]``.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    t_tail = np.linspace(tail_from, t_grid.max(), tail_points)
    third = max(2, len(t_grid) // 3)
    rows, sup, growth, rates = [], {}, {}, {}
    for kind, measure, env in (
        ("distance", lp_distance_to_mean, distance_envelope),
        ("gradient", grad_lp_norm, gradient_envelope),
    ):
        for p in p_list:
            meas = np.array([measure(t, p, d, n) for t in t_grid])
            envs = np.array([env(t, p, d) for t in t_grid])
            ratio = meas / envs
            for t, m, e, r in zip(t_grid, meas, envs, ratio):
                rows.append(dict(kind=kind, t=t, p=p, measured=m, envelope=e, ratio=r))
            key = (kind, p)
            sup[key] = float(ratio.max())
            slope = np.polyfit(np.log(t_grid[-third:]), np.log(ratio[-third:]), 1)[0]
            growth[key] = bool(np.isfinite(sup[key]) and slope <= 0.0)
            rates[key] = fit_decay_rate(t_tail, [measure(t, p, d, n) for t in t_tail])
    return BoundReport(d, rows, sup, growth, rates)
