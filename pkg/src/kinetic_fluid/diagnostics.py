"""Functionals of a (particles, fluid) snapshot.

All spatial integrals use the unit-volume torus measure, so ``u_c`` is the spatial
mean of ``u`` and ``M v_c + u_c`` is the conserved total momentum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fluid import vorticity
from .kinetic import (
    CICStencil,
    CommunicationWeight,
    ParticleEnsemble,
    Toggles,
    alignment_fields,
    deposit_moments,
)
from .torus import GridField, SpectralField, inverse_transform, mean_mode, wavenumber_sq
from .transport import Atoms, wasserstein_exact

PAIR_THRESHOLD = 2000


class UndefinedCenterError(ValueError):
    pass


def centers(ens: ParticleEnsemble, u: SpectralField) -> tuple[np.ndarray, np.ndarray, float]:
    """Mass-weighted particle velocity v_c, fluid mean u_c, and mass M."""
    M = ens.mass
    if M <= 0:
        raise UndefinedCenterError("particle mass is zero; v_c is undefined")
    return ens.w @ ens.v / M, mean_mode(u), M


def v_infinity(v_c0, u_c0, M0: float) -> np.ndarray:
    """Asymptotic common velocity (M0 v_c(0) + u_c(0)) / (1 + M0)."""
    if M0 < 0:
        raise ValueError("M0 must be nonnegative")
    return (M0 * np.asarray(v_c0, dtype=float) + np.asarray(u_c0, dtype=float)) / (1.0 + M0)


def fluid_fluctuation_sq(u: SpectralField) -> float:
    """``\\int |u - u_c|^2`` via Parseval over the nonzero modes."""
    c = u.coeffs.copy()
    c[(slice(None),) + (0,) * u.dim] = 0.0
    return float(np.sum(np.abs(c) ** 2))


def lyapunov(ens: ParticleEnsemble, u: SpectralField, v_c, u_c, M0: float) -> float:
    kinetic = 0.5 * float(ens.w @ np.sum((ens.v - v_c) ** 2, axis=1)) if ens.N else 0.0
    gap = np.asarray(u_c, dtype=float) - np.asarray(v_c, dtype=float)
    return kinetic + 0.5 * fluid_fluctuation_sq(u) + float(gap @ gap) / (2.0 * (1.0 + M0))


def enstrophy(u: SpectralField) -> float:
    """``\\int |grad u|^2``."""
    return float(np.sum(wavenumber_sq(u.dim, u.n) * np.abs(u.coeffs) ** 2))


def pair_dissipation_bruteforce(ens: ParticleEnsemble, psi: CommunicationWeight, block: int = 256) -> float:
    """``1/2 sum_ij w_i w_j psi(x_i - x_j) |v_i - v_j|^2`` summed pair by pair (O(N^2))."""
    total = 0.0
    for lo in range(0, ens.N, block):
        sl = slice(lo, lo + block)
        k = psi(ens.x[sl, None, :] - ens.x[None, :, :])
        dv2 = np.sum((ens.v[sl, None, :] - ens.v[None, :, :]) ** 2, axis=-1)
        total += float(ens.w[sl] @ (k * dv2) @ ens.w)
    return 0.5 * total


def _spread(a: np.ndarray, v: np.ndarray, v2: np.ndarray) -> float:
    # sum_ij a_i a_j |v_i - v_j|^2 = 2 (sum a)(sum a|v|^2) - 2 |sum a v|^2
    s = a @ v
    return 2.0 * float(a.sum() * (a @ v2) - s @ s)


def pair_dissipation_direct(ens: ParticleEnsemble, psi: CommunicationWeight) -> float:
    """Exact pair sum in O(N): cos(x_i - x_j) = cos x_i cos x_j + sin x_i sin x_j splits psi."""
    v2 = np.sum(ens.v**2, axis=1)
    total = psi.kappa0 * _spread(ens.w, ens.v, v2)
    if psi.kappa1:
        for k in range(ens.dim):
            total += psi.kappa1 * (
                _spread(ens.w * np.cos(ens.x[:, k]), ens.v, v2) + _spread(ens.w * np.sin(ens.x[:, k]), ens.v, v2)
            )
    return 0.5 * total


def pair_dissipation_grid(ens: ParticleEnsemble, psi: CommunicationWeight, n: int) -> float:
    """Same pair sum through grid convolutions with the solver's CIC stencil."""
    st = CICStencil(ens.x, n)
    rho, j = deposit_moments(ens, n, st)
    e2 = GridField(ens.dim, n, st.deposit(ens.w * np.sum(ens.v**2, axis=1)) * float(n**ens.dim))
    A, B = alignment_fields(rho, j, psi)
    _, C = alignment_fields(e2, j, psi)
    v2 = np.sum(ens.v**2, axis=1)
    per = v2 * st.gather(B.samples)[:, 0] - 2 * np.sum(ens.v * st.gather(A.samples), axis=1)
    per += st.gather(C.samples)[:, 0]
    return 0.5 * float(ens.w @ per)


def dissipation(
    ens: ParticleEnsemble,
    u: SpectralField,
    psi: CommunicationWeight,
    mu: float = 1.0,
    toggles: Toggles = Toggles(),
    pair_threshold: int = PAIR_THRESHOLD,
) -> float:
    """D = drag energy + mu * enstrophy + psi-weighted pair spread; switched-off mechanisms drop out."""
    D = 0.0 if toggles.freeze_fluid else mu * enstrophy(u)
    if ens.N == 0:
        return D
    if toggles.drag:
        ui = CICStencil(ens.x, u.n).gather(inverse_transform(u).samples)
        D += float(ens.w @ np.sum((ui - ens.v) ** 2, axis=1))
    if toggles.alignment:
        if ens.N <= pair_threshold:
            D += pair_dissipation_direct(ens, psi)
        else:
            D += pair_dissipation_grid(ens, psi, u.n)
    return D


def total_energy(ens: ParticleEnsemble, u: SpectralField) -> float:
    kinetic = 0.5 * float(ens.w @ np.sum(ens.v**2, axis=1)) if ens.N else 0.0
    return kinetic + 0.5 * float(np.sum(np.abs(u.coeffs) ** 2))


def weighted_moment(ens: ParticleEnsemble, p: float, center) -> float:
    """``(sum_i w_i |v_i - center|^p)^(1/p)``, scaled by the largest distance for stability."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if ens.N == 0:
        return 0.0
    r = np.sqrt(np.sum((ens.v - np.asarray(center, dtype=float)) ** 2, axis=1))
    r = r[ens.w > 0]
    w = ens.w[ens.w > 0]
    rmax = float(r.max()) if r.size else 0.0
    if rmax == 0.0:
        return 0.0
    if np.isinf(p):
        return rmax
    return rmax * float(w @ (r / rmax) ** p) ** (1.0 / p)


def support_radius(ens: ParticleEnsemble, vinf) -> float:
    if ens.N == 0:
        raise ValueError("support radius of an empty ensemble")
    return float(np.max(np.sqrt(np.sum((ens.v - np.asarray(vinf, dtype=float)) ** 2, axis=1))))


def grid_lp_norm(g: GridField, p: float) -> float:
    """L^p norm of the pointwise magnitude under the unit-volume measure."""
    mag = np.sqrt(np.sum(g.samples**2, axis=0))
    if np.isinf(p):
        return float(mag.max())
    return float(np.mean(mag**p) ** (1.0 / p))


def drag_field(ens: ParticleEnsemble, u: SpectralField) -> GridField:
    """``rho u - j``, the negated fluid-side drag source."""
    rho, j = deposit_moments(ens, u.n)
    ug = inverse_transform(u)
    return GridField(u.dim, u.n, rho.samples[0] * ug.samples - j.samples)


def drag_norm(ens: ParticleEnsemble, u: SpectralField, p: float) -> float:
    if p not in (2, np.inf):
        raise ValueError("drag_norm supports p = 2 or p = inf")
    return grid_lp_norm(drag_field(ens, u), p)


def vorticity_norm(u: SpectralField, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return grid_lp_norm(vorticity(u), p)


def u_minus_mean_linf(u: SpectralField) -> float:
    g = inverse_transform(u).samples
    dev = g - mean_mode(u).reshape((-1,) + (1,) * u.dim)
    return float(np.max(np.sqrt(np.sum(dev**2, axis=0))))


def wasserstein_bound(ens: ParticleEnsemble, vinf, p: float) -> float:
    """Cost of the coupling that keeps x and moves v to vinf: an upper bound on W_p(f, rho_f x delta_vinf)."""
    return weighted_moment(ens, p, vinf)


def monokinetic_pair(ens: ParticleEnsemble, vinf, size: int, rng: np.random.Generator):
    """Equal-weight subsample of f and its monokinetic image (same x, v = vinf), each of mass 1."""
    size = min(size, ens.N)
    p = ens.w / ens.w.sum()
    idx = rng.choice(ens.N, size=size, replace=False, p=p if np.any(p != p[0]) else None)
    w = np.full(size, 1.0 / size)
    a = Atoms(w, ens.x[idx], ens.v[idx])
    b = Atoms(w, ens.x[idx], np.broadcast_to(np.asarray(vinf, dtype=float), (size, ens.dim)))
    return a, b


def subsample_w1(ens: ParticleEnsemble, vinf, size: int, rng: np.random.Generator) -> tuple[float, float]:
    """(exact W_1, coupling bound) on a matched subsample."""
    a, b = monokinetic_pair(ens, vinf, size, rng)
    sub = ParticleEnsemble(a.x, a.v, a.w)
    return wasserstein_exact(a, b, 1), wasserstein_bound(sub, vinf, 1)


def fq_histogram_norm(ens: ParticleEnsemble, q: float, bins: int = 16, v_box=None) -> float:
    """Histogram estimate of ``(\\int f^q dx dv)^(1/q)`` on bins^d spatial x bins^d velocity cells.

    Diagnostic grade only: biased by the bandwidth. ``v_box`` is ``(lo, hi)`` per axis;
    by default the bounding box of the velocities.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if ens.N == 0 or ens.mass == 0:
        return 0.0
    d = ens.dim
    if v_box is None:
        lo, hi = ens.v.min(axis=0), ens.v.max(axis=0)
        pad = 1e-9 * np.maximum(hi - lo, 1e-300) + 1e-300
        lo, hi = lo - pad, hi + pad
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (d,)) for b in v_box)
    width = hi - lo
    xi = np.minimum((ens.x * (bins / (2 * np.pi))).astype(np.int64), bins - 1)
    vi = np.clip(((ens.v - lo) / width * bins).astype(np.int64), 0, bins - 1)
    cell = np.ravel_multi_index(tuple(np.concatenate([xi, vi], axis=1).T), (bins,) * (2 * d))
    _, inverse = np.unique(cell, return_inverse=True)
    mass = np.bincount(inverse.reshape(-1), weights=ens.w)
    vol = float(np.prod(width / bins)) / bins**d
    if q == 1:
        return float(mass.sum())
    return float(np.sum(mass**q) ** (1.0 / q) * vol ** ((1.0 - q) / q))


def max_cell_density(ens: ParticleEnsemble, n: int) -> float:
    if ens.N == 0:
        return 0.0
    rho, _ = deposit_moments(ens, n)
    return float(rho.samples.max())


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    momentum: np.ndarray
    energy: float
    v_c: np.ndarray
    u_c: np.ndarray
    lyapunov: float
    dissipation: float
    support_radius: float
    drag_l2: float
    drag_linf: float
    vorticity_l2: float
    u_minus_mean_linf: float
    max_cell_density: float
    moments: dict = field(default_factory=dict)
    w_bound: dict = field(default_factory=dict)
    fq: dict = field(default_factory=dict)
    w1_exact: float = float("nan")
    w1_bound_sub: float = float("nan")

    @property
    def gap(self) -> float:
        return float(np.linalg.norm(self.u_c - self.v_c))

    def as_row(self) -> dict:
        row = {"t": self.t, "mass": self.mass}
        for k, val in enumerate(self.momentum):
            row[f"momentum_{k}"] = val
        row.update(energy=self.energy, lyapunov=self.lyapunov, dissipation=self.dissipation)
        for k, val in enumerate(self.v_c):
            row[f"v_c_{k}"] = val
        for k, val in enumerate(self.u_c):
            row[f"u_c_{k}"] = val
        row["uc_vc_gap"] = self.gap
        row["support_radius"] = self.support_radius
        for p, val in self.moments.items():
            row[f"moment_p{_fmt(p)}"] = val
        row.update(
            drag_l2=self.drag_l2,
            drag_linf=self.drag_linf,
            vorticity_l2=self.vorticity_l2,
            u_minus_mean_linf=self.u_minus_mean_linf,
        )
        for p, val in self.w_bound.items():
            row[f"w_bound_p{_fmt(p)}"] = val
        row["w1_exact"] = self.w1_exact
        row["w1_bound_sub"] = self.w1_bound_sub
        for q, val in self.fq.items():
            row[f"fq_q{_fmt(q)}"] = val
        row["max_cell_density"] = self.max_cell_density
        return row


def _fmt(p) -> str:
    return "inf" if np.isinf(p) else f"{p:g}"


def snapshot(
    t: float,
    ens: ParticleEnsemble,
    u: SpectralField,
    psi: CommunicationWeight,
    M0: float,
    vinf,
    *,
    mu: float = 1.0,
    toggles: Toggles = Toggles(),
    p_list=(2, 8, 32, 128),
    q_list=(),
    histogram_bins: int = 16,
    pair_threshold: int = PAIR_THRESHOLD,
    w1_sample: tuple[int, np.random.Generator] | None = None,
) -> DiagnosticsRecord:
    """Evaluate every monitored functional on one snapshot."""
    nan = float("nan")
    u_c = mean_mode(u)
    if ens.N and ens.mass > 0:
        v_c, _, M = centers(ens, u)
        sr = support_radius(ens, vinf)
        moments = {p: weighted_moment(ens, p, v_c) for p in p_list}
        wb = {p: wasserstein_bound(ens, vinf, p) for p in p_list}
        fq = {q: fq_histogram_norm(ens, q, histogram_bins) for q in q_list}
    else:
        v_c, M, sr = np.full(u.dim, nan), 0.0, nan
        moments = {p: nan for p in p_list}
        wb = {p: nan for p in p_list}
        fq = {q: nan for q in q_list}
    momentum = (ens.w @ ens.v if ens.N else np.zeros(u.dim)) + u_c
    L = lyapunov(ens, u, v_c, u_c, M0) if ens.N else 0.5 * fluid_fluctuation_sq(u)
    rec = DiagnosticsRecord(
        t=t,
        mass=M,
        momentum=momentum,
        energy=total_energy(ens, u),
        v_c=v_c,
        u_c=u_c,
        lyapunov=L,
        dissipation=dissipation(ens, u, psi, mu, toggles, pair_threshold),
        support_radius=sr,
        drag_l2=drag_norm(ens, u, 2) if ens.N else 0.0,
        drag_linf=drag_norm(ens, u, np.inf) if ens.N else 0.0,
        vorticity_l2=vorticity_norm(u, 2),
        u_minus_mean_linf=u_minus_mean_linf(u),
        max_cell_density=max_cell_density(ens, u.n),
        moments=moments,
        w_bound=wb,
        fq=fq,
    )
    if w1_sample is not None and ens.N:
        size, rng = w1_sample
        rec.w1_exact, rec.w1_bound_sub = subsample_w1(ens, vinf, size, rng)
    return rec
