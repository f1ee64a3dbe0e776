"""Weighted-particle solver for the kinetic Cucker-Smale equation with fluid drag.

Particles follow the characteristics ``x' = v``, ``v' = A(x) - v B(x) + u(x) - v`` with
``A = psi * (rho u_f)`` and ``B = psi * rho`` computed on the fluid grid. Deposition and
interpolation share one cloud-in-cell stencil, which makes them exact adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import product

import numpy as np

from .fluid import BlowUpError, FluidState, heun_update, nonlinear_term
from .torus import (
    TWO_PI,
    FieldShapeError,
    GridField,
    NonFiniteFieldError,
    SpectralField,
    dealias_mask,
    forward_transform,
    inverse_transform,
    leray_project,
    spectral_convolve,
    wavenumber_sq,
)


@dataclass(frozen=True)
class CommunicationWeight:
    """psi(x) = kappa0 + kappa1 * sum_k cos(x_k): even, smooth, band-limited."""

    kappa0: float = 1.0
    kappa1: float = 0.0

    def psi_min(self, dim: int) -> float:
        return self.kappa0 - dim * abs(self.kappa1)

    def psi_max(self, dim: int) -> float:
        return self.kappa0 + dim * abs(self.kappa1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at displacements of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        return self.kappa0 + self.kappa1 * np.cos(x).sum(axis=-1)

    def grid(self, dim: int, n: int) -> GridField:
        return GridField(dim, n, _psi_samples(self.kappa0, self.kappa1, dim, n))


@lru_cache(maxsize=16)
def _psi_samples(kappa0: float, kappa1: float, dim: int, n: int) -> np.ndarray:
    c = np.cos(TWO_PI * np.arange(n) / n)
    out = np.full((n,) * dim, kappa0, dtype=float)
    for axis in range(dim):
        shape = [1] * dim
        shape[axis] = n
        out = out + kappa1 * c.reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted particles: positions (N, d) in [0, 2pi)^d, velocities (N, d), weights (N,)."""

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if x.shape != v.shape or x.shape[0] != w.shape[0]:
            raise FieldShapeError(
                f"inconsistent particle arrays: x{x.shape}, v{v.shape}, w{w.shape}"
            )
        if np.any(w < 0):
            raise ValueError("particle weights must be nonnegative")
        if not np.all(np.isfinite(v)):
            raise ValueError("particle velocities must be finite")
        object.__setattr__(self, "x", wrap_positions(x))
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def mass(self) -> float:
        return float(self.w.sum())

    @classmethod
    def _trusted(cls, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> "ParticleEnsemble":
        """Build without re-validating arrays the stepper already produced."""
        ens = cls.__new__(cls)
        object.__setattr__(ens, "x", x)
        object.__setattr__(ens, "v", v)
        object.__setattr__(ens, "w", w)
        return ens

    @classmethod
    def empty(cls, dim: int) -> "ParticleEnsemble":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0))


def wrap_positions(x: np.ndarray) -> np.ndarray:
    x = np.mod(x, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    x[x >= TWO_PI] = 0.0
    return x


def sample_ensemble(
    dim: int,
    N: int,
    M0: float,
    v_mean,
    v_std: float,
    rng: np.random.Generator,
    x_perturbation: float = 0.0,
) -> ParticleEnsemble:
    """i.i.d. uniform positions (optionally perturbed by a cosine bump), Gaussian velocities, equal weights."""
    x = rng.uniform(0.0, TWO_PI, size=(N, dim))
    if x_perturbation:
        x = x + x_perturbation * np.sin(x)
    v = np.asarray(v_mean, dtype=float) + v_std * rng.standard_normal((N, dim))
    w = np.full(N, M0 / N) if N else np.zeros(0)
    return ParticleEnsemble(x, v, w)


class CICStencil:
    """Cloud-in-cell (multilinear) weights of a set of positions on an n^d lattice."""

    def __init__(self, x: np.ndarray, n: int):
        x = np.atleast_2d(x)
        self.n = n
        self.dim = x.shape[1]
        s = x * (n / TWO_PI)
        base = np.floor(s)
        frac = s - base
        base = base.astype(np.int64) % n
        idx, wts = [], []
        for corner in product((0, 1), repeat=self.dim):
            ii = np.zeros(x.shape[0], dtype=np.int64)
            ww = np.ones(x.shape[0])
            for axis, c in enumerate(corner):
                ii = ii * n + (base[:, axis] + c) % n
                ww = ww * (frac[:, axis] if c else 1.0 - frac[:, axis])
            idx.append(ii)
            wts.append(ww)
        self.idx = np.stack(idx)
        self.wts = np.stack(wts)

    def deposit(self, values: np.ndarray) -> np.ndarray:
        """Sum particle values into lattice nodes; returns (ncomp, n, ..., n) node totals."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        size = self.n**self.dim
        flat = self.idx.ravel()
        out = np.empty((values.shape[1], size))
        for c in range(values.shape[1]):
            out[c] = np.bincount(flat, weights=(self.wts * values[:, c]).ravel(), minlength=size)
        return out.reshape((values.shape[1],) + (self.n,) * self.dim)

    def gather(self, samples: np.ndarray) -> np.ndarray:
        """Interpolate grid samples (ncomp, n, ..., n) to the positions; returns (N, ncomp)."""
        flat = samples.reshape(samples.shape[0], -1)
        return np.einsum("kp,ckp->pc", self.wts, flat[:, self.idx])


def deposit_moments(ens: ParticleEnsemble, n: int, stencil: CICStencil | None = None):
    """Particle density rho and momentum density j = rho u_f on the grid.

    Densities are with respect to the unit-volume torus measure, so
    ``rho.mean() == sum(w)`` and ``j.mean(axis) == sum(w v)``.
    """
    dim = ens.dim
    if n % 2:
        raise FieldShapeError(f"grid size must be even, got {n}")
    if ens.N == 0:
        return GridField.zeros(dim, n, 1), GridField.zeros(dim, n, dim)
    st = stencil if stencil is not None else CICStencil(ens.x, n)
    scale = float(n**dim)
    rho = st.deposit(ens.w) * scale
    j = st.deposit(ens.w[:, None] * ens.v) * scale
    return GridField(dim, n, rho), GridField(dim, n, j)


def interpolate_field(g: GridField, xs: np.ndarray, stencil: CICStencil | None = None) -> np.ndarray:
    """CIC interpolation of g at positions xs; returns (N, ncomp)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] == 0:
        return np.zeros((0, g.ncomp))
    st = stencil if stencil is not None else CICStencil(wrap_positions(xs), g.n)
    return st.gather(g.samples)


def alignment_fields(rho: GridField, j: GridField, psi: CommunicationWeight, workers=None):
    """A = psi * j and B = psi * rho; the alignment force is A(x) - v B(x)."""
    kernel = psi.grid(rho.dim, rho.n)
    return spectral_convolve(kernel, j, workers), spectral_convolve(kernel, rho, workers)


def particle_rhs(
    ens: ParticleEnsemble,
    A: GridField | None,
    B: GridField | None,
    u: GridField | None,
    stencil: CICStencil | None = None,
) -> np.ndarray:
    """Accelerations ``A(x_i) - v_i B(x_i) + u(x_i) - v_i``; a ``None`` field switches its term off."""
    if ens.N == 0:
        return np.zeros((0, ens.dim))
    n = next((g.n for g in (A, B, u) if g is not None), None)
    if n is None:
        return np.zeros_like(ens.v)
    st = stencil if stencil is not None else CICStencil(ens.x, n)
    acc = np.zeros_like(ens.v)
    if A is not None and B is not None:
        acc += st.gather(A.samples) - ens.v * st.gather(B.samples)
    if u is not None:
        acc += st.gather(u.samples) - ens.v
    return acc


@dataclass(frozen=True)
class Toggles:
    drag: bool = True
    alignment: bool = True
    freeze_fluid: bool = False


def _coupled_rates(x, v, w, fluid_u: SpectralField, psi, toggles: Toggles, workers):
    """Particle accelerations and fluid rhs coefficients at one Heun stage."""
    dim, n = fluid_u.dim, fluid_u.n
    acc = np.zeros_like(v)
    fluid_rhs = None if toggles.freeze_fluid else nonlinear_term(fluid_u, workers).coeffs
    if x.shape[0] == 0 or not (toggles.drag or toggles.alignment):
        return acc, fluid_rhs
    st = CICStencil(x, n)
    rho, j = deposit_moments(ParticleEnsemble._trusted(x, v, w), n, st)
    if toggles.alignment:
        A, B = alignment_fields(rho, j, psi, workers)
        acc += st.gather(A.samples) - v * st.gather(B.samples)
    if toggles.drag:
        ug = inverse_transform(fluid_u, workers)
        acc += st.gather(ug.samples) - v
        if fluid_rhs is not None:
            src = GridField(dim, n, j.samples - rho.samples[0] * ug.samples)
            sh = forward_transform(src, workers).coeffs * dealias_mask(dim, n)
            fluid_rhs = fluid_rhs + leray_project(SpectralField(dim, n, sh)).coeffs
    return acc, fluid_rhs


def step_coupled(
    ens: ParticleEnsemble,
    fluid: FluidState,
    psi: CommunicationWeight,
    dt: float,
    toggles: Toggles = Toggles(),
    workers: int | None = None,
) -> tuple[ParticleEnsemble, FluidState]:
    """Advance particles and fluid together by one Heun step.

    Both phases share the deposited sources of each stage, so the momentum they
    exchange through drag cancels stage by stage.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if ens.N and ens.dim != fluid.u.dim:
        raise FieldShapeError("particle and fluid dimensions differ")
    x, v, w = ens.x, ens.v, ens.w
    uh = fluid.u.coeffs
    decay = None if toggles.freeze_fluid else np.exp(-fluid.mu * dt * wavenumber_sq(fluid.u.dim, fluid.u.n))

    try:
        a1, k1 = _coupled_rates(x, v, w, fluid.u, psi, toggles, workers)
        x_pred = wrap_positions(x + dt * v)
        v_pred = v + dt * a1
        u_pred = fluid.u if decay is None else fluid.u.replace(decay * (uh + dt * k1))
        a2, k2 = _coupled_rates(x_pred, v_pred, w, u_pred, psi, toggles, workers)
    except NonFiniteFieldError as exc:
        raise BlowUpError(f"non-finite values inside the step: {exc}", fluid.t) from exc

    x_new = wrap_positions(x + 0.5 * dt * (v + v_pred))
    v_new = v + 0.5 * dt * (a1 + a2)
    t_new = fluid.t + dt
    if not np.all(np.isfinite(v_new)) or not np.all(np.isfinite(x_new)):
        raise BlowUpError("particle state became non-finite", fluid.t)
    if decay is None:
        fluid_new = replace(fluid, t=t_new)
    else:
        u_new = heun_update(uh, k1, k2, decay, dt)
        if not np.all(np.isfinite(u_new)):
            raise BlowUpError("fluid coefficients became non-finite", fluid.t)
        fluid_new = FluidState(fluid.u.replace(u_new, solenoidal=True), fluid.mu, t_new)
    return ParticleEnsemble._trusted(x_new, v_new, w), fluid_new
