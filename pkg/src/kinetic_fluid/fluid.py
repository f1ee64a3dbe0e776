"""Incompressible fluid: 2D Navier-Stokes or 3D Stokes with a particle drag source.

Velocity formulation; pressure never appears because every stage is Leray-projected.
Time stepping is Heun (RK2) in integrating-factor form, so the viscous part is exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

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
    wavenumber_sq,
    wavenumbers,
)


class BlowUpError(RuntimeError):
    """The state became non-finite; ``t`` is the time of the last valid state."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (last valid t={t:g})")
        self.t = t


@dataclass(frozen=True)
class FluidState:
    u: SpectralField
    mu: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"viscosity must be positive, got {self.mu}")
        if self.u.ncomp != self.u.dim:
            raise FieldShapeError("fluid velocity must have dim components")


def compute_drag_source(rho: GridField, j: GridField, u: GridField) -> GridField:
    """Fluid-side drag ``-\\int (u - v) f dv = j - rho u``."""
    if not (rho.n == j.n == u.n and rho.dim == j.dim == u.dim):
        raise FieldShapeError("compute_drag_source: grid mismatch")
    if j.ncomp != u.ncomp:
        raise FieldShapeError("compute_drag_source: momentum and velocity components differ")
    return GridField(u.dim, u.n, j.samples - rho.samples[0] * u.samples)


def nonlinear_term(u: SpectralField, workers: int | None = None) -> SpectralField:
    """Projected, dealiased ``-(u . grad) u``; identically zero in 3D (Stokes)."""
    if u.dim == 3:
        return SpectralField.zeros(u.dim, u.n)
    mask = dealias_mask(u.dim, u.n)
    ks = wavenumbers(u.dim, u.n)
    uh = u.coeffs * mask
    ug = inverse_transform(u.replace(uh), workers).samples
    adv = np.zeros_like(ug)
    for b, k in enumerate(ks):
        db = inverse_transform(SpectralField(u.dim, u.n, 1j * k * uh), workers).samples
        adv += ug[b] * db
    nh = forward_transform(GridField(u.dim, u.n, -adv), workers).coeffs * mask
    return leray_project(SpectralField(u.dim, u.n, nh))


def _rhs(u: SpectralField, source: GridField | None, workers) -> np.ndarray:
    out = nonlinear_term(u, workers).coeffs
    if source is not None:
        sh = forward_transform(source, workers).coeffs * dealias_mask(u.dim, u.n)
        out = out + leray_project(SpectralField(u.dim, u.n, sh)).coeffs
    return out


def cfl_number(u: SpectralField, dt: float) -> float:
    umax = float(np.max(np.abs(inverse_transform(u).samples))) if u.coeffs.size else 0.0
    return dt * umax * u.n / TWO_PI


def heun_update(uh: np.ndarray, k1: np.ndarray, k2: np.ndarray, decay: np.ndarray, dt: float):
    """Integrating-factor Heun combination ``E u + dt/2 (E k1 + k2)``."""
    return decay * uh + 0.5 * dt * (decay * k1 + k2)


def fluid_step(
    state: FluidState,
    source: GridField | None,
    dt: float,
    source_after: GridField | None = None,
    workers: int | None = None,
) -> FluidState:
    """One Heun step with exact viscous integrating factor.

    ``source`` is the forcing at the start of the step; ``source_after`` the forcing at
    the predicted state (defaults to ``source``, i.e. a frozen forcing).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = state.u
    if source is not None and (source.n != u.n or source.dim != u.dim):
        raise FieldShapeError("fluid_step: source grid does not match the fluid grid")
    cfl = cfl_number(u, dt)
    if cfl > 0.5:
        warnings.warn(f"CFL number {cfl:.3f} exceeds 0.5 at t={state.t:g}", RuntimeWarning)

    decay = np.exp(-state.mu * dt * wavenumber_sq(u.dim, u.n))
    try:
        k1 = _rhs(u, source, workers)
        pred = u.replace(decay * (u.coeffs + dt * k1))
        k2 = _rhs(pred, source if source_after is None else source_after, workers)
    except NonFiniteFieldError as exc:
        raise BlowUpError(f"non-finite values inside the step: {exc}", state.t) from exc
    new = heun_update(u.coeffs, k1, k2, decay, dt)
    if not np.all(np.isfinite(new)):
        raise BlowUpError("fluid coefficients became non-finite", state.t)
    return FluidState(u.replace(new, solenoidal=True), state.mu, state.t + dt)


def vorticity(u: SpectralField) -> GridField:
    """Curl of u: scalar ``d1 u2 - d2 u1`` in 2D, three components in 3D."""
    ks = wavenumbers(u.dim, u.n)
    c = u.coeffs
    if u.dim == 2:
        w = 1j * (ks[0] * c[1] - ks[1] * c[0])
        return inverse_transform(SpectralField(2, u.n, w))
    if u.dim == 3:
        w = np.stack(
            [
                1j * (ks[1] * c[2] - ks[2] * c[1]),
                1j * (ks[2] * c[0] - ks[0] * c[2]),
                1j * (ks[0] * c[1] - ks[1] * c[0]),
            ]
        )
        return inverse_transform(SpectralField(3, u.n, w))
    raise FieldShapeError("vorticity is defined for dim 2 or 3")


def taylor_green(n: int, amplitude: float = 1.0) -> SpectralField:
    """``amplitude * (cos x1 sin x2, -sin x1 cos x2)`` on an n x n grid."""
    g = GridField.from_function(
        lambda x, y: (amplitude * np.cos(x) * np.sin(y), -amplitude * np.sin(x) * np.cos(y)),
        2,
        n,
    )
    return leray_project(forward_transform(g))


def random_solenoidal(
    dim: int,
    n: int,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    kmax: int = 4,
    mean: np.ndarray | None = None,
) -> SpectralField:
    """Seeded random divergence-free field with modes |xi|_inf <= kmax.

    The fluctuation is rescaled so that its root-mean-square speed equals
    ``amplitude``; ``mean`` sets the xi = 0 mode.
    """
    ks = wavenumbers(dim, n)
    band = np.ones((n,) * dim, dtype=bool)
    for k in ks:
        band &= np.abs(k) <= min(kmax, n // 3 - 1)
    noise = rng.standard_normal((dim,) + (n,) * dim)
    c = forward_transform(GridField(dim, n, noise)).coeffs * band
    c[(slice(None),) + (0,) * dim] = 0.0
    u = leray_project(SpectralField(dim, n, c))
    rms = np.sqrt(np.sum(np.abs(u.coeffs) ** 2))
    coeffs = u.coeffs * (amplitude / rms if rms > 0 else 0.0)
    if mean is not None:
        coeffs[(slice(None),) + (0,) * dim] = np.asarray(mean, dtype=float)
    return SpectralField(dim, n, coeffs, solenoidal=True)
