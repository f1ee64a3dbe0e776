"""Spectral and grid fields on the periodic box [0, 2*pi)^d.

Conventions used throughout the package:

* The torus carries the normalized (unit-volume) measure ``dm = dx / (2*pi)^d``.
  Every spatial integral ``\\int_T g`` in the package means ``\\int g dm``, i.e. the
  spatial average.
* Fourier coefficients are ``c(xi) = \\int u e^{-i xi.x} dm``; on an ``n^d`` grid the
  discrete analogue is ``fftn(samples) / n^d``.  Parseval then reads
  ``mean(|u|^2) == sum(|c|^2)``.
* Coefficient arrays use the FFT layout (index ``k`` holds wavenumber
  ``fftfreq(n) * n``), so ``|xi_k| <= n/2`` is retained automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft

TWO_PI = 2.0 * np.pi


class NonFiniteFieldError(ValueError):
    """A transform was handed NaN or infinite values."""


class FieldShapeError(ValueError):
    """Raised when fields live on incompatible grids or have the wrong rank."""


def _check_grid(dim: int, n: int) -> None:
    if dim not in (1, 2, 3):
        raise FieldShapeError(f"dim must be 1, 2 or 3, got {dim}")
    if n < 2 or n % 2:
        raise FieldShapeError(f"grid size n must be even and >= 2, got {n}")


@dataclass(frozen=True)
class GridField:
    """Real samples on the uniform lattice x_j = 2*pi*j/n, shape (ncomp, n, ..., n)."""

    dim: int
    n: int
    samples: np.ndarray

    def __post_init__(self):
        _check_grid(self.dim, self.n)
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == self.dim:
            s = s[None]
        if s.shape[1:] != (self.n,) * self.dim:
            raise FieldShapeError(
                f"samples shape {s.shape} does not match dim={self.dim}, n={self.n}"
            )
        object.__setattr__(self, "samples", s)

    @property
    def ncomp(self) -> int:
        return self.samples.shape[0]

    @classmethod
    def from_function(cls, func, dim: int, n: int) -> "GridField":
        """Sample ``func(*coords)`` on the lattice; ``func`` may return a scalar array or a sequence of components."""
        coords = grid_coordinates(dim, n)
        values = func(*coords)
        if isinstance(values, (list, tuple)):
            values = np.stack([np.broadcast_to(v, coords[0].shape) for v in values])
        else:
            values = np.broadcast_to(values, coords[0].shape)
        return cls(dim, n, np.array(values, dtype=float))

    @classmethod
    def zeros(cls, dim: int, n: int, ncomp: int = 1) -> "GridField":
        return cls(dim, n, np.zeros((ncomp,) + (n,) * dim))


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a real field, shape (ncomp, n, ..., n) in FFT layout."""

    dim: int
    n: int
    coeffs: np.ndarray
    solenoidal: bool = field(default=False)

    def __post_init__(self):
        _check_grid(self.dim, self.n)
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == self.dim:
            c = c[None]
        if c.shape[1:] != (self.n,) * self.dim:
            raise FieldShapeError(
                f"coeffs shape {c.shape} does not match dim={self.dim}, n={self.n}"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def replace(self, coeffs: np.ndarray, solenoidal: bool | None = None) -> "SpectralField":
        return SpectralField(
            self.dim, self.n, coeffs, self.solenoidal if solenoidal is None else solenoidal
        )

    @classmethod
    def zeros(cls, dim: int, n: int, ncomp: int | None = None) -> "SpectralField":
        ncomp = dim if ncomp is None else ncomp
        return cls(dim, n, np.zeros((ncomp,) + (n,) * dim, dtype=complex), solenoidal=True)


def grid_coordinates(dim: int, n: int) -> list[np.ndarray]:
    x = TWO_PI * np.arange(n) / n
    return np.meshgrid(*([x] * dim), indexing="ij")


@lru_cache(maxsize=32)
def wavenumbers(dim: int, n: int) -> tuple[np.ndarray, ...]:
    """Integer wavenumber arrays ``xi_k`` broadcast to the full (n,)*dim layout."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    grids = np.meshgrid(*([k] * dim), indexing="ij")
    for g in grids:
        g.setflags(write=False)
    return tuple(grids)


@lru_cache(maxsize=32)
def wavenumber_sq(dim: int, n: int) -> np.ndarray:
    ksq = sum(k**2 for k in wavenumbers(dim, n))
    ksq.setflags(write=False)
    return ksq


@lru_cache(maxsize=32)
def dealias_mask(dim: int, n: int) -> np.ndarray:
    """Two-thirds rule: keep modes with every |xi_k| < n/3 (drops Nyquist too)."""
    mask = np.ones((n,) * dim, dtype=bool)
    for k in wavenumbers(dim, n):
        mask &= np.abs(k) < n / 3.0
    mask.setflags(write=False)
    return mask


def _axes(dim: int) -> tuple[int, ...]:
    return tuple(range(1, dim + 1))


def forward_transform(g: GridField, workers: int | None = None) -> SpectralField:
    if not np.all(np.isfinite(g.samples)):
        raise NonFiniteFieldError("forward_transform: grid samples must be finite")
    c = scipy.fft.fftn(g.samples, axes=_axes(g.dim), workers=workers) / g.n**g.dim
    return SpectralField(g.dim, g.n, c)


def inverse_transform(s: SpectralField, workers: int | None = None) -> GridField:
    if not np.all(np.isfinite(s.coeffs)):
        raise NonFiniteFieldError("inverse_transform: coefficients must be finite")
    vals = scipy.fft.ifftn(s.coeffs * s.n**s.dim, axes=_axes(s.dim), workers=workers)
    return GridField(s.dim, s.n, vals.real)


def leray_project(s: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: u -> u - xi (xi.u) / |xi|^2 for xi != 0."""
    if s.ncomp != s.dim:
        raise FieldShapeError(
            f"leray_project needs a {s.dim}-component vector field, got {s.ncomp} components"
        )
    ks = wavenumbers(s.dim, s.n)
    ksq = wavenumber_sq(s.dim, s.n)
    inv = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv, where=ksq > 0)
    div = sum(k * c for k, c in zip(ks, s.coeffs))
    out = np.stack([c - k * div * inv for k, c in zip(ks, s.coeffs)])
    return s.replace(out, solenoidal=True)


def divergence(s: SpectralField) -> GridField:
    if s.ncomp != s.dim:
        raise FieldShapeError("divergence needs a vector field")
    ks = wavenumbers(s.dim, s.n)
    d = sum(1j * k * c for k, c in zip(ks, s.coeffs))
    return inverse_transform(SpectralField(s.dim, s.n, d))


def gradient(s: SpectralField) -> SpectralField:
    """Spectral gradient of a scalar field (one component per axis)."""
    if s.ncomp != 1:
        raise FieldShapeError("gradient needs a scalar field")
    ks = wavenumbers(s.dim, s.n)
    return SpectralField(s.dim, s.n, np.stack([1j * k * s.coeffs[0] for k in ks]))


def spectral_convolve(kernel: GridField, g: GridField, workers: int | None = None) -> GridField:
    """Torus convolution ``(kernel * g)(x) = \\int kernel(x - y) g(y) dm(y)``.

    Equal to the circular lattice sum ``n^-d sum_c kernel(x - y_c) g(y_c)``, which is
    exact for band-limited inputs. ``g`` may carry several components.
    """
    if kernel.n != g.n or kernel.dim != g.dim:
        raise FieldShapeError("spectral_convolve: kernel and field grids differ")
    if kernel.ncomp != 1:
        raise FieldShapeError("spectral_convolve: kernel must be scalar")
    axes = _axes(g.dim)
    kh = scipy.fft.fftn(kernel.samples, axes=axes, workers=workers) / g.n**g.dim
    gh = scipy.fft.fftn(g.samples, axes=axes, workers=workers)
    out = scipy.fft.ifftn(kh * gh, axes=axes, workers=workers).real
    return GridField(g.dim, g.n, out)


def heat_semigroup_apply(s: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise ValueError(f"heat semigroup time must be >= 0, got {t}")
    return s.replace(s.coeffs * np.exp(-t * wavenumber_sq(s.dim, s.n)))


def mean_mode(s: SpectralField) -> np.ndarray:
    """Spatial mean of each component (the xi = 0 coefficient)."""
    return s.coeffs[(slice(None),) + (0,) * s.dim].real.copy()


def l2_norm_sq(s: SpectralField) -> float:
    """``\\int |u|^2 dm`` by Parseval."""
    return float(np.sum(np.abs(s.coeffs) ** 2))
