"""
Spectral core: torus grids, the continuum-normalized discrete Fourier
transform, diagonal Fourier multipliers and dealiased products.

Transform convention::

    u_hat(xi) = int u(x) exp(-i xi.x) dx      ~  (L/n)^d * fftn(u)
    u(x)      = (2 pi)^-d int u_hat exp(i xi.x) d xi  ~  (n/L)^d * ifftn(u_hat)

so that the (2 pi)^-d factors of the whole-space Fourier equations carry over
unchanged. Coefficient arrays are kept in numpy FFT ordering along the last
``d`` axes; any leading axes (species, vector components) are batch axes.

Norm reductions in this package use ``numpy.max`` / ``numpy.sum`` over the
C-ordered flattened array, which is a fixed, deterministic order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by the NLP_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("NLP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the torus [0, L)^d with n points per axis.

    Frequencies are xi = 2 pi k / L with k in {-n/2, ..., n/2 - 1}.
    """

    d: int
    n: int
    period: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def dxi(self) -> float:
        """Frequency lattice spacing 2 pi / L."""
        return 2 * np.pi / self.period

    @property
    def cell_volume(self) -> float:
        """Physical quadrature weight (L/n)^d."""
        return self.dx**self.d

    @property
    def freq_cell_volume(self) -> float:
        """Frequency lattice cell volume (2 pi / L)^d."""
        return self.dxi**self.d

    @cached_property
    def index(self) -> np.ndarray:
        """Integer lattice indices along one axis, FFT ordering."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    def index_mesh(self) -> list:
        """Broadcastable integer index arrays, one per axis."""
        return _sparse_mesh(self.index, self.d)

    @cached_property
    def xi(self) -> list:
        """Broadcastable frequency arrays xi_j = 2 pi k_j / L."""
        k = 2 * np.pi * self.index.astype(float) / self.period
        return _sparse_mesh(k, self.d)

    @cached_property
    def xi2(self) -> np.ndarray:
        """|xi|^2 on the full lattice."""
        out = np.zeros(self.shape)
        for c in self.xi:
            out = out + c**2
        return out

    @cached_property
    def x(self) -> list:
        """Broadcastable physical coordinates in [0, L)."""
        return _sparse_mesh(np.arange(self.n) * self.dx, self.d)

    @cached_property
    def x_centered(self) -> list:
        """Signed offset to the nearest periodic image of the origin, per axis."""
        s = np.arange(self.n) * self.dx
        s = np.where(s >= self.period / 2, s - self.period, s)
        return _sparse_mesh(s, self.d)

    @cached_property
    def radius(self) -> np.ndarray:
        """|x|_per: distance to the nearest periodic image of the origin."""
        r2 = np.zeros(self.shape)
        for c in self.x_centered:
            r2 = r2 + c**2
        return np.sqrt(r2)

    def dealias_mask(self, cutoff: Optional[int] = None) -> np.ndarray:
        """Boolean mask keeping modes with every |k_j| <= cutoff (default n//3)."""
        if cutoff is None:
            cutoff = self.n // 3
        keep = np.abs(self.index) <= cutoff
        mask = np.ones(self.shape, dtype=bool)
        for ax in range(self.d):
            sl = [None] * self.d
            sl[ax] = slice(None)
            mask = mask & keep[tuple(sl)]
        return mask

    def halfspace_mask(self) -> np.ndarray:
        """Boolean mask of the open half-space k_1 >= 1."""
        sl = [None] * self.d
        sl[0] = slice(None)
        return np.broadcast_to((self.index > 0)[tuple(sl)], self.shape).copy()

    def lattice_position(self, k) -> tuple:
        """Array position of integer lattice index k (tuple of ints)."""
        if len(k) != self.d:
            raise ValueError("lattice index has wrong length")
        out = []
        for kj in k:
            if not -self.n // 2 <= kj < self.n // 2:
                raise ValueError(f"lattice index {k} outside the grid")
            out.append(int(kj) % self.n)
        return tuple(out)

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "period": self.period}


def _sparse_mesh(v: np.ndarray, d: int) -> list:
    out = []
    for ax in range(d):
        shape = [1] * d
        shape[ax] = len(v)
        out.append(v.reshape(shape))
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of an m-component field on a torus grid.

    ``coeffs`` has shape ``(m, ...) + grid.shape``; the canonical
    representation is frequency space.
    """

    grid: TorusGrid
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim < self.grid.d + 1 or c.shape[-self.grid.d:] != self.grid.shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid {self.grid.shape}"
            )
        if c.dtype != np.complex128:
            c = c.astype(np.complex128)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self) -> int:
        return self.coeffs.shape[0]

    def replace(self, coeffs=None, time=None) -> "SpectralField":
        return SpectralField(
            self.grid,
            self.coeffs if coeffs is None else coeffs,
            self.time if time is None else time,
        )

    def physical(self) -> np.ndarray:
        return inverse_transform(self)

    def zero_mode(self) -> np.ndarray:
        """Coefficient at xi = 0 for each leading component (the mass)."""
        return self.coeffs[(Ellipsis,) + (0,) * self.grid.d]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def hermitian_defect(self) -> float:
        """max |u_hat(-xi) - conj(u_hat(xi))| / max |u_hat|."""
        c = self.coeffs
        flipped = c
        for ax in range(c.ndim - self.grid.d, c.ndim):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        scale = np.max(np.abs(c))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(flipped - np.conj(c))) / scale)


def forward_transform(samples, grid: TorusGrid) -> SpectralField:
    """Transform physical samples (leading batch axes allowed) to a SpectralField.

    A bare array of shape ``grid.shape`` is treated as a single species.
    """
    u = np.asarray(samples)
    if u.shape == grid.shape:
        u = u[np.newaxis]
    if u.ndim < grid.d + 1 or u.shape[-grid.d:] != grid.shape:
        raise ValueError(f"sample shape {u.shape} does not match grid {grid.shape}")
    axes = tuple(range(u.ndim - grid.d, u.ndim))
    c = scipy.fft.fftn(u, axes=axes, workers=fft_workers()) * grid.cell_volume
    return SpectralField(grid, c)


def inverse_transform(f: SpectralField) -> np.ndarray:
    grid = f.grid
    axes = tuple(range(f.coeffs.ndim - grid.d, f.coeffs.ndim))
    return scipy.fft.ifftn(f.coeffs, axes=axes, workers=fft_workers()) / grid.cell_volume


def _to_physical(c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    axes = tuple(range(c.ndim - grid.d, c.ndim))
    return scipy.fft.ifftn(c, axes=axes, workers=fft_workers()) / grid.cell_volume


def _to_spectral(u: np.ndarray, grid: TorusGrid) -> np.ndarray:
    axes = tuple(range(u.ndim - grid.d, u.ndim))
    return scipy.fft.fftn(u, axes=axes, workers=fft_workers()) * grid.cell_volume


SymbolLike = Union[np.ndarray, Callable[[TorusGrid], np.ndarray]]


@dataclass(frozen=True)
class MultiplierSpec:
    """A diagonal Fourier multiplier.

    ``symbol`` is either an array broadcastable to ``(..., ) + grid.shape`` or a
    callable ``grid -> array``. A vector symbol carries its component axis
    immediately before the lattice axes. ``zero_mode`` replaces the symbol at
    xi = 0 (None keeps the symbol's own value).
    """

    symbol: SymbolLike
    zero_mode: Optional[complex] = None
    name: str = ""

    def evaluate(self, grid: TorusGrid) -> np.ndarray:
        s = self.symbol(grid) if callable(self.symbol) else self.symbol
        s = np.array(np.broadcast_to(s, np.broadcast_shapes(np.shape(s), grid.shape)),
                     dtype=np.complex128)
        if self.zero_mode is not None:
            s[(Ellipsis,) + (0,) * grid.d] = self.zero_mode
        return s


def apply_multiplier(f: SpectralField, spec: MultiplierSpec) -> SpectralField:
    """out(xi) = symbol(xi) * in(xi).

    A vector symbol of shape ``(d,) + grid.shape`` applied to an ``(m, ...)``
    field yields an ``(m, d, ...)`` field.
    """
    s = spec.evaluate(f.grid)
    c = f.coeffs
    if s.ndim > f.grid.d:
        c = c[:, np.newaxis]
    return f.replace(coeffs=s * c)


def heat_propagator(t: float) -> MultiplierSpec:
    """e^{-t |xi|^2}."""
    return MultiplierSpec(lambda g: np.exp(-t * g.xi2), name=f"heat(t={t})")


def _poisson_gradient_symbol(grid: TorusGrid) -> np.ndarray:
    xi2 = grid.xi2
    inv = np.zeros_like(xi2)
    np.divide(1.0, xi2, out=inv, where=xi2 > 0)
    return np.stack([np.broadcast_to(-1j * c * inv, grid.shape) for c in grid.xi])


POISSON_GRADIENT = MultiplierSpec(_poisson_gradient_symbol, zero_mode=0.0,
                                  name="poisson_gradient")


def poisson_gradient(f: SpectralField) -> SpectralField:
    """Gradient of the potential phi_k with Laplacian(phi_k) = u_k.

    Returns an ``(m, d, ...)`` field; the symbol is -i xi / |xi|^2 with the
    zero mode set to 0.
    """
    return apply_multiplier(f, POISSON_GRADIENT)


def divergence(f: SpectralField) -> SpectralField:
    """sum_j i xi_j f_j for an ``(m, d, ...)`` vector field."""
    grid = f.grid
    out = np.zeros(f.coeffs.shape[:1] + f.coeffs.shape[2:], dtype=np.complex128)
    for j, c in enumerate(grid.xi):
        out += 1j * c * f.coeffs[:, j]
    return f.replace(coeffs=out)


def dealiased_product(a, b, grid: TorusGrid, cutoff: Optional[int] = None) -> SpectralField:
    """Transform of the pointwise product a*b with modes |k_j| > cutoff zeroed.

    ``a`` and ``b`` are physical samples on ``grid`` with identical shapes.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-grid.d:] != grid.shape or b.shape[-grid.d:] != grid.shape:
        raise ValueError("operands are not sampled on this grid")
    p = forward_transform(a * b, grid)
    return p.replace(coeffs=p.coeffs * grid.dealias_mask(cutoff))
