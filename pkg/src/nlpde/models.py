"""
System specifications, initial data and the nonlocal quadratic term.

The systems have the form

    d_t u_j = Lap u_j + div( sum_{h,k} c_{j,h,k} u_h grad(phi_k) ),   Lap phi_k = u_k,

with ``grad(phi_k)`` realized by the Poisson gradient multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .spectral import (
    SpectralField,
    TorusGrid,
    _to_physical,
    _to_spectral,
    forward_transform,
    _poisson_gradient_symbol,
)

PRESETS = ("gravitating", "debye", "nernst_planck", "general")

CouplingField = Callable[[TorusGrid], np.ndarray]


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Dimension, species count and coupling tensor c[j, h, k].

    ``coupling`` is an ``(m, m, m)`` array of constants, or a callable
    ``grid -> (m, m, m) + grid.shape`` array of bounded physical-space fields.
    """

    d: int
    m: int
    coupling: Union[np.ndarray, CouplingField]
    alpha: float = 2.0
    preset: str = "general"

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"unsupported dimension {self.d}")
        if self.m < 1:
            raise ValueError("species count must be >= 1")
        if not callable(self.coupling):
            c = np.asarray(self.coupling, dtype=float)
            if c.shape != (self.m,) * 3:
                raise ValueError(f"coupling must have shape {(self.m,) * 3}, got {c.shape}")
            object.__setattr__(self, "coupling", c)

    @property
    def constant_coupling(self) -> bool:
        return not callable(self.coupling)

    def coupling_on(self, grid: TorusGrid) -> np.ndarray:
        if self.constant_coupling:
            return self.coupling
        c = np.asarray(self.coupling(grid), dtype=float)
        if c.shape != (self.m,) * 3 + grid.shape:
            raise ValueError(f"coupling field has shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coupling field must be bounded")
        return c


def build_preset(name: str, d: int, m: Optional[int] = None, coupling=None) -> SystemSpec:
    """Build one of the named systems.

    gravitating: m=1, c=+1.  debye: m=1, c=-1.
    nernst_planck: species (v, w) with Lap phi = v - w, v drifting with
    -div(v grad phi) and w with +div(w grad phi).
    general: user-supplied coupling.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    if name in ("gravitating", "debye"):
        if m not in (None, 1):
            raise ValueError(f"{name} is a single-species model, got m={m}")
        sign = 1.0 if name == "gravitating" else -1.0
        return SystemSpec(d, 1, np.full((1, 1, 1), sign), preset=name)
    if name == "nernst_planck":
        if m not in (None, 2):
            raise ValueError(f"nernst_planck has two species, got m={m}")
        c = np.zeros((2, 2, 2))
        # grad phi = g_v - g_w
        c[0, 0, 0], c[0, 0, 1] = -1.0, 1.0
        c[1, 1, 0], c[1, 1, 1] = 1.0, -1.0
        return SystemSpec(d, 2, c, preset=name)
    if coupling is None:
        raise ValueError("general preset requires a coupling tensor")
    if m is None:
        m = np.shape(coupling)[0] if not callable(coupling) else None
    if m is None:
        raise ValueError("species count required for a coupling field")
    return SystemSpec(d, m, coupling, preset="general")


def modulated_coupling(base, amplitude: float, wavevector) -> CouplingField:
    """c(x) = base * (1 + amplitude * cos(kappa . x)), evaluated on each grid.

    kappa is given in physical units, so the field is the same function of x
    on every grid it is sampled on.
    """
    base = np.asarray(base, dtype=float)
    kappa = np.asarray(wavevector, dtype=float)

    def coupling(grid: TorusGrid) -> np.ndarray:
        phase = sum(kj * xj for kj, xj in zip(kappa, grid.x))
        mod = 1.0 + amplitude * np.cos(phase)
        return base.reshape(base.shape + (1,) * grid.d) * mod

    return coupling


def nonlinear_term(spec: SystemSpec, u: SpectralField, cutoff: Optional[int] = None,
                   mask: Optional[np.ndarray] = None) -> SpectralField:
    """N_hat_j = i xi . FT[ sum_{h,k} c_{jhk} u_h g_k ], g_k = grad phi_k.

    Products are dealiased with the per-axis cutoff (default n//3); an extra
    boolean ``mask`` (e.g. a half-space projection) is applied on top. The
    zero mode of the result is exactly 0.
    """
    grid = u.grid
    if u.m != spec.m:
        raise ValueError(f"field has {u.m} species, system has {spec.m}")
    if grid.d != spec.d:
        raise ValueError(f"field is {grid.d}-dimensional, system is {spec.d}")
    keep = grid.dealias_mask(cutoff)
    if mask is not None:
        keep = keep & mask
    return u.replace(coeffs=_nonlinear_coeffs(spec, u.coeffs, grid, keep))


def _nonlinear_coeffs(spec: SystemSpec, uh: np.ndarray, grid: TorusGrid,
                      keep: np.ndarray, coupling: Optional[np.ndarray] = None,
                      symbol: Optional[np.ndarray] = None) -> np.ndarray:
    if coupling is None:
        coupling = spec.coupling_on(grid)
    if symbol is None:
        symbol = _poisson_gradient_symbol(grid)
    u = _to_physical(uh, grid)
    g = _to_physical(uh[:, np.newaxis] * symbol, grid)
    if coupling.ndim == 3:
        p = np.einsum("jhk,h...,kD...->jD...", coupling, u, g)
    else:
        p = np.einsum("jhk...,h...,kD...->jD...", coupling, u, g)
    ph = _to_spectral(p, grid) * keep
    out = np.zeros(uh.shape, dtype=np.complex128)
    for D, c in enumerate(grid.xi):
        out += (1j * c) * ph[:, D]
    out[(Ellipsis,) + (0,) * grid.d] = 0.0
    return out


# ---------------------------------------------------------------------------
# Initial data


@dataclass(frozen=True, eq=False)
class InitialData:
    kind: str
    params: dict
    field: SpectralField


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = _bump_exp(s)
    b = _bump_exp(1.0 - s)
    return a / (a + b)


def _bump_exp(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def radial_cutoff(r, r0: float, r1: float):
    """1 for r <= r0, 0 for r >= r1, smooth in between."""
    return 1.0 - smooth_step((np.asarray(r) - r0) / (r1 - r0))


def weighted_decay(grid: TorusGrid, eta: float, m: int = 1,
                   cutoff: Optional[tuple] = None) -> InitialData:
    """eta (1 + |x|_per)^-2 chi(x), chi cutting off before the cell boundary."""
    r0, r1 = cutoff if cutoff is not None else (0.3 * grid.period, 0.45 * grid.period)
    u = eta * (1.0 + grid.radius) ** -2 * radial_cutoff(grid.radius, r0, r1)
    u = np.broadcast_to(u, (m,) + grid.shape)
    return InitialData("weighted_decay", {"eta": eta, "cutoff": [r0, r1], "m": m},
                       forward_transform(u, grid))


def bump_profile(xi, center, radius: float) -> np.ndarray:
    """exp(-1/(1 - |(xi - center)/radius|^2)) inside the ball, 0 outside."""
    r2 = sum(((c - x0) / radius) ** 2 for c, x0 in zip(xi, center))
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def fourier_bump(grid: TorusGrid, amplitude: float, center=None,
                 radius: float = 0.25) -> InitialData:
    """A * b(xi) with b a smooth bump in B_radius(center), unit lattice L1 mass.

    The default center is 3/4 e_1. Coefficients are real and nonnegative.
    """
    if center is None:
        center = (0.75,) + (0.0,) * (grid.d - 1)
    b = bump_profile(grid.xi, center, radius)
    mass = b.sum() * grid.freq_cell_volume
    if mass == 0:
        raise ValueError("bump support contains no lattice points; refine the lattice")
    c = amplitude * (b / mass)
    return InitialData("fourier_bump",
                       {"amplitude": amplitude, "center": list(center), "radius": radius},
                       SpectralField(grid, c[np.newaxis]))


def chandrasekhar_mollified(grid: TorusGrid, eps: float,
                            cutoff: Optional[tuple] = None) -> InitialData:
    """2(d-2) / (|x|^2 + eps^2) with the boundary cutoff used by weighted_decay."""
    if grid.d < 3:
        raise ValueError("the singular stationary profile needs d >= 3")
    r0, r1 = cutoff if cutoff is not None else (0.3 * grid.period, 0.45 * grid.period)
    u = 2 * (grid.d - 2) / (grid.radius**2 + eps**2) * radial_cutoff(grid.radius, r0, r1)
    return InitialData("chandrasekhar_mollified", {"eps": eps, "cutoff": [r0, r1]},
                       forward_transform(u, grid))


def custom_spectral(grid: TorusGrid, coeffs) -> InitialData:
    c = np.asarray(coeffs, dtype=np.complex128)
    if c.shape == grid.shape:
        c = c[np.newaxis]
    return InitialData("custom_spectral", {}, SpectralField(grid, c))


def random_hermitian(grid: TorusGrid, amplitude: float, bandwidth: int, m: int = 1,
                     seed: int = 0) -> InitialData:
    """Real random field band-limited to |k_j| <= bandwidth.

    Normalized so that the physical sup norm equals ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((m,) + grid.shape) + 1j * rng.standard_normal((m,) + grid.shape)
    c = c * grid.dealias_mask(bandwidth)
    u = _to_physical(c, grid).real
    u = amplitude * u / np.max(np.abs(u))
    f = forward_transform(u, grid)
    # enforce the band limit exactly after the round trip
    f = f.replace(coeffs=f.coeffs * grid.dealias_mask(bandwidth))
    return InitialData("custom_spectral",
                       {"generator": "random_hermitian", "amplitude": amplitude,
                        "bandwidth": bandwidth, "seed": seed, "m": m}, f)


def from_physical(grid: TorusGrid, samples) -> InitialData:
    return InitialData("custom_spectral", {"generator": "physical"},
                       forward_transform(samples, grid))


# ---------------------------------------------------------------------------
# Stationary singular profile


def chandrasekhar_residual(d: int, radii) -> np.ndarray:
    """|Lap u + div(u grad phi)| for u = 2(d-2)|x|^-2, Lap phi = u, at each radius.

    Uses closed-form radial calculus for a power law u = C r^p:
    Lap u = C p (p+d-2) r^(p-2); phi' = C r^(p+1)/(p+d); and
    div(u grad phi) = C^2 (2p+d)/(p+d) r^(2p).
    """
    if d < 3:
        raise ValueError("the stationary profile requires d >= 3")
    r = np.asarray(radii, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    C, p = 2.0 * (d - 2), -2.0
    lap = C * p * (p + d - 2) * r ** (p - 2)
    transport = C * C * (2 * p + d) / (p + d) * r ** (2 * p)
    return np.abs(lap + transport)


def chandrasekhar_terms(d: int, r: float) -> tuple:
    """(Laplacian term, transport term) of the stationarity residual at radius r."""
    C, p = 2.0 * (d - 2), -2.0
    return (C * p * (p + d - 2) * r ** (p - 2),
            C * C * (2 * p + d) / (p + d) * r ** (2 * p))
