"""
Discrete weighted sup norms, pseudomeasure norms, the dyadic Besov norm
B^{a,inf}_inf and decay-rate fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .models import smooth_step
from .spectral import SpectralField, TorusGrid, _to_physical

PSI_INNER, PSI_LOW, PSI_HIGH, PSI_OUTER = 1 / 3, 0.5, 1.0, 4 / 3


def psi_hat(r) -> np.ndarray:
    """Radial Littlewood-Paley profile: 1 on [1/2, 1], 0 off (1/3, 4/3)."""
    r = np.asarray(r, dtype=float)
    rise = smooth_step((r - PSI_INNER) / (PSI_LOW - PSI_INNER))
    fall = 1.0 - smooth_step((r - PSI_HIGH) / (PSI_OUTER - PSI_HIGH))
    return np.where(r <= PSI_HIGH, rise, fall)


def psi_constraints(samples: int = 10_000) -> dict:
    """Check the three defining conditions of the profile on a radial sample."""
    r = np.linspace(0.0, 2.0, samples)
    v = psi_hat(r)
    plateau = (r >= 0.5) & (r <= 1.0)
    off = (r <= 1 / 3) | (r >= 4 / 3)
    return {
        "nonnegative": bool(np.all(v >= 0)),
        "plateau_ge_one": bool(np.all(v[plateau] >= 1.0)),
        "vanishes_outside": bool(np.all(v[off] == 0.0)),
    }


@dataclass(frozen=True)
class BesovConfig:
    a: float = 0.0
    k_min: int = -3
    k_max: int = 3

    def __post_init__(self):
        if self.k_max < self.k_min:
            raise ValueError("empty dyadic range")


def _species_physical(f: SpectralField) -> np.ndarray:
    return f.physical()


def weighted_sup_norm(f: SpectralField, theta: float, species: Optional[int] = None) -> float:
    """max over grid points of (1 + |x|_per)^theta |u(x)|."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    u = _species_physical(f)
    if species is not None:
        u = u[species]
    if theta == 0:
        return float(np.max(np.abs(u)))
    w = (1.0 + f.grid.radius) ** theta
    return float(np.max(w * np.abs(u)))


def pm_norm(f: SpectralField, a: float, species: Optional[int] = None) -> float:
    """max over nonzero lattice frequencies of |xi|^a |u_hat(xi)|.

    The zero mode is excluded for every a; read it with ``SpectralField.zero_mode``.
    """
    c = f.coeffs if species is None else f.coeffs[species]
    xi2 = f.grid.xi2
    nz = xi2 > 0
    w = np.zeros_like(xi2)
    w[nz] = xi2[nz] ** (a / 2)
    return float(np.max(w * np.abs(c)))


def besov_blocks(f: SpectralField, cfg: BesovConfig,
                 species: Optional[int] = None) -> dict:
    """Per-k values 2^{(a+d)k} sup_x |psi(2^k .) * f| for k in the configured range.

    psi(2^k .) * f has transform 2^{-dk} psi_hat(2^{-k} xi) f_hat(xi).
    """
    grid = f.grid
    c = f.coeffs if species is None else f.coeffs[species][np.newaxis]
    r = np.sqrt(grid.xi2)
    out = {}
    for k in range(cfg.k_min, cfg.k_max + 1):
        filt = psi_hat(r / 2.0**k)
        if not np.any(filt):
            out[k] = 0.0
            continue
        block = _to_physical(c * filt, grid)
        out[k] = float(2.0 ** (cfg.a * k) * np.max(np.abs(block)))
    return out


def besov_norm(f: SpectralField, cfg: BesovConfig, species: Optional[int] = None):
    """Returns (max over k, {k: block value})."""
    blocks = besov_blocks(f, cfg, species)
    return max(blocks.values()), blocks


def besov_norm_direct(f: SpectralField, cfg: BesovConfig) -> tuple:
    """The same quantity by explicit mode sums, no FFT (O(N^2); small grids only)."""
    grid = f.grid
    if grid.size > 32**2 * 2:
        raise ValueError("direct Besov evaluation is limited to small grids")
    k_idx = np.stack([np.broadcast_to(c, grid.shape).ravel() for c in grid.xi], axis=1)
    x_pts = np.stack([np.broadcast_to(c, grid.shape).ravel() for c in grid.x], axis=1)
    phase = np.exp(1j * x_pts @ k_idx.T)
    r = np.sqrt(np.sum(k_idx**2, axis=1))
    coeffs = f.coeffs.reshape(f.coeffs.shape[0], -1)
    blocks = {}
    for k in range(cfg.k_min, cfg.k_max + 1):
        weights = psi_hat(r / 2.0**k) * grid.freq_cell_volume / (2 * np.pi) ** grid.d
        vals = (coeffs * weights) @ phase.T
        blocks[k] = float(2.0 ** (cfg.a * k) * np.max(np.abs(vals)))
    return max(blocks.values()), blocks


@dataclass
class NormReport:
    time: float
    sup: list
    weighted: dict
    pm: dict
    besov: list
    mass: list
    max_coeff: float
    overflow: bool = False

    def header(self) -> list:
        cols = ["time"]
        m = len(self.sup)
        for s in range(m):
            cols.append(f"sup_u{s}")
            cols += [f"linf_theta{th:g}_u{s}" for th in self.weighted]
            cols += [f"pm_a{a:g}_u{s}" for a in self.pm]
            cols.append(f"besov_u{s}")
            cols += [f"mass_re_u{s}", f"mass_im_u{s}"]
        cols.append("max_abs_coeff")
        return cols

    def row(self) -> list:
        out = [self.time]
        for s in range(len(self.sup)):
            out.append(self.sup[s])
            out += [self.weighted[th][s] for th in self.weighted]
            out += [self.pm[a][s] for a in self.pm]
            out.append(self.besov[s])
            out += [self.mass[s].real, self.mass[s].imag]
        out.append(self.max_coeff)
        return out


def norm_report(f: SpectralField, thetas: Sequence[float] = (0.0, 2.0),
                pm_indices: Sequence[float] = (0.0,),
                besov: Optional[BesovConfig] = None) -> NormReport:
    besov = besov or BesovConfig()
    m = f.m
    finite = bool(np.all(np.isfinite(f.coeffs)))
    sup = [weighted_sup_norm(f, 0.0, s) for s in range(m)]
    return NormReport(
        time=f.time,
        sup=sup,
        weighted={th: [weighted_sup_norm(f, th, s) for s in range(m)] for th in thetas},
        pm={a: [pm_norm(f, a, s) for s in range(m)] for a in pm_indices},
        besov=[besov_norm(f, besov, s)[0] for s in range(m)],
        mass=[complex(z) for z in f.zero_mode()],
        max_coeff=f.max_abs(),
        overflow=not finite,
    )


def space_time_envelopes(fields, theta: float) -> tuple:
    """(sup_{x,t} (1+|x|)^theta |u|, sup_{x,t} (1+t)^{theta/2} |u|) over snapshots."""
    sx, st = 0.0, 0.0
    for f in fields:
        u = np.abs(f.physical())
        sx = max(sx, float(np.max((1 + f.grid.radius) ** theta * u)))
        st = max(st, float((1 + f.time) ** (theta / 2) * np.max(u)))
    return sx, st


@dataclass
class DecayFit:
    model: str
    exponent: float
    constant: float
    max_rel_residual: float
    mean: float = 0.0


def decay_fit(times, values, model: str = "algebraic", mean: float = 0.0) -> DecayFit:
    """Least-squares fit in log coordinates.

    algebraic:   y = C (1+t)^-p        (needs >= 10 samples spanning a decade in 1+t)
    exponential: y = C e^{-lambda t} + mean   (mean supplied)
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float) - (mean if model == "exponential" else 0.0)
    if np.any(y <= 0):
        raise ValueError("series values must be positive")
    if model == "algebraic":
        if len(t) < 10 or (1 + t.max()) / (1 + t.min()) < 10 * (1 - 1e-12):
            raise ValueError("need >= 10 samples spanning a decade in (1+t)")
        X = np.log1p(t)
    elif model == "exponential":
        if len(t) < 3:
            raise ValueError("need >= 3 samples")
        X = t
    else:
        raise ValueError(f"unknown model {model!r}")
    slope, intercept = np.polyfit(X, np.log(y), 1)
    fitted = np.exp(intercept + slope * X)
    resid = float(np.max(np.abs(fitted - y) / y))
    return DecayFit(model, float(-slope), float(np.exp(intercept)), resid,
                    mean if model == "exponential" else 0.0)


def embedding_constant(f: SpectralField, a_pm: float, k_min: int = -3, k_max: int = 3,
                       species: Optional[int] = None) -> float:
    """||f||_{B^{a-d,inf}_inf} / ||f||_{PM^a}, the measured PM -> Besov embedding ratio."""
    pm = pm_norm(f, a_pm, species)
    if pm == 0:
        return 0.0
    b, _ = besov_norm(f, BesovConfig(a_pm - f.grid.d, k_min, k_max), species)
    return b / pm
