"""
Independent brute-force references.

* ``picard_direct``: the Fourier-side integral equation on a small mode box,
  convolutions by explicit pair sums (no FFT), trapezoid Duhamel rule with
  exact heat weights and a fixed-point solve at every time node.
* ``kernel_convolution_quadrature``: K * f with K = grad of the Newtonian
  potential in d = 3, for radial f, by nested Gauss-Legendre quadrature.
* ``duhamel_operator_quadrature``: L(w)(x,t) = int_0^t G(t-s) * w(s) ds with
  G = d/dx_1 of the heat kernel, for radial w in d = 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate

from .models import SystemSpec
from .spectral import SpectralField, TorusGrid, _to_physical

DESK_BOUND = 10**5


# ---------------------------------------------------------------------------
# Direct Picard reference


@dataclass
class SmallLattice:
    """Modes |k_i| <= R of a torus of the given period; amplitudes (m,) + (2R+1,)*d.

    Index i along an axis is the mode k = i - R.
    """

    d: int
    R: int
    amplitudes: np.ndarray
    period: float = 2 * math.pi

    def __post_init__(self):
        if (2 * self.R + 1) ** self.d > DESK_BOUND:
            raise ValueError(f"(2R+1)^d = {(2 * self.R + 1) ** self.d} exceeds {DESK_BOUND}")
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.shape[1:] != (2 * self.R + 1,) * self.d:
            raise ValueError(f"amplitudes have shape {a.shape}")
        self.amplitudes = a

    @property
    def m(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def dxi(self) -> float:
        return 2 * math.pi / self.period

    def modes(self) -> np.ndarray:
        """(N, d) integer modes in C order."""
        ax = np.arange(-self.R, self.R + 1)
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    @classmethod
    def from_field(cls, f: SpectralField, R: int) -> "SmallLattice":
        grid = f.grid
        if R > grid.n // 2 - 1:
            raise ValueError("R exceeds the grid")
        idx = np.mod(np.arange(-R, R + 1), grid.n)
        sub = f.coeffs[(slice(None),) + np.ix_(*([idx] * grid.d))]
        return cls(grid.d, R, np.array(sub), grid.period)

    def to_field(self, grid: TorusGrid, time: float = 0.0) -> SpectralField:
        if grid.d != self.d or not math.isclose(grid.period, self.period):
            raise ValueError("grid does not match the lattice")
        c = np.zeros((self.m,) + grid.shape, dtype=np.complex128)
        idx = np.mod(np.arange(-self.R, self.R + 1), grid.n)
        c[(slice(None),) + np.ix_(*([idx] * self.d))] = self.amplitudes
        return SpectralField(grid, c, time)

    def replace(self, amplitudes) -> "SmallLattice":
        return SmallLattice(self.d, self.R, amplitudes, self.period)


class PairTable:
    """All (xi, eta, xi - eta) triples inside the box with eta != 0."""

    def __init__(self, lat: SmallLattice):
        modes = lat.modes()
        n = len(modes)
        side = 2 * lat.R + 1
        strides = side ** np.arange(lat.d - 1, -1, -1)
        out_i, eta_i, diff_i, w = [], [], [], []
        dxi = lat.dxi
        for i in range(n):
            xi = modes[i]
            diff = xi[None, :] - modes
            ok = np.all(np.abs(diff) <= lat.R, axis=1) & np.any(modes != 0, axis=1)
            j = np.nonzero(ok)[0]
            eta = modes[j]
            kern = (eta @ xi) / np.sum(eta**2, axis=1)   # xi.eta/|eta|^2, lattice units
            out_i.append(np.full(len(j), i))
            eta_i.append(j)
            diff_i.append((diff[j] + lat.R) @ strides)
            w.append(kern)
        self.n = n
        self.out = np.concatenate(out_i)
        self.eta = np.concatenate(eta_i)
        self.diff = np.concatenate(diff_i)
        # (2 pi)^-d * dxi^d from the lattice sum; xi.eta/|eta|^2 is scale invariant
        self.weight = np.concatenate(w) * (dxi / (2 * math.pi)) ** lat.d
        self.xi2 = np.sum(modes**2, axis=1) * dxi**2

    def apply(self, coupling: np.ndarray, u: np.ndarray) -> np.ndarray:
        """N_j(xi) = (2 pi)^-d sum_eta sum_{h,k} c_jhk (xi.eta/|eta|^2) u_h(xi-eta) u_k(eta)."""
        m = u.shape[0]
        out = np.zeros((m, self.n), dtype=np.complex128)
        for j in range(m):
            for h in range(m):
                for k in range(m):
                    c = coupling[j, h, k]
                    if c == 0:
                        continue
                    terms = c * self.weight * u[h, self.diff] * u[k, self.eta]
                    out[j] += np.bincount(self.out, terms.real, self.n)
                    out[j] += 1j * np.bincount(self.out, terms.imag, self.n)
        return out


@dataclass
class DirectTrajectory:
    times: np.ndarray
    states: List[SmallLattice]
    iterations: List[int] = field(default_factory=list)
    status: str = "completed"


def picard_direct(spec: SystemSpec, u0: SmallLattice, T: float, steps: int,
                  tol: float = 1e-14, cap: int = 100) -> DirectTrajectory:
    """Trapezoid Duhamel rule u_j = E u_{j-1} + dt/2 (E N_{j-1} + N_j), N_j solved by fixed point."""
    if not spec.constant_coupling:
        raise ValueError("the direct reference needs a constant coupling tensor")
    if spec.d != u0.d or spec.m != u0.m:
        raise ValueError("system and data disagree on d or m")
    table = PairTable(u0)
    coupling = spec.coupling
    dt = T / steps
    E = np.exp(-dt * table.xi2)
    u = u0.amplitudes.reshape(u0.m, -1).copy()
    times, states, iters = [0.0], [u0], []
    Nu = table.apply(coupling, u)
    status = "completed"
    for j in range(1, steps + 1):
        base = E * u + 0.5 * dt * E * Nu
        new = base + 0.5 * dt * Nu  # explicit predictor
        for it in range(1, cap + 1):
            Nn = table.apply(coupling, new)
            nxt = base + 0.5 * dt * Nn
            change = float(np.max(np.abs(nxt - new)))
            new = nxt
            if not np.isfinite(change):
                status = "diverged"
                break
            if change <= tol * max(1.0, float(np.max(np.abs(new)))):
                break
        else:
            status = "diverged"
        iters.append(it)
        if status != "completed":
            break
        u, Nu = new, table.apply(coupling, new)
        times.append(j * dt)
        states.append(u0.replace(u.reshape(u0.amplitudes.shape)))
    return DirectTrajectory(np.array(times), states, iters, status)


def sup_discrepancy(a: SpectralField, b: SpectralField) -> float:
    """sup_x |u_a - u_b| on the grid of ``a``."""
    return float(np.max(np.abs(_to_physical(a.coeffs - b.coeffs, a.grid))))


# ---------------------------------------------------------------------------
# Kernel and Duhamel quadratures (d = 3, radial data)


def _gl_panels(breaks: Sequence[float], order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _refine(breaks: Sequence[float], level: int) -> list:
    out = list(breaks[:1])
    for a, b in zip(breaks[:-1], breaks[1:]):
        pts = np.linspace(a, b, 2**level + 1)[1:]
        out.extend(pts.tolist())
    return out


def newton_field_shell(f: Callable, r: float) -> float:
    """Radial component of grad(E_3) * f at |x| = r via the shell theorem: M(r)/(4 pi r^2)."""
    mass, _ = integrate.quad(lambda s: 4 * math.pi * s * s * f(s), 0.0, r, limit=200)
    return mass / (4 * math.pi * r * r)


def kernel_convolution_value(f: Callable, r: float, level: int = 0, order: int = 16,
                             s_max_factor: float = 1e6) -> float:
    """x_hat . (K * f)(x) at |x| = r, K(z) = z / (4 pi |z|^3).

    In z = x - y coordinates, (1/2) int_0^inf int_{-1}^1 nu f(|x - z|) dnu ds
    with |x - z|^2 = r^2 + s^2 - 2 r s nu. The inner integral is taken in
    rho = |x - z|, where the integrand is smooth.
    """
    base = [0.0, r / 2, r, 1.5 * r, 2 * r]
    top = 2 * r
    while top < s_max_factor * (1 + r):
        top *= 2
        base.append(top)
    s, ws = _gl_panels(_refine(base, level), order)
    total = 0.0
    xr, wr = np.polynomial.legendre.leggauss(order)
    for si, wi in zip(s, ws):
        lo, hi = abs(r - si), r + si
        inner_breaks = [lo, hi] if not lo < r / 2 < hi else [lo, r / 2, hi]
        inner_breaks = _refine(inner_breaks, level)
        rho, wrho = _gl_panels(inner_breaks, order)
        nu = (r * r + si * si - rho**2) / (2 * r * si)
        val = np.sum(wrho * nu * f(rho) * rho) / (r * si)
        total += wi * 0.5 * val
    return total


def kernel_split(f: Callable, r: float) -> dict:
    """int |K(x-y)| f(y) dy over |y| <= r/2, r/2..3r/2 and >= 3r/2.

    For radial f: (1/(2r)) int rho f(rho) ln((r+rho)/|r-rho|) drho over each range.
    """
    def g(rho):
        return rho * f(rho) * math.log((r + rho) / abs(r - rho)) / (2 * r)

    i1, _ = integrate.quad(g, 0.0, r / 2, limit=200)
    i2a, _ = integrate.quad(g, r / 2, r, limit=200)
    i2b, _ = integrate.quad(g, r, 1.5 * r, limit=200)
    i3, _ = integrate.quad(g, 1.5 * r, np.inf, limit=400)
    return {"I1": i1, "I2": i2a + i2b, "I3": i3}


def decay_profile(alpha: float = 2.0) -> Callable:
    return lambda rho: (1.0 + np.abs(rho)) ** -alpha


@dataclass
class QuadratureTable:
    """Rows of (r, t, value, weighted) at one refinement level, plus the summary ratios."""

    columns: List[str]
    rows: List[list]
    ratios: dict

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows], dtype=float)


def kernel_convolution_quadrature(f: Optional[Callable] = None, d: int = 3, alpha: float = 2.0,
                                  radii: Sequence[float] = (1, 2, 4, 8, 16, 32, 64),
                                  f_norm: Optional[float] = None,
                                  level: int = 0) -> QuadratureTable:
    """sup over sampled radii of (1 + r)|K * f| and its ratio to ||f||_{L^inf_alpha}."""
    if d != 3:
        raise ValueError("the kernel quadrature is implemented for d = 3")
    if f is None:
        f = decay_profile(alpha)
    if f_norm is None:
        rr = np.concatenate([np.linspace(0, 10, 2001), np.geomspace(10, 1e6, 2001)])
        f_norm = float(np.max((1 + rr) ** alpha * np.abs(f(rr))))
    rows = []
    for r in radii:
        v = kernel_convolution_value(f, float(r), level)
        rows.append([float(r), v, (1 + r) * abs(v)])
    sup = max(row[2] for row in rows)
    ratio = sup / f_norm if f_norm > 0 else 0.0
    return QuadratureTable(["r", "value", "weighted"], rows,
                           {"sup_weighted": sup, "f_norm": f_norm, "ratio": ratio})


def heat_derivative_l1(t: float) -> float:
    """||d/dx_1 heat kernel(t)||_{L^1} by quadrature (the other axes integrate to 1)."""
    def g(x):
        return abs(x) / (2 * t) * math.exp(-x * x / (4 * t)) / math.sqrt(4 * math.pi * t)

    s = math.sqrt(t)
    val, _ = integrate.quad(g, -60 * s, 60 * s, points=[0.0], limit=400,
                            epsabs=0, epsrel=1e-12)
    return val


def _radial_heat_derivative(W: Callable, r: float, tau: float, level: int,
                            order: int) -> float:
    """d/dr (Gamma_tau * W)(r) for radial W in d = 3, via the odd 1-D extension.

    With psi(y) = y W(|y|) and Q = g_tau * psi (1-D, variance 2 tau),
    F = Q / r and F' = Q'/r - Q/r^2.
    """
    sd = math.sqrt(2 * tau)
    lo, hi = r - 12 * sd, r + 12 * sd
    breaks = [lo, hi] if not lo < 0 < hi else [lo, 0.0, hi]
    y, w = _gl_panels(_refine(breaks, level + 2), order)
    psi = y * W(np.abs(y))
    g = np.exp(-((r - y) ** 2) / (4 * tau)) / math.sqrt(4 * math.pi * tau)
    Q = np.sum(w * psi * g)
    dQ = np.sum(w * psi * g * (-(r - y) / (2 * tau)))
    return dQ / r - Q / r**2


def duhamel_value(w: Callable, r: float, t: float, level: int = 0, order: int = 16) -> float:
    """L(w)(r e_1, t) = int_0^t (G(t-s) * w(s))(r e_1) ds, tau = t - s = sigma^2."""
    sig, ws = _gl_panels(_refine([0.0, math.sqrt(t)], level + 3), order)
    total = 0.0
    for sg, wg in zip(sig, ws):
        tau = sg * sg
        s = t - tau
        total += wg * 2 * sg * _radial_heat_derivative(lambda rho: w(rho, s), r, tau,
                                                       level, order)
    return total


def space_time_profile(alpha: float = 2.0) -> Callable:
    """w(x, t) = (1 + |x|)^-(alpha+1) (1 + t)^-(alpha+1)/2."""
    return lambda rho, t: (1 + rho) ** -(alpha + 1) * (1 + t) ** (-(alpha + 1) / 2)


def duhamel_operator_quadrature(w: Optional[Callable] = None, d: int = 3, alpha: float = 2.0,
                                radii: Sequence[float] = (1, 2, 4, 8, 16, 32),
                                times: Sequence[float] = (1, 2, 4, 8, 16, 32),
                                w_norm: Optional[float] = None,
                                level: int = 0) -> QuadratureTable:
    """Envelopes sup (1+|x|)^alpha |L(w)| and sup (1+t)^{alpha/2} |L(w)| over the samples.

    ||w||_{E_{alpha+1}} is the larger of its two envelopes.
    """
    if d != 3:
        raise ValueError("the Duhamel quadrature is implemented for d = 3")
    if w is None:
        w = space_time_profile(alpha)
    if w_norm is None:
        rr = np.concatenate([np.linspace(0, 10, 401), np.geomspace(10, 1e4, 401)])
        tt = np.concatenate([np.linspace(0, 10, 201), np.geomspace(10, 1e4, 201)])
        R, Tm = np.meshgrid(rr, tt, indexing="ij")
        vals = np.abs(w(R, Tm))
        w_norm = float(max(np.max((1 + R) ** (alpha + 1) * vals),
                           np.max((1 + Tm) ** ((alpha + 1) / 2) * vals)))
    rows = []
    for r in radii:
        for t in times:
            v = duhamel_value(w, float(r), float(t), level)
            rows.append([float(r), float(t), v, (1 + r) ** alpha * abs(v),
                         (1 + t) ** (alpha / 2) * abs(v)])
    sx = max(row[3] for row in rows)
    st = max(row[4] for row in rows)
    ratios = {"sup_space": sx, "sup_time": st, "w_norm": w_norm,
              "ratio_space": sx / w_norm if w_norm else 0.0,
              "ratio_time": st / w_norm if w_norm else 0.0}
    return QuadratureTable(["r", "t", "value", "space_weighted", "time_weighted"], rows, ratios)


def refinement_change(coarse: dict, fine: dict, keys: Sequence[str]) -> dict:
    """Relative change |fine/coarse - 1| per key."""
    out = {}
    for k in keys:
        a, b = coarse[k], fine[k]
        out[k] = abs(b / a - 1.0) if a != 0 else (0.0 if b == 0 else math.inf)
    return out
