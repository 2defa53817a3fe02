"""
Fourier-side blow-up certificate ladder for the gravitating model.

Level k carries a barrier

    u_hat_t(xi) >= A^{2^k} c_k e^{-2^k t} w_k(xi),   t >= t_k,

with w_k = (2 pi)^-d w_{k-1} * w_{k-1}, stored as a unit-mass lattice shape
m_k together with log ||w_k||_L1. All amplitude bookkeeping is logarithmic;
nothing of size A^{2^k} is ever formed.

Two families of constants are tracked side by side:

* the closed-form chain alpha_k(t) = 2^{2k+7-2^k} e^{-2^k t} 1_{t >= t_k}
  (``closed_form_margin`` records how well each step of it closes), and
* the measured chain c_0 = 1, c_k = c_{k-1}^2 g_k, where g_k is the smallest
  sampled ratio between the Duhamel lower bound built from level k-1 and
  c_{k-1}^2 A^{2^k} e^{-2^k t} w_k.  The threshold estimate uses this chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import signal

from .diagnostics import psi_hat
from .models import bump_profile

LN2 = math.log(2.0)
T_STAR = LN2 / 3.0
KERNELS = ("first_component", "dot")
TAIL_FLOOR = 1e-200


class CertificateError(ValueError):
    pass


def ladder_times(k: int) -> float:
    """t_k = ln2 * sum_{j=1}^k 4^-j = (ln2/3)(1 - 4^-k)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return T_STAR * (1.0 - 4.0**-k)


def log_alpha(k: int, t: float) -> float:
    """log of 2^{2k+7-2^k} e^{-2^k t} 1_{t >= t_k}; -inf below t_k."""
    if t < ladder_times(k):
        return -math.inf
    return (2 * k + 7 - 2.0**k) * LN2 - 2.0**k * t


def _log_alpha_const(k: int) -> float:
    return (2 * k + 7 - 2.0**k) * LN2


def closed_form_threshold(d: int) -> float:
    """2^{4/3} (2 pi)^d."""
    return 2.0 ** (4 / 3) * (2 * math.pi) ** d


def time_factor(k: int, t, xi2) -> np.ndarray:
    """e^{2^k t} int_{t_{k-1}}^t e^{(s-t)|xi|^2} e^{-2^k s} ds, in closed form."""
    return time_factor_offset(k, np.asarray(t, dtype=float) - ladder_times(k - 1), xi2)


def time_factor_offset(k: int, tau, xi2) -> np.ndarray:
    """Same integral parametrized by tau = t - t_{k-1} (exact for deep levels)."""
    tau = np.asarray(tau, dtype=float)
    mu = np.asarray(xi2, dtype=float) - 2.0**k
    tau, mu = np.broadcast_arrays(tau, mu)
    out = np.array(tau, dtype=float)
    nz = mu != 0
    out[nz] = -np.expm1(-tau[nz] * mu[nz]) / mu[nz]
    return out


def time_factor_endpoint(k: int, t: float, xi2: float, panels: int = 64) -> tuple:
    """Left and right Riemann sums of the same integral; they bracket it."""
    s = np.linspace(ladder_times(k - 1), t, panels + 1)
    f = np.exp((s - t) * (xi2 - 2.0**k))
    ds = s[1] - s[0]
    left, right = float(np.sum(f[:-1]) * ds), float(np.sum(f[1:]) * ds)
    return min(left, right), max(left, right)


@dataclass
class LadderLevel:
    k: int
    t_k: float
    h: float
    origin: np.ndarray
    shape: np.ndarray
    log_mass: float
    log_gain: float = 0.0
    gain: float = 1.0
    closed_form_margin: float = float("nan")
    support_ok: bool = True

    @property
    def d(self) -> int:
        return self.shape.ndim

    def coords(self) -> list:
        out = []
        for ax in range(self.d):
            v = (self.origin[ax] + np.arange(self.shape.shape[ax])) * self.h
            sl = [1] * self.d
            sl[ax] = -1
            out.append(v.reshape(sl))
        return out

    def mass(self) -> float:
        return float(np.sum(self.shape) * self.h**self.d)

    def log_prefactor(self, A: float) -> float:
        """log of A^{2^k} c_k ||w_k||_L1."""
        return 2.0**self.k * math.log(A) + self.log_gain + self.log_mass

    def support_box(self) -> list:
        nz = np.nonzero(self.shape > 0)
        box = []
        for ax in range(self.d):
            lo, hi = nz[ax].min(), nz[ax].max()
            box.append([float((self.origin[ax] + lo) * self.h),
                        float((self.origin[ax] + hi) * self.h)])
        return box

    def to_dict(self, A: Optional[float] = None) -> dict:
        out = {
            "k": self.k,
            "t_k": self.t_k,
            "h": self.h,
            "logMass": self.log_mass,
            "logGain": self.log_gain,
            "gain": self.gain,
            "margin": self.closed_form_margin,
            "support_box": self.support_box(),
            "support_ok": self.support_ok,
        }
        if A is not None:
            out["logPrefactor"] = self.log_prefactor(A)
        return out


def _lattice_box(center, radius: float, h: float, d: int):
    lo = [int(math.floor((c - radius) / h)) for c in center]
    hi = [int(math.ceil((c + radius) / h)) for c in center]
    origin = np.array(lo)
    sizes = [b - a + 1 for a, b in zip(lo, hi)]
    coords = []
    for ax in range(d):
        v = (origin[ax] + np.arange(sizes[ax])) * h
        sl = [1] * d
        sl[ax] = -1
        coords.append(v.reshape(sl))
    return origin, coords


def build_w0(h: float, d: int = 2, check: bool = True) -> LadderLevel:
    """Unit-mass smooth bump in B_{1/4}(3 e_1/4) sampled on the lattice hZ^d."""
    if check and h > 1 / 32:
        raise CertificateError(f"lattice spacing {h} too coarse; need h <= 1/32")
    center = (0.75,) + (0.0,) * (d - 1)
    origin, coords = _lattice_box(center, 0.25, h, d)
    b = bump_profile(coords, center, 0.25)
    b = b / (b.sum() * h**d)
    lvl = LadderLevel(0, 0.0, h, origin, b, log_mass=0.0)
    lvl.support_ok = support_in_E(lvl)
    return lvl


def level_from_coefficients(coeffs: np.ndarray, dxi: float, index_axes: Sequence[np.ndarray],
                            amplitude: float) -> LadderLevel:
    """Level-0 shape read off a solver coefficient array (real part / amplitude).

    ``index_axes`` gives the signed integer lattice index along each axis in
    array order (FFT ordering).
    """
    re = np.real(coeffs) / amplitude
    nz = np.nonzero(re > 0)
    if not len(nz[0]):
        raise CertificateError("initial data has no positive coefficients")
    d = re.ndim
    signed = [index_axes[ax][nz[ax]] for ax in range(d)]
    lo = [int(s.min()) for s in signed]
    hi = [int(s.max()) for s in signed]
    shape = np.zeros([b - a + 1 for a, b in zip(lo, hi)])
    idx = tuple(s - a for s, a in zip(signed, lo))
    shape[idx] = re[nz]
    mass = shape.sum() * dxi**d
    lvl = LadderLevel(0, 0.0, dxi, np.array(lo), shape / mass, log_mass=math.log(mass))
    lvl.support_ok = support_in_E(lvl)
    return lvl


def support_in_E(level: LadderLevel, tol: Optional[float] = None) -> bool:
    """supp m_k within E_k = {2^{k-1} <= xi_1 <= |xi| <= 2^k}, up to lattice tolerance."""
    k = level.k
    if tol is None:
        tol = math.sqrt(level.d) * level.h
    c = level.coords()
    on = level.shape > 0
    xi1 = np.broadcast_to(c[0], level.shape.shape)[on]
    r = np.sqrt(sum(np.broadcast_to(x, level.shape.shape)[on] ** 2 for x in c))
    return bool(np.all(xi1 >= 2.0 ** (k - 1) - tol) and np.all(r <= 2.0**k + tol))


def support_in_ball(level: LadderLevel, tol: Optional[float] = None) -> bool:
    """supp m_k within B_{2^{k-2}}(3 2^{k-2} e_1) (sumset doubling of the level-0 ball)."""
    k = level.k
    if tol is None:
        # restriction spreads support by one coarse cell
        tol = 2 * math.sqrt(level.d) * level.h
    c = level.coords()
    center = [3 * 2.0 ** (k - 2)] + [0.0] * (level.d - 1)
    r = np.sqrt(sum((x - x0) ** 2 for x, x0 in zip(c, center)))
    return bool(np.all(np.broadcast_to(r, level.shape.shape)[level.shape > 0]
                       <= 2.0 ** (k - 2) + tol))


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # direct summation keeps nonnegative inputs exactly nonnegative
    return signal.convolve(a, b, mode="full", method="direct")


@dataclass
class PairData:
    """Level-k quantities on the convolution lattice of level k-1."""

    h: float
    origin: np.ndarray
    conv: np.ndarray       # (m * m)(xi) h^d, unnormalized
    weighted: np.ndarray   # sum_eta K(xi, eta) m(xi-eta) m(eta) h^d

    def coords(self) -> list:
        d = self.conv.ndim
        out = []
        for ax in range(d):
            v = (self.origin[ax] + np.arange(self.conv.shape[ax])) * self.h
            sl = [1] * d
            sl[ax] = -1
            out.append(v.reshape(sl))
        return out


def pair_data(prev: LadderLevel, kernel: str = "first_component") -> PairData:
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    m, h = prev.shape, prev.h
    hd = h**prev.d
    eta = prev.coords()
    eta2 = sum(np.broadcast_to(e, m.shape) ** 2 for e in eta)
    inv = np.zeros(m.shape)
    np.divide(1.0, eta2, out=inv, where=eta2 > 0)
    conv = _convolve(m, m) * hd
    origin = 2 * prev.origin
    out_coords = [(origin[ax] + np.arange(conv.shape[ax])) * h for ax in range(prev.d)]
    comps = [0] if kernel == "first_component" else range(prev.d)
    weighted = np.zeros(conv.shape)
    for j in comps:
        sl = [1] * prev.d
        sl[j] = -1
        xi_j = out_coords[j].reshape(sl)
        part = _convolve(m, m * np.broadcast_to(eta[j], m.shape) * inv) * hd
        weighted += xi_j * part
    keep = conv >= TAIL_FLOOR * conv.max()
    return PairData(h, origin, np.where(keep, conv, 0.0), np.where(keep, weighted, 0.0))


def _restrict(values: np.ndarray, origin: np.ndarray) -> tuple:
    """Mass-preserving full-weighting restriction from spacing h to 2h.

    Operates on point values; cell masses are redistributed with per-axis
    weights (1/2, 1, 1/2) onto the even sublattice, and values are divided by
    2^d for the doubled cell volume.
    """
    d = values.ndim
    out = values
    new_origin = np.empty(d, dtype=np.int64)
    for ax in range(d):
        # a zero on each side so boundary odd points keep both coarse neighbours
        out = np.pad(out, [(1, 1) if a == ax else (0, 0) for a in range(d)])
        o = int(origin[ax]) - 1
        # pad so the first index is odd-aligned below an even coarse point
        lo = o - 1 if o % 2 == 0 else o
        pad_lo = o - lo
        n = out.shape[ax] + pad_lo
        hi = lo + n - 1
        if hi % 2 == 0:
            hi += 1
        pad_hi = hi - (lo + n - 1)
        widths = [(0, 0)] * d
        widths[ax] = (pad_lo, pad_hi)
        padded = np.pad(out, widths)
        # fine index lo + i; coarse points at even fine indices lo+1, lo+3, ...
        idx_c = np.arange(1, padded.shape[ax], 2)
        centre = np.take(padded, idx_c, axis=ax)
        left = np.take(padded, idx_c - 1, axis=ax)
        right_idx = idx_c + 1
        right = np.take(np.pad(padded, [(0, 1) if a == ax else (0, 0) for a in range(d)]),
                        right_idx, axis=ax)
        out = centre + 0.5 * (left + right)
        new_origin[ax] = (lo + 1) // 2
    return out / 2**d, new_origin


def convolve_level(prev: LadderLevel, coarsen: bool = True, kernel: str = "first_component",
                   pair: Optional[PairData] = None) -> LadderLevel:
    """Next shape m_k = normalized m_{k-1} * m_{k-1}; log mass gains -d ln(2 pi).

    With ``coarsen`` the result is restricted to spacing 2h so that every level
    keeps the same number of points per dyadic width.
    """
    if pair is None:
        pair = pair_data(prev, kernel)
    d = prev.d
    mass = float(np.sum(pair.conv) * pair.h**d)
    if not mass > 0 or not math.isfinite(mass):
        raise CertificateError(f"level {prev.k + 1}: convolution mass is {mass}")
    log_mass = 2 * prev.log_mass - d * math.log(2 * math.pi) + math.log(mass)
    shape, origin, h = pair.conv / mass, pair.origin, pair.h
    if coarsen:
        shape, origin = _restrict(shape, origin)
        h = 2 * h
        shape = shape / (np.sum(shape) * h**d)
    # drop the far tail before it reaches subnormal range; lowering a barrier is safe
    shape = np.where(shape >= TAIL_FLOOR * shape.max(), shape, 0.0)
    lvl = LadderLevel(prev.k + 1, ladder_times(prev.k + 1), h, np.asarray(origin), shape,
                      log_mass)
    lvl.support_ok = support_in_E(lvl)
    if not lvl.support_ok:
        raise CertificateError(f"level {lvl.k}: support leaks outside E_{lvl.k}")
    return lvl


@dataclass
class InductionStep:
    k: int
    gain: float            # measured g_k
    closed_form_margin: float    # ratio against the closed-form alpha chain
    argmin_t: float
    argmin_xi: list
    factor_min: float      # min sampled kernel factor over the support pairs


def default_times(k: int, count: int = 17) -> np.ndarray:
    return np.linspace(ladder_times(k), T_STAR, count)


def default_offsets(k: int, count: int = 17) -> np.ndarray:
    """Sample offsets t - t_{k-1} covering [t_k, t*]: from ln2 4^-k to (ln2/3) 4^-(k-1)."""
    return np.linspace(LN2 * 4.0**-k, T_STAR * 4.0 ** -(k - 1), count)


def verify_induction_step(prev: LadderLevel, times: Optional[Iterable[float]] = None,
                          kernel: str = "first_component",
                          pair: Optional[PairData] = None,
                          count: int = 17) -> InductionStep:
    """Measured gain of the step k-1 -> k over sample times and the support of m_k.

    gain = min over (t, xi) of time_factor(k, t, |xi|^2) * S(xi), where
    S(xi) = sum K(xi,eta) m(xi-eta) m(eta) / sum m(xi-eta) m(eta) is the
    kernel-weighted average over the convolution.
    """
    k = prev.k + 1
    if pair is None:
        pair = pair_data(prev, kernel)
    if times is None:
        offsets = default_offsets(k, count)
    else:
        times = np.asarray(list(times), dtype=float)
        if np.any(times < ladder_times(k) - 1e-15):
            raise ValueError("sample times must be >= t_k")
        offsets = times - ladder_times(k - 1)
    on = pair.conv > 0
    if not np.any(on):
        raise CertificateError(f"level {k}: empty support")
    S = pair.weighted[on] / pair.conv[on]
    c = pair.coords()
    xi2 = sum(np.broadcast_to(x, pair.conv.shape)[on] ** 2 for x in c)
    best, arg = math.inf, (0.0, 0)
    for tau in offsets:
        t = ladder_times(k - 1) + tau
        r = time_factor_offset(k, tau, xi2) * S
        i = int(np.argmin(r))
        if r[i] < best:
            best, arg = float(r[i]), (float(t), i)
    if not math.isfinite(best):
        raise CertificateError(f"level {k}: non-finite quadrature")
    pos = [float(np.broadcast_to(x, pair.conv.shape)[on][arg[1]]) for x in c]
    margin = math.exp(2 * _log_alpha_const(k - 1) - _log_alpha_const(k)) * best
    return InductionStep(k, best, margin, arg[0], pos, float(np.min(S)))


def base_margins(level0: LadderLevel, times: Optional[Iterable[float]] = None) -> tuple:
    """(measured base gain, closed-form margin) for u_hat_t >= A e^{-t|xi|^2} w_0.

    The measured base barrier is A e^{-t} w_0 (c_0 = 1); the closed form
    claims alpha_0(t) = 2^6 e^{-t}.
    """
    times = default_times(0) if times is None else np.asarray(list(times), dtype=float)
    c = level0.coords()
    on = level0.shape > 0
    xi2 = sum(np.broadcast_to(x, level0.shape.shape)[on] ** 2 for x in c)
    g = min(float(np.min(np.exp(t * (1.0 - xi2)))) for t in times)
    return g, g * math.exp(-_log_alpha_const(0))


@dataclass
class Ladder:
    d: int
    levels: List[LadderLevel]
    steps: List[InductionStep] = field(default_factory=list)
    kernel: str = "first_component"

    @property
    def k_max(self) -> int:
        return self.levels[-1].k


def build_ladder(d: int, k_max: int, points_per_octave: int = 32,
                 kernel: str = "first_component", coarsen: bool = True,
                 level0: Optional[LadderLevel] = None,
                 times_per_level: int = 17) -> Ladder:
    """Build levels 0..k_max and measure every induction step.

    The default lattice spacing is h_k = 2^k / points_per_octave.
    """
    if level0 is None:
        level0 = build_w0(1.0 / points_per_octave, d)
    g0, m0 = base_margins(level0, default_times(0, times_per_level))
    level0.gain, level0.closed_form_margin, level0.log_gain = g0, m0, math.log(g0)
    levels, steps = [level0], []
    for k in range(1, k_max + 1):
        prev = levels[-1]
        pair = pair_data(prev, kernel)
        st = verify_induction_step(prev, None, kernel, pair, times_per_level)
        lvl = convolve_level(prev, coarsen=coarsen, kernel=kernel, pair=pair)
        lvl.gain, lvl.closed_form_margin = st.gain, st.closed_form_margin
        lvl.log_gain = 2 * prev.log_gain + math.log(st.gain)
        levels.append(lvl)
        steps.append(st)
    return Ladder(d, levels, steps, kernel)


def threshold_exponents(ladder: Ladder) -> np.ndarray:
    """L_k = -log2(c_k) / 2^k for k = 0..k_max."""
    return np.array([-lvl.log_gain / LN2 / 2.0**lvl.k for lvl in ladder.levels])


def _aitken(x0: float, x1: float, x2: float) -> float:
    den = x2 - 2 * x1 + x0
    if den == 0 or not math.isfinite(den):
        return x2
    return x2 - (x2 - x1) ** 2 / den


def estimate_threshold(ladder: Ladder, a: float = 0.0,
                       multipliers: Sequence[float] = (0.5, 1.0, 2.0, 4.0)) -> dict:
    """A* = (2 pi)^d e^{t*} 2^L with L the extrapolated limit of L_k.

    Also tabulates the Besov lower-bound log terms for A = multiplier * A*.
    """
    if ladder.k_max < 3:
        raise CertificateError("threshold estimation needs k_max >= 3")
    L = threshold_exponents(ladder)
    L_inf = _aitken(L[-3], L[-2], L[-1])
    d = ladder.d
    A_star = (2 * math.pi) ** d * math.exp(T_STAR) * 2.0**L_inf
    table = []
    for mult in multipliers:
        A = mult * A_star
        terms = besov_lowerbound(ladder, a, A)
        table.append({"multiplier": mult, "A": A, "log_terms": terms,
                      "divergent": is_divergent(terms)})
    return {"A_star": A_star, "L_inf": L_inf, "L_k": L.tolist(),
            "A_closed_form": closed_form_threshold(d), "divergence_table": table}


def is_divergent(log_terms: Sequence[float], k_from: int = 2) -> bool:
    t = np.asarray(log_terms[k_from:], dtype=float)
    return bool(len(t) >= 2 and np.all(np.diff(t) > 0))


def psi_weighted_mass(level: LadderLevel) -> float:
    """sum psi_hat(2^-k xi) m_k(xi) h^d (>= plain mass when supp m_k lies in E_k)."""
    c = level.coords()
    r = np.sqrt(sum(x**2 for x in c))
    return float(np.sum(psi_hat(r / 2.0**level.k) * level.shape) * level.h**level.d)


def besov_lowerbound(ladder: Ladder, a: float, A: float, t: float = T_STAR) -> list:
    """log of 2^{ak} (2 pi)^-d A^{2^k} c_k e^{-2^k t} ||psi_hat(2^-k .) w_k||_L1, per level."""
    d = ladder.d
    out = []
    for lvl in ladder.levels:
        if t < lvl.t_k:
            out.append(-math.inf)
            continue
        wm = psi_weighted_mass(lvl)
        out.append(a * lvl.k * LN2 - d * math.log(2 * math.pi) + lvl.log_prefactor(A)
                   - 2.0**lvl.k * t + (math.log(wm) if wm > 0 else -math.inf))
    return out


def kernel_factor_min(k: int, d: int = 2, samples: int = 20000, seed: int = 0) -> float:
    """min of xi_1 eta_1 / |eta|^2 over random xi in E_k, eta in E_{k-1}."""
    rng = np.random.default_rng(seed)

    def sample_E(j, count):
        pts = []
        lo, hi = 2.0 ** (j - 1), 2.0**j
        while sum(len(p) for p in pts) < count:
            x = rng.uniform(-hi, hi, size=(4 * count, d))
            x[:, 0] = rng.uniform(lo, hi, size=4 * count)
            r = np.linalg.norm(x, axis=1)
            pts.append(x[(r <= hi) & (x[:, 0] >= lo)])
        return np.concatenate(pts)[:count]

    xi, eta = sample_E(k, samples), sample_E(k - 1, samples)
    return float(np.min(xi[:, 0] * eta[:, 0] / np.sum(eta**2, axis=1)))


# ---------------------------------------------------------------------------
# Solver-coupled barrier checks


@dataclass
class BarrierCheck:
    k: int
    checked_times: int = 0
    min_ratio: float = math.inf
    worst_time: float = float("nan")
    violations: int = 0
    skipped: str = ""

    @property
    def passed(self) -> bool:
        return not self.skipped and self.checked_times > 0 and self.violations == 0

    def to_dict(self) -> dict:
        return {"k": self.k, "checked_times": self.checked_times,
                "min_ratio": self.min_ratio if math.isfinite(self.min_ratio) else None,
                "worst_time": self.worst_time, "violations": self.violations,
                "skipped": self.skipped, "pass": self.passed}


def _level_positions(level: LadderLevel, grid, cutoff: Optional[int]) -> Optional[tuple]:
    """Array indices of the level box on the solver grid, or None if unresolved."""
    if not math.isclose(level.h, grid.dxi, rel_tol=1e-12):
        return None
    limit = grid.n // 3 if cutoff is None else cutoff
    pos = []
    for ax in range(level.d):
        idx = level.origin[ax] + np.arange(level.shape.shape[ax])
        if np.any(np.abs(idx) > limit):
            return None
        pos.append(np.mod(idx, grid.n))
    return tuple(np.ix_(*pos))


class BarrierMonitor:
    """Solver diagnostics hook checking u_hat_t >= A^{2^k} c_k e^{-2^k t} w_k.

    A point counts as a violation when Re u_hat falls below the barrier by more
    than ``rel_tol`` times the current coefficient peak. Ratios are reported
    only where the barrier itself exceeds that tolerance.
    """

    def __init__(self, ladder: Ladder, A: float, k_range: Iterable[int], grid,
                 cutoff: Optional[int] = None, rel_tol: float = 1e-10):
        self.ladder, self.A, self.rel_tol = ladder, A, rel_tol
        self.checks = {}
        self._pos = {}
        for k in k_range:
            chk = BarrierCheck(k)
            if k > ladder.k_max:
                chk.skipped = "level not built"
            else:
                pos = _level_positions(ladder.levels[k], grid, cutoff)
                if pos is None:
                    chk.skipped = "level support not resolved inside the dealiased band"
                else:
                    self._pos[k] = pos
            self.checks[k] = chk

    def __call__(self, f) -> dict:
        c = f.coeffs[0]
        tol = self.rel_tol * float(np.max(np.abs(c)))
        out = {}
        for k, pos in self._pos.items():
            lvl = self.ladder.levels[k]
            if f.time < lvl.t_k:
                continue
            chk = self.checks[k]
            on = lvl.shape > 0
            with np.errstate(divide="ignore"):
                logb = (lvl.log_prefactor(self.A) - 2.0**k * f.time) + np.log(lvl.shape[on])
            # barrier values beyond float range cannot be compared
            finite = logb < 700.0
            b = np.exp(np.where(finite, logb, -np.inf))
            u = np.real(c[pos][on])
            bad = finite & (u < b - tol)
            chk.violations += int(np.count_nonzero(bad))
            chk.checked_times += 1
            sig = finite & (b > tol)
            if np.any(sig):
                r = float(np.min(u[sig] / b[sig]))
                if r < chk.min_ratio:
                    chk.min_ratio, chk.worst_time = r, f.time
            out[k] = chk.min_ratio
        return out

    def results(self) -> List[BarrierCheck]:
        return [self.checks[k] for k in sorted(self.checks)]


def solver_ladder(field0, A: float, k_max: int, kernel: str = "dot") -> Ladder:
    """Ladder built on the solver lattice from u_hat_0 / A, without coarsening."""
    grid = field0.grid
    if grid.dxi > 1 / 16 + 1e-15:
        raise CertificateError(f"solver lattice spacing {grid.dxi} too coarse; need <= 1/16")
    level0 = level_from_coefficients(field0.coeffs[0], grid.dxi, [grid.index] * grid.d, A)
    return build_ladder(grid.d, k_max, kernel=kernel, coarsen=False, level0=level0)


def verify_solution_barrier(fields: Iterable, ladder: Ladder, A: float,
                            k_range: Iterable[int], cutoff: Optional[int] = None,
                            rel_tol: float = 1e-10) -> List[BarrierCheck]:
    fields = list(fields)
    if not fields:
        raise ValueError("no snapshots to check")
    mon = BarrierMonitor(ladder, A, k_range, fields[0].grid, cutoff, rel_tol)
    for f in fields:
        mon(f)
    return mon.results()


def base_barrier_defect(f, u0, rel_tol: float = 1e-10) -> float:
    """min over the lattice of u_hat_t - e^{-t|xi|^2} u_hat_0, in units of rel_tol * scale.

    Values >= -1 mean the base lower barrier holds within tolerance.
    """
    lin = np.exp(-f.time * f.grid.xi2) * np.real(u0.coeffs)
    scale = max(float(np.max(np.abs(f.coeffs))), float(np.max(np.abs(u0.coeffs))))
    return float(np.min(np.real(f.coeffs) - lin) / (rel_tol * scale))


# ---------------------------------------------------------------------------
# Reports


MODES = ("recursion_only", "solver_coupled")


@dataclass
class CertificateReport:
    d: int
    k_max: int
    mode: str
    a: float
    A: float
    A_star: float
    A_closed_form: float
    L_inf: float
    levels: list
    steps: list
    divergence_table: list
    checks: dict
    observations: dict = field(default_factory=dict)
    barrier: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "d": self.d, "k_max": self.k_max, "mode": self.mode, "a": self.a, "A": self.A,
            "A_star": self.A_star, "A_closed_form": self.A_closed_form, "L_inf": self.L_inf,
            "t_star": T_STAR, "levels": self.levels, "steps": self.steps,
            "divergence_table": self.divergence_table, "checks": self.checks,
            "observations": self.observations, "barrier": self.barrier,
            "solver": self.solver, "pass": self.passed,
        }


def _step_dict(st: InductionStep) -> dict:
    return {"k": st.k, "gain": st.gain, "margin": st.closed_form_margin, "argmin_t": st.argmin_t,
            "argmin_xi": st.argmin_xi, "kernel_average_min": st.factor_min}


def _ladder_checks(ladder: Ladder, A: float, a: float) -> tuple:
    lv = ladder.levels
    kf = [kernel_factor_min(k, ladder.d, samples=4000, seed=k)
          for k in range(1, min(ladder.k_max, 8) + 1)]
    checks = {
        "support_in_E": all(l.support_ok for l in lv),
        "unit_mass": all(abs(l.mass() - 1.0) <= 1e-12 for l in lv),
        "nonnegative": all(bool(np.all(l.shape >= 0)) for l in lv),
        "gains_finite": all(0 < l.gain < math.inf for l in lv),
        "kernel_factor_ge_half": all(v >= 0.5 - 1e-12 for v in kf),
    }
    terms = besov_lowerbound(ladder, a, A)
    obs = {
        "closed_form_margins_close": all(l.closed_form_margin >= 1 for l in lv),
        "min_closed_form_margin": min(l.closed_form_margin for l in lv),
        "support_in_ball": all(support_in_ball(l) for l in lv),
        "kernel_factor_min": min(kf) if kf else None,
        "log_terms_at_A": terms,
    }
    return checks, obs, terms


def certify(d: int, k_max: int, A="auto", a: float = 0.0, mode: str = "recursion_only",
            points_per_octave: int = 32, kernel: str = "first_component",
            n: int = 512, period: float = 32 * math.pi, dt: float = 1e-3,
            t_end: float = 0.25, threshold_k_max: int = 6) -> CertificateReport:
    """Build the ladder, estimate A*, and run the enabled checks.

    ``A="auto"`` selects 2 A* in recursion_only mode and 4 A* in
    solver_coupled mode, with A* always taken from a recursion-only ladder.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "recursion_only" and not 3 <= k_max <= 40:
        raise ValueError("recursion_only needs 3 <= k_max <= 40")
    if mode == "solver_coupled" and not 0 <= k_max <= 3:
        raise ValueError("solver_coupled needs k_max <= 3")
    K = k_max if mode == "recursion_only" else max(3, threshold_k_max)
    base = build_ladder(d, K, points_per_octave, kernel)
    est = estimate_threshold(base, a)
    if A == "auto":
        A = (2.0 if mode == "recursion_only" else 4.0) * est["A_star"]
    A = float(A)
    if not A > 0:
        raise ValueError("amplitude must be positive")
    observations = {"threshold_rel_error": est["A_star"] / est["A_closed_form"] - 1.0,
                    "L_k": est["L_k"]}

    if mode == "recursion_only":
        checks, obs, terms = _ladder_checks(base, A, a)
        observations.update(obs)
        if A > est["A_star"]:
            checks["divergent_at_A"] = is_divergent(terms)
        ladder, barrier, solver_info = base, [], {}
    else:
        from .models import build_preset, fourier_bump
        from .solver import SolverConfig, run
        from .spectral import TorusGrid

        grid = TorusGrid(d, n, period)
        u0 = fourier_bump(grid, A).field
        ladder = solver_ladder(u0, A, k_max)
        checks, obs, _ = _ladder_checks(ladder, A, a)
        checks.pop("kernel_factor_ge_half")
        observations.update(obs)
        mon = BarrierMonitor(ladder, A, range(k_max + 1), grid)
        cfg = SolverConfig(dt=dt, t_end=t_end, snapshot_every=10**9, diagnostics_every=1,
                           halfspace=True)
        traj = run(build_preset("gravitating", d), u0, cfg, diagnostics=mon)
        barrier = [b.to_dict() for b in mon.results()]
        checks["barrier"] = all(b.passed for b in mon.results())
        solver_info = {"status": traj.status, "final_time": traj.final_time,
                       "max_coeff": traj.last.max_abs(), "n": n, "period": period, "dt": dt}
    levels = [l.to_dict(A) for l in ladder.levels]
    return CertificateReport(d, ladder.k_max, mode, a, A, est["A_star"], est["A_closed_form"],
                             est["L_inf"], levels, [_step_dict(s) for s in ladder.steps],
                             est["divergence_table"], checks, observations, barrier,
                             solver_info)
