"""
Time integration of the mild-solution equation in Fourier variables.

The heat semigroup e^{-t|xi|^2} is applied exactly by every scheme; only the
Duhamel integral of the quadratic term is approximated.

    etd2rk  second-order exponential time differencing (Cox-Matthews)
    ifrk4   classical four-stage Runge-Kutta on the integrating-factor variable
    picard  global fixed-point iteration of the Duhamel map on [0, T] with the
            trapezoid rule in s and exact propagator weights
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .models import InitialData, SystemSpec, _nonlinear_coeffs
from .spectral import SpectralField, TorusGrid, _poisson_gradient_symbol, forward_transform

log = logging.getLogger(__name__)

SCHEMES = ("etd2rk", "ifrk4", "picard")
COMPLETED = "completed"
OVERFLOW = "overflow_detected"
PICARD_DIVERGED = "picard_diverged"


@dataclass
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 0.1
    scheme: str = "etd2rk"
    snapshot_every: int = 10
    diagnostics_every: int = 10
    picard_tol: float = 1e-12
    picard_cap: int = 50
    overflow_guard: float = 1e280
    dealias_cutoff: Optional[int] = None
    halfspace: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.picard_tol > 0:
            raise ValueError("picard tolerance must be positive")
        if self.picard_cap < 1:
            raise ValueError("picard iteration cap must be >= 1")
        if self.snapshot_every < 1 or self.diagnostics_every < 1:
            raise ValueError("schedules must be >= 1 step")

    @property
    def nsteps(self) -> int:
        return max(1, int(np.ceil(self.t_end / self.dt - 1e-9)))

    @property
    def dt_effective(self) -> float:
        return self.t_end / self.nsteps


@dataclass
class Trajectory:
    times: List[float] = field(default_factory=list)
    fields: List[SpectralField] = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    status: Optional[str] = None
    final_time: float = 0.0

    def add(self, f: SpectralField) -> None:
        if self.times and not f.time > self.times[-1]:
            raise ValueError("snapshot times must be strictly increasing")
        self.times.append(f.time)
        self.fields.append(f)

    def finish(self, status: str, t: float) -> None:
        if self.status is not None:
            raise RuntimeError("trajectory status already set")
        self.status = status
        self.final_time = t

    @property
    def last(self) -> SpectralField:
        return self.fields[-1]


def _phi_functions(z: np.ndarray):
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, series near 0."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    phi1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (em1 - zs) / zs**2)
    return phi1, phi2


class Stepper:
    """Precomputed propagators and nonlinear-term data for one (grid, dt)."""

    def __init__(self, spec: SystemSpec, grid: TorusGrid, dt: float, scheme: str = "etd2rk",
                 cutoff: Optional[int] = None, halfspace: bool = False):
        if scheme not in ("etd2rk", "ifrk4"):
            raise ValueError(f"Stepper supports etd2rk and ifrk4, got {scheme!r}")
        self.spec, self.grid, self.dt, self.scheme = spec, grid, dt, scheme
        self.keep = grid.dealias_mask(cutoff)
        if halfspace:
            self.keep = self.keep & grid.halfspace_mask()
        self.coupling = spec.coupling_on(grid)
        self.symbol = _poisson_gradient_symbol(grid)
        self.linear_only = spec.constant_coupling and not np.any(self.coupling)
        z = -dt * grid.xi2
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        self.phi1, self.phi2 = _phi_functions(z)

    def N(self, uh: np.ndarray) -> np.ndarray:
        if self.linear_only:
            return np.zeros_like(uh)
        return _nonlinear_coeffs(self.spec, uh, self.grid, self.keep,
                                 coupling=self.coupling, symbol=self.symbol)

    def __call__(self, uh: np.ndarray) -> np.ndarray:
        dt = self.dt
        if self.linear_only:
            return self.E * uh
        if self.scheme == "etd2rk":
            n0 = self.N(uh)
            a = self.E * uh + dt * self.phi1 * n0
            return a + dt * self.phi2 * (self.N(a) - n0)
        E, E2 = self.E, self.E2
        k1 = self.N(uh)
        k2 = self.N(E2 * (uh + 0.5 * dt * k1))
        k3 = self.N(E2 * uh + 0.5 * dt * k2)
        k4 = self.N(E * uh + dt * E2 * k3)
        return E * uh + dt / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)


def step(spec: SystemSpec, f: SpectralField, dt: float, scheme: str = "etd2rk",
         cutoff: Optional[int] = None, halfspace: bool = False) -> SpectralField:
    """Advance one step of size dt."""
    stepper = Stepper(spec, f.grid, dt, scheme, cutoff, halfspace)
    return f.replace(coeffs=stepper(f.coeffs), time=f.time + dt)


def _as_field(u0) -> SpectralField:
    if isinstance(u0, InitialData):
        return u0.field
    if isinstance(u0, SpectralField):
        return u0
    raise TypeError(f"expected InitialData or SpectralField, got {type(u0)!r}")


def run(spec: SystemSpec, u0, config: SolverConfig,
        diagnostics: Optional[Callable[[SpectralField], object]] = None) -> Trajectory:
    """Integrate from u0 to config.t_end, or until the overflow guard trips.

    Snapshots are taken at t=0, every ``snapshot_every`` steps and at the stop
    time. ``diagnostics`` (if given) is evaluated on the same kind of schedule
    and its return values collected in ``Trajectory.diagnostics``.
    """
    f0 = _as_field(u0).replace(time=0.0)
    if config.scheme == "picard":
        res = picard_solve(spec, f0, config.t_end, config.picard_tol, config.picard_cap,
                           dt=config.dt, cutoff=config.dealias_cutoff,
                           halfspace=config.halfspace, guard=config.overflow_guard)
        traj = Trajectory()
        for j, fj in enumerate(res.fields):
            if j % config.snapshot_every == 0 or j == len(res.fields) - 1:
                traj.add(fj)
                if diagnostics is not None:
                    traj.diagnostics.append(diagnostics(fj))
        traj.finish(res.status if res.status != COMPLETED else COMPLETED, res.times[-1])
        return traj

    nsteps, dt = config.nsteps, config.dt_effective
    stepper = Stepper(spec, f0.grid, dt, config.scheme, config.dealias_cutoff,
                      config.halfspace)
    traj = Trajectory()
    traj.add(f0)
    if diagnostics is not None:
        traj.diagnostics.append(diagnostics(f0))
    uh = np.array(f0.coeffs)
    t = 0.0
    for j in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            new = stepper(uh)
            peak = np.max(np.abs(new))
        if not np.isfinite(peak) or peak > config.overflow_guard:
            log.info("overflow guard tripped at t=%.6g (peak %.3g)", j * dt, peak)
            if traj.times[-1] < t:
                last = f0.replace(coeffs=uh, time=t)
                traj.add(last)
                if diagnostics is not None:
                    traj.diagnostics.append(diagnostics(last))
            traj.finish(OVERFLOW, t)
            return traj
        uh = new
        t = j * dt
        snap = j % config.snapshot_every == 0 or j == nsteps
        diag = diagnostics is not None and (j % config.diagnostics_every == 0 or j == nsteps)
        if snap or diag:
            fj = f0.replace(coeffs=uh, time=t)
            if snap:
                traj.add(fj)
            if diag:
                traj.diagnostics.append(diagnostics(fj))
    traj.finish(COMPLETED, t)
    return traj


@dataclass
class PicardResult:
    times: np.ndarray
    fields: List[SpectralField]
    iterations: int
    contraction_ratio: float
    status: str
    differences: List[float]


def picard_solve(spec: SystemSpec, u0, T: float, tol: float = 1e-12, cap: int = 50,
                 dt: float = 1e-3, cutoff: Optional[int] = None, halfspace: bool = False,
                 guard: float = 1e280,
                 on_iterate: Optional[Callable[[int, np.ndarray], None]] = None) -> PicardResult:
    """Fixed-point iteration u <- e^{t Lap} u0 + B(u, u) on the node lattice of [0, T].

    B is discretized by the composite trapezoid rule in s with exact weights
    e^{-(t_j - s_i)|xi|^2}, evaluated by the recursion
    I_j = E I_{j-1} + dt/2 (E N_{j-1} + N_j).

    Convergence is declared when the sup over nodes and modes of the change
    between iterates is <= tol * (sup of the new iterate). ``on_iterate`` is
    called with (iteration, node array) after every iteration.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    f0 = _as_field(u0)
    grid = f0.grid
    J = max(1, int(np.ceil(T / dt - 1e-9)))
    h = T / J
    stepper = Stepper(spec, grid, h, "etd2rk", cutoff, halfspace)
    times = np.arange(J + 1) * h
    free = np.empty((J + 1,) + f0.coeffs.shape, dtype=np.complex128)
    free[0] = f0.coeffs
    for j in range(1, J + 1):
        free[j] = stepper.E * free[j - 1]
    U = free.copy()
    diffs: List[float] = []
    status = PICARD_DIVERGED
    iterations = 0
    for p in range(1, cap + 1):
        iterations = p
        with np.errstate(over="ignore", invalid="ignore"):
            N = np.stack([stepper.N(U[j]) for j in range(J + 1)])
            new = np.empty_like(U)
            I = np.zeros_like(U[0])
            new[0] = free[0]
            for j in range(1, J + 1):
                I = stepper.E * I + 0.5 * h * (stepper.E * N[j - 1] + N[j])
                new[j] = free[j] + I
            peak = np.max(np.abs(new))
            diff = np.max(np.abs(new - U))
        if not np.isfinite(peak) or peak > guard:
            diffs.append(float("inf"))
            break
        diffs.append(float(diff))
        U = new
        if on_iterate is not None:
            on_iterate(p, U)
        if diff <= tol * max(peak, np.finfo(float).tiny):
            status = COMPLETED
            break
    ratio = 0.0
    finite = [x for x in diffs if np.isfinite(x)]
    if len(finite) >= 2 and finite[-2] > 0:
        ratio = finite[-1] / finite[-2]
    if not np.isfinite(diffs[-1]):
        ratio = float("inf")
    fields = [SpectralField(grid, U[j], float(times[j])) for j in range(J + 1)]
    return PicardResult(times, fields, iterations, ratio, status, diffs)


def scaling_covariance_check(spec: SystemSpec, u0: Callable, grid: TorusGrid, lam: float,
                             t: float, dt: float = 1e-3, scheme: str = "etd2rk",
                             snapshot_every: int = 5) -> float:
    """Max relative sup discrepancy between a run and its parabolic rescaling.

    ``u0`` maps the list of centered physical coordinates to samples of shape
    ``(m,) + grid.shape``. Run A uses period L and horizon t; run B uses period
    L/lam, data lam^alpha u0(lam x) and horizon t/lam^2, at equal n. Run B at
    time s is compared with lam^alpha times run A at lam^2 s.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    a = spec.alpha
    grid_b = TorusGrid(grid.d, grid.n, grid.period / lam)
    ua = np.asarray(u0(grid.x_centered), dtype=float)
    ub = lam**a * np.asarray(u0([lam * c for c in grid_b.x_centered]), dtype=float)
    cfg_a = SolverConfig(dt=dt, t_end=t, scheme=scheme, snapshot_every=snapshot_every)
    cfg_b = SolverConfig(dt=dt / lam**2, t_end=t / lam**2, scheme=scheme,
                         snapshot_every=snapshot_every)
    ta = run(spec, forward_transform(ua, grid), cfg_a)
    tb = run(spec, forward_transform(ub, grid_b), cfg_b)
    if len(ta.fields) != len(tb.fields):
        raise RuntimeError("rescaled runs produced different snapshot counts")
    worst = 0.0
    for fa, fb in zip(ta.fields, tb.fields):
        pa = lam**a * fa.physical()
        pb = fb.physical()
        scale = np.max(np.abs(pa))
        if scale > 0:
            worst = max(worst, float(np.max(np.abs(pb - pa)) / scale))
    return worst


@dataclass
class SmallnessScan:
    """Largest weighted-decay size eta found stable, and the smallest found unstable."""

    stable: float
    unstable: float
    runs: list


def _decays(spec: SystemSpec, grid: TorusGrid, eta: float, cfg: SolverConfig) -> tuple:
    from .models import weighted_decay

    u0 = weighted_decay(grid, eta, spec.m)
    sup0 = float(np.max(np.abs(u0.field.physical())))
    tr = run(spec, u0, cfg)
    sup1 = float(np.max(np.abs(tr.last.physical()))) if tr.status == COMPLETED else np.inf
    return tr.status == COMPLETED and sup1 <= sup0, {
        "eta": eta, "status": tr.status, "final_time": tr.final_time,
        "sup_initial": sup0, "sup_final": sup1}


def smallness_threshold(spec: SystemSpec, grid: TorusGrid, etas, t_end: float = 2.0,
                        dt: float = 2e-3, bisections: int = 4) -> SmallnessScan:
    """Empirical stability threshold for weighted_decay data of size eta.

    A run counts as stable when it completes and its final sup norm does not
    exceed the initial one. The sorted ``etas`` are scanned until the first
    unstable value, then the bracket is refined by geometric bisection.
    """
    etas = sorted(float(e) for e in etas)
    if not etas or etas[0] <= 0:
        raise ValueError("etas must be positive")
    cfg = SolverConfig(dt=dt, t_end=t_end, snapshot_every=10**9)
    runs, lo, hi = [], 0.0, np.inf
    for eta in etas:
        ok, info = _decays(spec, grid, eta, cfg)
        runs.append(info)
        if not ok:
            hi = eta
            break
        lo = eta
    if lo > 0 and np.isfinite(hi):
        for _ in range(bisections):
            mid = float(np.sqrt(lo * hi))
            ok, info = _decays(spec, grid, mid, cfg)
            runs.append(info)
            lo, hi = (mid, hi) if ok else (lo, mid)
    return SmallnessScan(lo, float(hi), runs)
