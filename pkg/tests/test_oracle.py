import math

import numpy as np
import pytest

from nlpde import oracle
from nlpde.models import build_preset, nonlinear_term, random_hermitian
from nlpde.solver import SolverConfig, run
from nlpde.spectral import TorusGrid

GRAV = build_preset("gravitating", 2)


def _small_data(amp=0.5, R=8, n=32, period=4 * math.pi, seed=2):
    g = TorusGrid(2, n, period)
    u = random_hermitian(g, amp, 5, seed=seed).field
    lat = oracle.SmallLattice.from_field(u, R)
    return g, lat


class TestSmallLattice:
    def test_desk_bound(self):
        with pytest.raises(ValueError):
            oracle.SmallLattice(3, 30, np.zeros((1, 61, 61, 61)))

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            oracle.SmallLattice(2, 2, np.zeros((1, 5, 4)))

    def test_field_roundtrip(self):
        g, lat = _small_data()
        back = oracle.SmallLattice.from_field(lat.to_field(g), lat.R)
        assert np.array_equal(back.amplitudes, lat.amplitudes)

    def test_modes_order(self):
        lat = oracle.SmallLattice(2, 1, np.zeros((1, 3, 3)))
        assert lat.modes()[0].tolist() == [-1, -1] and lat.modes()[4].tolist() == [0, 0]


class TestPairSums:
    def test_matches_unaliased_spectral_term(self):
        # R = 4 data on n = 64 with the cutoff at 2R keeps every product mode exact
        g = TorusGrid(2, 64, 4 * math.pi)
        lat = oracle.SmallLattice.from_field(random_hermitian(g, 1.0, 3, seed=5).field, 8)
        f = lat.to_field(g)
        spec_N = nonlinear_term(GRAV, f, cutoff=31)
        direct = oracle.PairTable(lat).apply(GRAV.coupling, lat.amplitudes.reshape(1, -1))
        sub = oracle.SmallLattice.from_field(spec_N, 8).amplitudes.reshape(1, -1)
        assert np.max(np.abs(sub - direct)) <= 1e-12 * np.max(np.abs(direct))

    def test_zero_mode_vanishes(self):
        g, lat = _small_data()
        out = oracle.PairTable(lat).apply(GRAV.coupling, lat.amplitudes.reshape(1, -1))
        centre = (len(out[0]) - 1) // 2
        assert out[0, centre] == 0


class TestPicardDirect:
    def test_matches_spectral_solver(self):
        g, lat = _small_data()
        ref = oracle.picard_direct(GRAV, lat, 0.05, 50)
        assert ref.status == "completed" and max(ref.iterations) < 100
        tr = run(GRAV, lat.to_field(g),
                 SolverConfig(dt=1e-3, t_end=0.05, snapshot_every=10**6, dealias_cutoff=8))
        assert oracle.sup_discrepancy(tr.last, ref.states[-1].to_field(g)) <= 1e-6

    def test_linear_part_exact(self):
        zero = build_preset("general", 2, coupling=np.zeros((1, 1, 1)))
        g, lat = _small_data()
        ref = oracle.picard_direct(zero, lat, 0.1, 7)
        expected = np.exp(-0.1 * g.xi2) * lat.to_field(g).coeffs
        got = ref.states[-1].to_field(g).coeffs
        assert np.max(np.abs(got - expected)) <= 1e-13 * np.max(np.abs(expected))

    def test_mismatched_truncation_detected(self):
        g, lat = _small_data(amp=4.0)
        ref = oracle.picard_direct(GRAV, lat, 0.05, 50)
        tr = run(GRAV, lat.to_field(g), SolverConfig(dt=1e-3, t_end=0.05, snapshot_every=10**6))
        assert oracle.sup_discrepancy(tr.last, ref.states[-1].to_field(g)) > 1e-6

    def test_rejects_variable_coupling(self):
        from nlpde.models import SystemSpec, modulated_coupling

        spec = SystemSpec(2, 1, modulated_coupling([[[1.0]]], 0.5, (1.0, 0.0)))
        _, lat = _small_data()
        with pytest.raises(ValueError):
            oracle.picard_direct(spec, lat, 0.05, 5)


class TestKernelQuadrature:
    @pytest.mark.parametrize("r", [0.5, 2.0, 10.0])
    def test_shell_theorem(self, r):
        f = oracle.decay_profile(2.0)
        assert oracle.kernel_convolution_value(f, r) == pytest.approx(
            oracle.newton_field_shell(f, r), rel=1e-9)

    def test_gaussian_shell(self):
        f = lambda rho: np.exp(-np.asarray(rho) ** 2)
        assert oracle.kernel_convolution_value(f, 1.3) == pytest.approx(
            oracle.newton_field_shell(f, 1.3), rel=1e-9)

    def test_split_pieces_positive(self):
        parts = oracle.kernel_split(oracle.decay_profile(2.0), 16.0)
        assert all(v > 0 for v in parts.values())

    def test_ratio_finite_and_stable(self):
        a = oracle.kernel_convolution_quadrature(level=0)
        b = oracle.kernel_convolution_quadrature(level=1)
        ch = oracle.refinement_change(a.ratios, b.ratios, ["ratio"])["ratio"]
        assert math.isfinite(a.ratios["ratio"]) and ch <= 0.02

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            oracle.kernel_convolution_quadrature(d=2)


class TestDuhamel:
    @pytest.mark.parametrize("t", [0.01, 1.0, 25.0])
    def test_heat_derivative_l1(self, t):
        assert oracle.heat_derivative_l1(t) == pytest.approx(1 / math.sqrt(math.pi * t), rel=1e-10)

    def test_refinement_change(self):
        assert oracle.refinement_change({"x": 2.0}, {"x": 2.1}, ["x"])["x"] == pytest.approx(0.05)
        assert oracle.refinement_change({"x": 0.0}, {"x": 0.0}, ["x"])["x"] == 0.0

    @pytest.mark.slow
    def test_ratios_stable(self):
        a = oracle.duhamel_operator_quadrature(level=0)
        b = oracle.duhamel_operator_quadrature(level=1)
        ch = oracle.refinement_change(a.ratios, b.ratios, ["ratio_space", "ratio_time"])
        assert all(math.isfinite(a.ratios[k]) for k in ("ratio_space", "ratio_time"))
        assert max(ch.values()) <= 0.05
