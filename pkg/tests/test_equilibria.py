"""Moments, entropy, Bose-Einstein equilibria and the fitting routines."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnsolve.equilibria import (ZETA_3_2, EquilibriumParams, Moments,
                                bose_einstein_field, compute_moments,
                                condensate_fraction, critical_temperature,
                                detailed_balance_residual, entropy_density,
                                fit_equilibrium)
from bnsolve.geometry import KernelSpec
from bnsolve.grids import (TorusGrid, VelocityGrid, build_sphere_quadrature,
                           field_from_function)

from oracles import oracle_polylog

TG1 = TorusGrid(1)


class TestEntropyDensity:
    def test_zero_at_vacuum(self):
        assert entropy_density(np.array(0.0)) == 0.0

    def test_known_value(self):
        # (1+1)ln2 - 0 = 2 ln 2
        assert np.isclose(entropy_density(np.array(1.0)), 2.0 * np.log(2.0))

    @given(st.floats(0.0, 1e6))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, f):
        assert entropy_density(np.array(f)) >= 0.0


class TestComputeMoments:
    def test_gaussian_moments(self):
        vg = VelocityGrid(7.0, 48)
        f = field_from_function(
            lambda vx, vy, vz: np.exp(-(vx ** 2 + vy ** 2 + vz ** 2) / 2.0),
            vg, TG1)
        m = compute_moments(f)
        ref = (2.0 * np.pi) ** 1.5
        assert np.isclose(m.mass, ref, rtol=1e-3)
        assert np.allclose(m.momentum, 0.0, atol=1e-10)
        assert np.isclose(m.energy, 3.0 * ref, rtol=1e-3)

    def test_ordered_vs_fast_agree(self):
        rng = np.random.default_rng(5)
        vg = VelocityGrid(2.0, 8)
        vals = rng.random((1, 1, 1, 8, 8, 8))
        from bnsolve.grids import DistributionField
        f = DistributionField(vals, vg, TG1)
        a = compute_moments(f, ordered=True)
        b = compute_moments(f, ordered=False)
        assert np.isclose(a.mass, b.mass, rtol=1e-13)
        assert np.isclose(a.entropy, b.entropy, rtol=1e-12)


class TestEquilibriumParams:
    def test_complementarity_enforced(self):
        with pytest.raises(ValueError):
            EquilibriumParams(u=np.zeros(3), T=1.0, mu=-1.0, m0=0.5)
        with pytest.raises(ValueError):
            EquilibriumParams(u=np.zeros(3), T=1.0, mu=0.5)
        with pytest.raises(ValueError):
            EquilibriumParams(u=np.zeros(3), T=-1.0, mu=-1.0)
        EquilibriumParams(u=np.zeros(3), T=1.0, mu=0.0, m0=0.5)  # valid


class TestBoseEinsteinField:
    def test_matches_formula(self):
        p = EquilibriumParams(u=np.zeros(3), T=1.0, mu=-1.0)
        vg = VelocityGrid(4.0, 8)
        f = bose_einstein_field(p, vg, TG1)
        vx, vy, vz = vg.mesh
        expected = 1.0 / (np.exp(((vx ** 2 + vy ** 2 + vz ** 2) + 1.0) / 2.0)
                          - 1.0)
        assert np.allclose(f.values[0, 0, 0], expected, rtol=1e-13)

    def test_singularity_rejected(self):
        # mu = 0 with a node at u: odd grid has a center at the origin
        p = EquilibriumParams(u=np.zeros(3), T=1.0, mu=0.0)
        vg = VelocityGrid(2.5, 5)
        with pytest.raises(ValueError):
            bose_einstein_field(p, vg, TG1)


class TestCriticalTemperature:
    def test_unit_roundtrip(self):
        rho = (2.0 * np.pi) ** 1.5 * ZETA_3_2
        assert np.isclose(critical_temperature(rho), 1.0, rtol=1e-14)

    def test_zeta_against_series_oracle(self):
        # the z = 1 series converges like N^{-1/2}; close it with the
        # Euler-Maclaurin tail 2 N^{-1/2} - N^{-3/2} / 2 (remainder O(N^-5/2))
        n_terms = 2_000_000
        partial = oracle_polylog(1.5, 1.0, terms=n_terms, tol=0.0)
        tail = 2.0 / np.sqrt(n_terms) - 0.5 * n_terms ** -1.5
        assert np.isclose(ZETA_3_2, partial + tail, atol=1e-9)
        assert np.isclose(ZETA_3_2, 2.612375, atol=1e-6)

    def test_inversion_roundtrip(self):
        for T in (0.3, 1.0, 2.7):
            rho = (2.0 * np.pi * T) ** 1.5 * ZETA_3_2
            assert np.isclose(critical_temperature(rho), T, rtol=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            critical_temperature(0.0)


class TestFitEquilibrium:
    def test_continuum_moment_roundtrip(self):
        # exact continuum moments of (T, mu) = (1, -1)
        z = np.exp(-0.5)
        mass = (2 * np.pi) ** 1.5 * oracle_polylog(1.5, z)
        energy = 3.0 * (2 * np.pi) ** 1.5 * oracle_polylog(2.5, z)
        m = Moments(time=0.0, mass=mass, momentum=np.zeros(3), energy=energy,
                    entropy=0.0, linf=0.0)
        p = fit_equilibrium(m)
        assert abs(p.T - 1.0) < 1e-9
        assert abs(p.mu + 1.0) < 1e-9
        assert p.m0 == 0.0
        assert p.mu * p.m0 == 0.0

    def test_grid_moment_roundtrip(self):
        p0 = EquilibriumParams(u=np.zeros(3), T=1.0, mu=-1.0)
        vg = VelocityGrid(8.0, 64)
        f = bose_einstein_field(p0, vg, TG1)
        p = fit_equilibrium(compute_moments(f, ordered=False))
        assert abs(p.T - 1.0) < 0.01
        assert abs(p.mu + 1.0) < 0.02
        assert p.m0 == 0.0

    def test_critical_boundary(self):
        # mass and energy exactly at the mu = 0 relation for T = 1
        mass = (2 * np.pi) ** 1.5 * ZETA_3_2
        energy = 3.0 * (2 * np.pi) ** 1.5 * float(oracle_polylog(2.5, 1.0,
                                                                 terms=200000))
        m = Moments(time=0.0, mass=mass, momentum=np.zeros(3), energy=energy,
                    entropy=0.0, linf=0.0)
        p = fit_equilibrium(m)
        assert p.mu == 0.0
        assert abs(p.T - 1.0) < 1e-4
        assert p.m0 < 1e-3 * mass

    def test_condensed_regime(self):
        # colder than critical: energy below the critical relation
        T = 1.0
        mass = (2 * np.pi * T) ** 1.5 * ZETA_3_2 * 2.0  # twice critical mass
        energy = 3.0 * T * (2 * np.pi * T) ** 1.5 * oracle_polylog(2.5, 1.0)
        m = Moments(time=0.0, mass=mass, momentum=np.zeros(3), energy=energy,
                    entropy=0.0, linf=0.0)
        p = fit_equilibrium(m)
        assert p.mu == 0.0
        assert p.m0 > 0.0
        assert p.mu * p.m0 == 0.0
        # the regular part carries the full energy at the fitted T
        assert np.isclose(p.m0 + (2 * np.pi * p.T) ** 1.5 * ZETA_3_2, mass,
                          rtol=1e-10)

    def test_drift_recovered(self):
        z = np.exp(-0.5)
        mass = (2 * np.pi) ** 1.5 * oracle_polylog(1.5, z)
        e_th = 3.0 * (2 * np.pi) ** 1.5 * oracle_polylog(2.5, z)
        u = np.array([0.3, -0.1, 0.2])
        m = Moments(time=0.0, mass=mass, momentum=mass * u,
                    energy=e_th + mass * float(u @ u), entropy=0.0, linf=0.0)
        p = fit_equilibrium(m)
        assert np.allclose(p.u, u, atol=1e-12)
        assert abs(p.T - 1.0) < 1e-9

    def test_rejects_bad_moments(self):
        with pytest.raises(ValueError):
            fit_equilibrium(Moments(0.0, -1.0, np.zeros(3), 1.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            fit_equilibrium(Moments(0.0, 1.0, np.zeros(3), 0.0, 0.0, 0.0))


class TestDetailedBalance:
    def test_residual_shrinks_with_resolution(self):
        # second-order convergence needs dv well below the unit core width
        # of f_BE, so keep the box tight around the occupied region
        p = EquilibriumParams(u=np.zeros(3), T=1.0, mu=-1.0)
        kern = KernelSpec(b0=1.0, gamma=0.1)
        quad = build_sphere_quadrature(2)
        res = [detailed_balance_residual(p, kern, quad, VelocityGrid(1.5, n),
                                         TG1) for n in (12, 24)]
        assert res[1] < res[0] / 3.0

    def test_requires_negative_mu(self):
        p = EquilibriumParams(u=np.zeros(3), T=1.0, mu=0.0)
        with pytest.raises(ValueError):
            detailed_balance_residual(p, KernelSpec(b0=1.0, gamma=0.1),
                                      build_sphere_quadrature(2),
                                      VelocityGrid(4.0, 8), TG1)


class TestCondensateFraction:
    def test_concentrated_field(self):
        vg = VelocityGrid(2.0, 8)
        f = field_from_function(
            lambda vx, vy, vz: np.exp(-(vx ** 2 + vy ** 2 + vz ** 2)
                                      / 0.02), vg, TG1)
        assert condensate_fraction(f, 2) > 0.9

    def test_spread_field(self):
        vg = VelocityGrid(2.0, 8)
        f = field_from_function(lambda vx, vy, vz: np.ones_like(vx), vg, TG1)
        assert condensate_fraction(f, 1) < 0.2

    def test_zero_mass_is_nan(self):
        from bnsolve.grids import zeros_like_field
        f = zeros_like_field(VelocityGrid(1.0, 4), TG1)
        assert np.isnan(condensate_fraction(f, 1))

    def test_radius_validation(self):
        vg = VelocityGrid(2.0, 8)
        f = field_from_function(lambda vx, vy, vz: np.ones_like(vx), vg, TG1)
        with pytest.raises(ValueError):
            condensate_fraction(f, 0)
