"""Map fields: jets, tension, energies, angular profile."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collarflow.fields import (
    EnergyReport,
    MapField,
    TargetSpec,
    _bump,
    energies,
    jet,
    sample_map,
    smooth_cutoff,
    tension,
    tension_l2,
    theta_profile,
)
from collarflow.geometry import CollarGrid, DomainError, dz2_norms, half_length

TORUS1 = TargetSpec.flat_torus(1)
TORUS2 = TargetSpec.flat_torus(2)


def wrap_map(grid, a=1.0):
    # winding map (a theta, 0); needs period 2 pi a in the first slot
    torus = TargetSpec.flat_torus(2, periods=(2 * math.pi * abs(a), 2 * math.pi))
    return sample_map(grid, torus, lambda s, t: np.stack([a * t, 0 * s], axis=-1))


class TestTargets:
    def test_validation(self):
        with pytest.raises(DomainError):
            TargetSpec("flat-torus", 2, None)
        with pytest.raises(DomainError):
            TargetSpec("round-sphere", 3, (1.0, 1.0, 1.0))
        with pytest.raises(DomainError):
            TargetSpec("klein-bottle", 2, None)

    def test_sphere_projection_and_tangency(self):
        sph = TargetSpec.round_sphere()
        v = np.array([[3.0, 0.0, 4.0]])
        p = sph.project(v)
        assert np.allclose(np.linalg.norm(p, axis=-1), 1.0)
        w = np.array([[1.0, 2.0, 3.0]])
        t = sph.tangential(p, w)
        assert abs(np.sum(t * p)) < 1e-12

    def test_wrap_increment(self):
        torus = TargetSpec.flat_torus(1, periods=(2 * math.pi,))
        d = np.array([2 * math.pi - 0.1])
        assert torus.wrap_increment(d) == pytest.approx(-0.1)

    def test_sphere_values_validated(self):
        grid = CollarGrid(0.5, n_s=8, n_theta=8)
        vals = np.ones((8, 8, 3))
        with pytest.raises(DomainError):
            MapField(grid, vals, TargetSpec.round_sphere())


class TestJet:
    def test_linear_in_s_exact(self):
        grid = CollarGrid(0.5, n_s=32, n_theta=8, s_max=2.0)
        u = sample_map(grid, TORUS1, lambda s, t: (0.7 * s)[..., None])
        J = jet(u)
        assert np.allclose(J.u_s, 0.7, atol=1e-12)
        assert np.allclose(J.u_theta, 0.0, atol=1e-12)

    def test_wrap_map_exact_across_seam(self):
        grid = CollarGrid(0.5, n_s=16, n_theta=16)
        u = wrap_map(grid, a=1.0)
        J = jet(u)
        assert np.allclose(J.u_theta[..., 0], 1.0, atol=1e-12)
        assert np.allclose(J.u_s, 0.0, atol=1e-12)

    def test_trig_convergence_second_order(self):
        errs = []
        for n in (32, 64, 128):
            grid = CollarGrid(0.5, n_s=n, n_theta=8, s_max=2.0)
            u = sample_map(grid, TORUS1, lambda s, t: np.sin(s)[..., None])
            J = jet(u)
            exact = np.cos(grid.s_nodes)[:, None, None]
            errs.append(np.max(np.abs(J.u_s - exact)))
        assert math.log2(errs[0] / errs[1]) > 1.7
        assert math.log2(errs[1] / errs[2]) > 1.7

    def test_linearity(self):
        grid = CollarGrid(0.5, n_s=16, n_theta=8, s_max=2.0)
        rng = np.random.default_rng(0)
        a = rng.normal(size=(16, 8, 1))
        b = rng.normal(size=(16, 8, 1))
        torus = TargetSpec.flat_torus(1, periods=(1e9,))  # wrap never triggers
        Ja = jet(MapField(grid, a, torus))
        Jb = jet(MapField(grid, b, torus))
        Jab = jet(MapField(grid, a + 2.0 * b, torus))
        assert np.allclose(Jab.u_s, Ja.u_s + 2.0 * Jb.u_s, atol=1e-10)


class TestTension:
    def test_harmonic_torus_map(self):
        grid = CollarGrid(0.5, n_s=32, n_theta=8, s_max=2.0)
        u = sample_map(grid, TORUS2, lambda s, t: np.stack([0.3 * s, 0 * s], axis=-1))
        assert np.max(np.abs(tension(u))) < 1e-11

    def test_equatorial_wrap_is_harmonic(self):
        # geodesic wrap of the sphere equator: tension vanishes after the
        # tangential projection
        grid = CollarGrid(0.5, n_s=16, n_theta=32)
        sph = TargetSpec.round_sphere()
        u = sample_map(grid, sph,
                       lambda s, t: np.stack([np.cos(t), np.sin(t), 0 * s], axis=-1))
        tau = tension(u)
        assert np.max(np.abs(tau)) < 1e-10

    def test_sphere_tangency(self):
        grid = CollarGrid(0.5, n_s=24, n_theta=16, s_max=2.0)
        sph = TargetSpec.round_sphere()

        def fn(s, t):
            x = np.cos(t + 0.3 * np.sin(s))
            y = np.sin(t + 0.3 * np.sin(s))
            z = 0.4 * np.cos(s) * np.ones_like(t)
            return np.stack([x, y, z], axis=-1)

        u = sample_map(grid, sph, fn)
        tau = tension(u)
        dots = np.sum(tau * u.values, axis=-1)
        assert np.max(np.abs(dots)) < 1e-12

    def test_theta_harmonic_value(self):
        # u = sin(theta): tau_flat = -sin(theta), tau_g = -rho^-2 sin(theta)
        grid = CollarGrid(0.3, n_s=16, n_theta=256)
        u = sample_map(grid, TORUS1, lambda s, t: np.sin(t)[..., None])
        tau = tension(u)
        expect = -grid.rho_inv_sq[:, None] * np.sin(grid.theta_nodes)[None, :]
        assert np.allclose(tau[..., 0], expect, atol=2e-4 * np.max(np.abs(expect)))

    def test_tension_l2_closed_form(self):
        # int |tau_g|^2 dv = pi int rho^-2 ds for u = sin(theta); the s
        # integral is l2_sq/(8 pi) by the dz^2 antiderivative
        ell = 0.3
        grid = CollarGrid(ell, n_s=4000, n_theta=512)
        u = sample_map(grid, TORUS1, lambda s, t: np.sin(t)[..., None])
        expect = math.sqrt(math.pi * dz2_norms(ell).l2_sq / (8 * math.pi))
        assert tension_l2(u) == pytest.approx(expect, rel=2e-4)


class TestEnergies:
    def test_wrap_map_energy(self):
        grid = CollarGrid(0.1, n_s=64, n_theta=8)
        u = wrap_map(grid, a=1.0)
        rep = energies(u)
        X = half_length(0.1)
        assert rep.E == pytest.approx(2 * math.pi * X, rel=1e-12)
        assert rep.I_theta == pytest.approx(dz2_norms(0.1).l2_sq / 4, rel=1e-4)

    def test_conformal_invariance(self):
        # E computed with rho-weights against dv equals the flat quadrature
        grid = CollarGrid(0.4, n_s=48, n_theta=16, s_max=3.0)
        rng = np.random.default_rng(9)
        u = MapField(grid, rng.normal(size=(48, 16, 1)),
                     TargetSpec.flat_torus(1, periods=(1e9,)))
        J = jet(u)
        e_flat = 0.5 * (np.sum(J.u_s**2, axis=-1) + np.sum(J.u_theta**2, axis=-1))
        E_weighted = grid.integrate_hyperbolic(e_flat * grid.rho_inv_sq[:, None])
        assert E_weighted == pytest.approx(energies(u).E, rel=1e-12)

    def test_cutoff_shape(self):
        delta = 1 / (2 * math.pi)
        rho = np.array([0.5 * delta, delta, 1.5 * delta, 2 * delta, 3 * delta])
        phi = smooth_cutoff(rho, delta)
        assert phi[0] == 1.0 and phi[1] == 1.0
        assert 0.0 < phi[2] < 1.0
        assert phi[3] == 0.0 and phi[4] == 0.0
        # derivative bound |phi'| <= 2/delta
        xs = np.linspace(delta, 2 * delta, 10001)
        ps = smooth_cutoff(xs, delta)
        slope = np.max(np.abs(np.diff(ps) / np.diff(xs)))
        assert slope <= 2 / delta

    def test_cutoff_sandwich(self):
        # 0 <= I - I_smooth <= delta^-2 E
        delta = 1 / (2 * math.pi)
        grid = CollarGrid(0.3, n_s=64, n_theta=16)
        rng = np.random.default_rng(21)
        coeffs = rng.normal(size=4) * 0.2

        def fn(s, t):
            out = sum(c * np.sin((k + 1) * t) * np.cos(0.1 * k * s)
                      for k, c in enumerate(coeffs))
            return out[..., None]

        u = sample_map(grid, TORUS1, fn)
        rep = energies(u)
        assert rep.I - rep.I_smooth >= -1e-12 * rep.I
        assert rep.I - rep.I_smooth <= rep.E / delta**2 + 1e-12

    def test_I_dominates_half_I_theta(self):
        grid = CollarGrid(0.3, n_s=32, n_theta=16)
        u = sample_map(grid, TORUS1, lambda s, t: (np.sin(t) * np.cos(0.2 * s))[..., None])
        rep = energies(u)
        assert rep.I >= rep.I_theta / 2


class TestThetaProfile:
    def test_window_sandwich(self):
        grid = CollarGrid(0.2, n_s=400, n_theta=32)
        u = sample_map(grid, TORUS1,
                       lambda s, t: (np.sin(t) * np.exp(-0.1 * s**2))[..., None])
        J = jet(u)
        dens = np.sum(J.u_theta**2, axis=-1)
        s0 = 1.3
        inner = (np.abs(grid.s_nodes - s0) <= 0.5)
        outer = (np.abs(grid.s_nodes - s0) < 1.0)
        lo = grid.integrate_flat(dens * inner[:, None])
        hi = grid.integrate_flat(dens * outer[:, None])
        th = theta_profile(u, s0)
        assert lo - 1e-12 <= th <= hi + 1e-12
        assert th <= 2 * energies(u, jet_=J).E + 1e-12

    def test_window_leaving_grid_rejected(self):
        grid = CollarGrid(0.5, n_s=32, n_theta=8, s_max=2.0)
        u = sample_map(grid, TORUS1, lambda s, t: np.sin(t)[..., None])
        with pytest.raises(DomainError):
            theta_profile(u, 1.5)

    def test_bump_profile(self):
        x = np.array([0.0, 0.5, 0.75, 1.0, -0.3, -0.9])
        b = _bump(x)
        assert b[0] == 1.0 and b[1] == 1.0 and b[3] == 0.0 and b[4] == 1.0
        assert 0 < b[2] < 1 and 0 < b[5] < 1


class TestWirtinger:
    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_second_vs_first_theta_derivative(self, data):
        # zero-theta-mean circles: int |u_theta_theta|^2 >= int |u_theta|^2,
        # discretely exact for central stencils mode by mode
        n_theta = 32
        grid = CollarGrid(0.5, n_s=8, n_theta=n_theta, s_max=1.0)
        n_modes = data.draw(st.integers(1, 5))
        amps = [data.draw(st.floats(-2, 2)) for _ in range(n_modes)]
        phases = [data.draw(st.floats(0, 2 * math.pi)) for _ in range(n_modes)]

        def fn(s, t):
            out = sum(a * np.cos((k + 1) * t + p)
                      for k, (a, p) in enumerate(zip(amps, phases)))
            return (out + 0 * s)[..., None]

        u = sample_map(grid, TORUS1, fn)
        J = jet(u)
        h = grid.h_theta
        u_thth = (np.roll(u.values, -1, axis=1) - 2 * u.values
                  + np.roll(u.values, 1, axis=1)) / h**2
        lhs = np.sum(u_thth**2) * h
        rhs = np.sum(J.u_theta**2) * h
        assert lhs >= rhs * (1 - 1e-10)
