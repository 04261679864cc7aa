import math

import numpy as np
import pytest

from ehdrop import sht, surface
from ehdrop.sht import SpectralField, get_grid
from ehdrop.surface import (DropState, ellipsoid_state, geometry,
                            measure_deformation, perturbed_sphere_state,
                            sphere_state)


@pytest.fixture(scope="module")
def unit_sphere():
    st = sphere_state(10)
    return st, geometry(st)


@pytest.fixture(scope="module")
def bumpy():
    st = perturbed_sphere_state(12, {(2, 0): 0.08, (3, 2): 0.05})
    return st, geometry(st)


class TestGeometry:
    def test_unit_sphere(self, unit_sphere):
        st, geom = unit_sphere
        assert np.abs(geom.H - 1.0).max() < 1e-12
        assert np.abs(geom.W - geom.grid.st[:, None]).max() < 1e-13
        r = geom.X / np.sqrt(np.sum(geom.X ** 2, axis=0))
        assert np.abs(geom.n - r).max() < 1e-12
        assert np.abs(np.sqrt(np.sum(geom.n ** 2, axis=0)) - 1).max() < 1e-13

    def test_radius_two(self):
        geom = geometry(sphere_state(8, radius=2.0))
        assert np.abs(geom.H - 0.5).max() < 1e-12

    def test_spheroid_curvature_profile(self):
        # semi-axes (1,1,2): closed-form H along the colatitude, and the
        # pole limit H = c/a^2 = 2 (radius of curvature a^2/c)
        st = ellipsoid_state(12, (1.0, 1.0, 2.0))
        geom = geometry(st)
        a, c = 1.0, 2.0
        tt = geom.grid.theta
        Hex = c * (2 * a * a + (c * c - a * a) * np.sin(tt) ** 2) \
            / (2 * a * (a * a * np.cos(tt) ** 2
                        + c * c * np.sin(tt) ** 2) ** 1.5)
        assert np.abs(geom.H - Hex[:, None]).max() < 1e-12
        fine = surface.SurfaceGeometry(st, get_grid(48))
        Hf = sht.forward(fine.H, fine.grid)
        Hpole = sht.evaluate(Hf, np.array([1e-9]), np.array([0.0]))[0]
        assert abs(Hpole - 2.0) < 1e-8

    def test_inverted_orientation_rejected(self):
        st = sphere_state(6)
        bad = DropState(st.x, st.y, SpectralField(6, -st.z.c), st.gamma)
        with pytest.raises(surface.GeometryError):
            geometry(bad)

    def test_adaptive_upsampling(self):
        st = perturbed_sphere_state(8, {(2, 0): 0.05})
        geom = geometry(st, "adaptive")
        assert geom.grid.p >= 8


class TestOperators:
    def test_surface_grad_constant(self, unit_sphere):
        _, geom = unit_sphere
        f = SpectralField.constant(10, 3.0)
        assert np.abs(geom.surface_grad(f)).max() < 1e-12

    def test_surface_grad_cos(self, unit_sphere):
        _, geom = unit_sphere
        f = SpectralField.zeros(10)
        f.c[1, 10] = math.sqrt(4 * math.pi / 3)
        sg = geom.surface_grad(f)
        mag = np.sqrt(np.sum(sg ** 2, axis=0))
        assert np.abs(mag - geom.grid.st[:, None]).max() < 1e-12
        assert np.abs(np.sum(sg * geom.n, axis=0)).max() < 1e-11

    def test_laplace_beltrami_eigen(self, unit_sphere):
        _, geom = unit_sphere
        for (n, m) in [(1, 0), (3, 2)]:
            f = SpectralField.zeros(10)
            if m == 0:
                f.c[n, 10] = 1.0
            else:
                f.c[n, 10 + m] = 0.5
                f.c[n, 10 - m] = 0.5 * (-1) ** m
            lb = geom.laplace_beltrami(f)
            assert np.abs(lb + n * (n + 1) * geom.values(f)).max() < 1e-11

    def test_div_grad_consistency_ellipsoid(self):
        geom = geometry(ellipsoid_state(16, (1.0, 1.2, 0.85)))
        f = SpectralField.zeros(16)
        f.c[2, 17] = 0.4 - 0.1j
        f.c[2, 15] = -np.conj(0.4 - 0.1j)
        f.c[3, 16] = 0.2
        dv = geom.surface_div(geom.surface_grad(f))
        lb = geom.laplace_beltrami(f)
        assert np.abs(dv - lb).max() < 1e-9

    def test_div_normal_is_curvature(self, bumpy):
        _, geom = bumpy
        assert np.abs(geom.surface_div(geom.n) - 2 * geom.H).max() < 1e-7


class TestIntegrals:
    def test_sphere_volume_area(self, unit_sphere):
        st, geom = unit_sphere
        assert abs(surface.volume(st, geom) - 4 * math.pi / 3) < 1e-13
        assert abs(surface.area(st, geom) - 4 * math.pi) < 1e-12

    def test_spheroid_volume(self):
        st = ellipsoid_state(10, (1, 1, 2))
        assert abs(surface.volume(st) - 8 * math.pi / 3) < 1e-12

    def test_surfactant_mass_odd_mode(self):
        st = sphere_state(8)
        g = get_grid(8)
        st.gamma = sht.forward(1 + 0.3 * np.cos(g.theta)[:, None]
                               * np.ones((1, g.shape[1])), g)
        assert abs(surface.surfactant_mass(st) - 4 * math.pi) < 1e-12

    def test_centroid(self):
        st = sphere_state(8, center=(0.3, -0.2, 0.5))
        assert np.abs(surface.centroid(st)
                      - np.array([0.3, -0.2, 0.5])).max() < 1e-12

    def test_divergence_theorem(self, bumpy):
        _, geom = bumpy
        for i in range(3):
            assert abs(geom.integrate(geom.n[i])) < 1e-10

    def test_volume_flux_forms_agree(self, bumpy):
        st, geom = bumpy
        v1 = surface.volume(st, geom)
        v2 = geom.integrate(geom.X[2] * geom.n[2])
        assert abs(v1 - v2) < 1e-10


class TestDeformation:
    def test_sphere_zero(self):
        assert abs(measure_deformation(sphere_state(8))) < 1e-12

    def test_simple_ratio(self):
        st = ellipsoid_state(10, (1.0, 1.0, 1.2))
        assert abs(measure_deformation(st) - 0.2 / 2.2) < 1e-10

    def test_synthetic_modes(self):
        # r = 1 + e2 P2 + e4 P4 against the exact axis lengths
        p, e2, e4 = 11, 0.02, -0.003
        g = get_grid(p)
        th = g.theta[:, None] * np.ones((1, g.shape[1]))
        ph = np.ones((g.shape[0], 1)) * g.phi[None, :]
        ct = np.cos(th)
        r = 1 + e2 * 0.5 * (3 * ct ** 2 - 1) \
            + e4 * (35 * ct ** 4 - 30 * ct ** 2 + 3) / 8
        basis = sht.get_basis(p)
        st = DropState(basis.scalar_field(r * np.sin(th) * np.cos(ph)),
                       basis.scalar_field(r * np.sin(th) * np.sin(ph)),
                       basis.scalar_field(r * ct),
                       SpectralField.constant(p, 1.0))
        apar = 1 + e2 + e4
        aperp = 1 - e2 / 2 + 3 * e4 / 8
        want = (apar - aperp) / (apar + aperp)
        assert abs(measure_deformation(st) - want) < 1e-12

    def test_rotation_invariance(self):
        st = ellipsoid_state(10, (1.0, 1.0, 1.3))
        rot = sht.Rotation(0.4, 0.9, -0.2)
        R = rot.matrix()
        rotated = [sht.rotate(f, rot) for f in st.position_fields()]
        stacked = np.stack([f.c for f in rotated])
        mixed = np.einsum("ij,jnm->inm", R, stacked)
        st2 = DropState(SpectralField(10, mixed[0]), SpectralField(10, mixed[1]),
                        SpectralField(10, mixed[2]), st.gamma.copy())
        D1 = measure_deformation(st, (0, 0, 1))
        D2 = measure_deformation(st2, tuple(R @ np.array([0, 0, 1.0])))
        assert abs(D1 - D2) < 1e-10
