import math

import numpy as np
import pytest

from ehdrop import quad, sht, surface
from ehdrop.quad import DropOperators, NearEvalPlan, near_eval
from ehdrop.sht import SpectralField, get_grid
from ehdrop.surface import ellipsoid_state, geometry, perturbed_sphere_state, \
    sphere_state


@pytest.fixture(scope="module")
def sphere12():
    st = sphere_state(12)
    ops = DropOperators(st, upsample=2)
    ops.build(["lap_sl", "lap_dl_adj", "stokes_sl", "stokes_dl"])
    return st, ops


def mode_values(p, n, m, grid, imag=False):
    f = SpectralField.zeros(p)
    if m == 0:
        f.c[n, p] = 1.0
    else:
        z = 1j * 0.5 if imag else 0.5
        f.c[n, p + m] = z
        f.c[n, p - m] = (-1) ** m * np.conj(z)
    return f, sht.inverse(f, grid)


class TestRegularRule:
    def test_unit_sphere_area(self):
        for p in (4, 9, 16):
            st = sphere_state(p)
            geom = geometry(st, 1)
            assert abs(geom.integrate(np.ones(geom.grid.shape))
                       - 4 * math.pi) < 1e-12

    def test_cos2_moment(self):
        geom = geometry(sphere_state(8), 1)
        f = np.cos(geom.grid.theta)[:, None] ** 2 * np.ones(geom.grid.shape)
        assert abs(geom.integrate(f) - 4 * math.pi / 3) < 1e-13

    def test_prolate_spheroid_area(self):
        st = ellipsoid_state(12, (1.0, 1.0, 2.0))
        a, c = 1.0, 2.0
        e = math.sqrt(1 - a * a / (c * c))
        exact = 2 * math.pi * a * a * (1 + (c / (a * e)) * math.asin(e))
        assert abs(exact - 21.4784353278837) < 1e-10
        assert abs(surface.area(st) - exact) < 1e-11


class TestLaplaceSingular:
    def test_single_layer_of_one(self, sphere12):
        _, ops = sphere12
        out = ops.apply_scalar("lap_sl", np.ones(ops.base.shape))
        assert np.abs(out - 1.0).max() < 1e-10

    def test_single_layer_radius_two(self):
        ops = DropOperators(sphere_state(10, radius=2.0))
        out = ops.apply_scalar("lap_sl", np.ones(ops.base.shape))
        assert np.abs(out - 2.0).max() < 1e-10

    def test_single_layer_eigenvalues(self, sphere12):
        _, ops = sphere12
        for (n, m) in [(1, 0), (2, 1), (3, 2), (5, 4), (6, 6)]:
            for imag in (False, True):
                f, fv = mode_values(12, n, m, ops.base, imag)
                out = ops.apply_scalar("lap_sl", fv)
                assert np.abs(out - fv.ravel() / (2 * n + 1)).max() < 1e-9

    def test_adjoint_double_layer_eigenvalues(self, sphere12):
        _, ops = sphere12
        for (n, m) in [(0, 0), (1, 0), (2, 0), (2, 2), (4, 3)]:
            f, fv = mode_values(12, n, m, ops.base)
            out = ops.apply_scalar("lap_dl_adj", fv)
            assert np.abs(out - fv.ravel() / (2 * (2 * n + 1))).max() < 1e-9

    def test_eigenvalue_error_decays_exponentially(self):
        # deformed surface: single layer of one compared against itself at
        # increasing order; factor >= 10 per +4 in p until roundoff
        errs = []
        for p in (8, 12, 16):
            st = ellipsoid_state(p, (1.0, 1.3, 0.8))
            ops = DropOperators(st, upsample=2)
            geom = surface.SurfaceGeometry(st, ops.base)
            out = ops.apply_stokes("stokes_sl", geom.n)
            errs.append(np.abs(out).max())
        assert errs[1] < errs[0] / 10 or errs[1] < 1e-12
        assert errs[2] < errs[1] / 10 or errs[2] < 1e-12


class TestStokesSingular:
    def test_single_layer_normal_identity_sphere(self, sphere12):
        st, ops = sphere12
        geom = surface.SurfaceGeometry(st, ops.base)
        out = ops.apply_stokes("stokes_sl", geom.n)
        assert np.abs(out).max() < 1e-12

    def test_single_layer_normal_identity_ellipsoid(self):
        st = ellipsoid_state(16, (1.0, 1.1, 0.9))
        ops = DropOperators(st, upsample=2)
        geom = surface.SurfaceGeometry(st, ops.base)
        out = ops.apply_stokes("stokes_sl", geom.n)
        assert np.abs(out).max() < 1e-9

    def test_double_layer_jump_identity(self, sphere12):
        _, ops = sphere12
        for e in np.eye(3):
            dens = np.ones((3,) + ops.base.shape) * e[:, None, None]
            out = ops.apply_stokes("stokes_dl", dens)
            assert np.abs(out - e[:, None]).max() < 1e-12

    def test_double_layer_jump_identity_deformed(self):
        st = perturbed_sphere_state(12, {(2, 0): 0.08, (3, 2): 0.05})
        ops = DropOperators(st)
        e = np.array([0.3, -0.5, 1.0])
        dens = np.ones((3,) + ops.base.shape) * e[:, None, None]
        out = ops.apply_stokes("stokes_dl", dens)
        assert np.abs(out - e[:, None]).max() < 1e-10

    def test_double_layer_exterior_zero(self):
        geom = geometry(sphere_state(12), 2)
        e = np.array([1.0, 2.0, -1.0])
        dens = np.ones((3,) + geom.grid.shape) * e[:, None, None]
        far = quad.eval_regular(geom, dens, np.array([[3.0, 1.0, 0.5]]),
                                "stokes_dl")
        assert np.abs(far).max() < 1e-10

    def test_double_layer_interior_center(self):
        geom = geometry(sphere_state(12), 2)
        e = np.array([1.0, 2.0, -1.0])
        dens = np.ones((3,) + geom.grid.shape) * e[:, None, None]
        ctr = quad.eval_regular(geom, dens, np.array([[0.01, 0.0, 0.02]]),
                                "stokes_dl")
        assert np.abs(ctr - 2 * e).max() < 1e-10

    def test_stokeslet_normal_identity_everywhere(self):
        # interior, on-surface and exterior targets on an ellipsoid
        st = ellipsoid_state(16, (1.0, 1.1, 0.9))
        ops = DropOperators(st, upsample=2)
        geom = surface.SurfaceGeometry(st, ops.base)
        on = ops.apply_stokes("stokes_sl", geom.n)
        assert np.abs(on).max() < 1e-9
        gup = geometry(st, 2)
        pts = np.array([[0.2, 0.1, -0.1], [2.5, 1.0, 0.7]])
        off = quad.eval_regular(gup, gup.n, pts, "stokes_sl")
        assert np.abs(off).max() < 1e-9

    def test_direct_apply_matches_matrix(self, sphere12):
        st, ops = sphere12
        rng = np.random.default_rng(2)
        dens = rng.standard_normal((3,) + ops.base.shape)
        dc = np.stack([sht.forward(dens[i], ops.base).c for i in range(3)])
        m = ops.apply_stokes("stokes_sl", dens)
        d = ops.apply_stokes_direct("stokes_sl", dc)
        assert np.abs(m - d).max() < 1e-12


class TestOffGridSingular:
    def test_matches_matrix_at_node(self):
        st = perturbed_sphere_state(10, {(2, 0): 0.07, (4, 1): 0.03})
        ops = DropOperators(st)
        rng = np.random.default_rng(3)
        dens = rng.standard_normal((3,) + ops.base.shape)
        dfields = [sht.forward(dens[i], ops.base) for i in range(3)]
        out = ops.apply_stokes("stokes_sl", dens)
        j, k = 4, 7
        th, ph = float(ops.base.theta[j]), float(ops.base.phi[k])
        se = quad.singular_eval(st, dfields, th, ph, "stokes_sl")
        assert np.abs(out[:, j * ops.base.shape[1] + k] - se).max() < 1e-12

    def test_rows_reproduce_eval(self):
        st = perturbed_sphere_state(9, {(3, 1): 0.05})
        base = get_grid(9)
        rng = np.random.default_rng(4)
        dens = rng.standard_normal(base.shape)
        df = sht.forward(dens, base)
        th, ph = 1.1, 2.3
        for kernel in ("lap_sl", "lap_dl_adj"):
            row = quad.singular_rows(st, th, ph, kernel)
            se = quad.singular_eval(st, df, th, ph, kernel)
            assert abs(row @ dens.ravel() - se) < 1e-12
        rows = quad.singular_rows(st, th, ph, "lap_grad")
        seg = quad.singular_eval(st, df, th, ph, "lap_grad")
        assert np.abs(rows @ dens.ravel() - seg).max() < 1e-12

    def test_point_eval_row(self):
        base = get_grid(9)
        rng = np.random.default_rng(5)
        dens = rng.standard_normal(base.shape)
        df = sht.forward(dens, base)
        row = quad.point_eval_row(9, 0.9, 4.2)
        want = sht.evaluate(df, np.array([0.9]), np.array([4.2]))[0]
        assert abs(row @ dens.ravel() - want) < 1e-12


@pytest.fixture(scope="module")
def near_setup():
    st = sphere_state(12)
    h = quad.grid_spacing(st)
    geom4 = geometry(st, 4)
    one = SpectralField.constant(12, 1.0)
    return st, h, geom4, one


class TestNearEval:
    plan = NearEvalPlan()

    def test_exterior_uniform_density(self, near_setup):
        st, h, geom4, one = near_setup
        u = np.array([0.3, -0.4, 0.86])
        u /= np.linalg.norm(u)
        v = near_eval(st, one, u * 1.001, self.plan, "lap_sl", h=h,
                      geom_up=geom4)
        assert abs(v - 1 / 1.001) < 5e-7
        assert abs(round(v, 6) - 0.999001) < 1.1e-6

    def test_interior_constant_potential(self, near_setup):
        st, h, geom4, one = near_setup
        u = np.array([0.1, 0.2, -0.97])
        u /= np.linalg.norm(u)
        for r in (0.999, 1 - 1e-3 * h):
            v = near_eval(st, one, u * r, self.plan, "lap_sl", h=h,
                          geom_up=geom4)
            assert abs(v - 1.0) < 1e-10

    def test_very_close_exterior(self, near_setup):
        st, h, geom4, one = near_setup
        u = np.array([0.3, -0.4, 0.86])
        u /= np.linalg.norm(u)
        r = 1 + 1e-3 * h
        v = near_eval(st, one, u * r, self.plan, "lap_sl", h=h, geom_up=geom4)
        assert abs(v - 1 / r) < 5e-7

    def test_gauss_flux_consistency(self, near_setup):
        st, h, geom4, one = near_setup
        tgt0 = np.array([0.0, 0.0, 1.0005])
        eps = 2e-4
        g = get_grid(6)
        flux = 0.0
        for j in range(7):
            for k in range(14):
                uu = np.array([math.sin(g.theta[j]) * math.cos(g.phi[k]),
                               math.sin(g.theta[j]) * math.sin(g.phi[k]),
                               math.cos(g.theta[j])])
                v = near_eval(st, one, tgt0 + eps * uu, self.plan, "lap_grad",
                              h=h, geom_up=geom4)
                flux += g.wmeasure[j] * eps ** 2 * float(v @ uu)
        assert abs(flux) < 1e-8

    def test_stokes_double_layer_jumps(self, near_setup):
        st, h, geom4, _ = near_setup
        e = np.array([1.0, 2.0, -1.0])
        dens = [SpectralField.constant(12, c) for c in e]
        u = np.array([0.3, -0.4, 0.86])
        u /= np.linalg.norm(u)
        vin = near_eval(st, dens, u * 0.995, self.plan, "stokes_dl", h=h,
                        geom_up=geom4)
        vout = near_eval(st, dens, u * 1.004, self.plan, "stokes_dl", h=h,
                         geom_up=geom4)
        assert np.abs(vin - 2 * e).max() < 1e-7
        assert np.abs(vout).max() < 1e-7

    def test_stokes_single_layer_identity_near(self, near_setup):
        st, h, geom4, _ = near_setup
        base = get_grid(12)
        geob = surface.SurfaceGeometry(st, base)
        nf = [sht.forward(geob.n[i], base) for i in range(3)]
        u = np.array([0.5, 0.5, 0.7])
        u /= np.linalg.norm(u)
        for r in (0.99, 1.006):
            v = near_eval(st, nf, u * r, self.plan, "stokes_sl", h=h,
                          geom_up=geom4)
            assert np.abs(v).max() < 1e-8

    def test_error_comparable_to_onsurface(self):
        # deformed drop: near error at 1e-3 h within 10x the singular-rule
        # error at the same order
        st = perturbed_sphere_state(8, {(2, 0): 0.1, (3, 1): 0.06})
        ops = DropOperators(st)
        geom = surface.SurfaceGeometry(st, ops.base)
        on = np.abs(ops.apply_stokes("stokes_sl", geom.n)).max()
        h = quad.grid_spacing(st)
        geom4 = geometry(st, 4)
        nf = [sht.forward(geom.n[i], ops.base) for i in range(3)]
        th, ph = float(ops.base.theta[3]), float(ops.base.phi[5])
        anchor = np.array([sht.evaluate(f, np.array([th]), np.array([ph]))[0]
                           for f in st.position_fields()])
        nrm = quad._offgrid_normal(st, th, ph)
        tgt = anchor + 1e-3 * h * nrm
        v = near_eval(st, nf, tgt, self.plan, "stokes_sl", h=h, geom_up=geom4)
        assert np.abs(v).max() < 10 * on

    def test_plan_validation(self):
        with pytest.raises(quad.QuadratureError):
            NearEvalPlan(n_lag=3)
        with pytest.raises(quad.QuadratureError):
            NearEvalPlan(d_near=2.0, reach=1.0)

    def test_newton_projection(self):
        st = perturbed_sphere_state(10, {(2, 0): 0.1})
        tgt = np.array([0.9, 0.3, 0.4])
        th, ph, anchor, nrm, dist = quad.nearest_point(st, tgt)
        # anchor on surface, displacement along normal
        d = tgt - anchor
        assert abs(np.linalg.norm(d) - abs(dist)) < 1e-10
        assert np.abs(np.cross(d, nrm)).max() < 1e-9
