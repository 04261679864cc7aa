import math

import numpy as np
import pytest

from ehdrop import sht
from ehdrop.sht import Rotation, SpectralField, get_grid


def random_band_limited(p, seed=0):
    rng = np.random.default_rng(seed)
    f = SpectralField.zeros(p)
    for n in range(p + 1):
        f.c[n, p] = rng.standard_normal()
        for m in range(1, n + 1):
            z = rng.standard_normal() + 1j * rng.standard_normal()
            f.c[n, p + m] = z
            f.c[n, p - m] = (-1) ** m * np.conj(z)
    return f


def grid_mesh(g):
    th = g.theta[:, None] * np.ones((1, g.shape[1]))
    ph = np.ones((g.shape[0], 1)) * g.phi[None, :]
    return th, ph


class TestGrid:
    def test_counts_and_weights(self):
        g = get_grid(7)
        assert g.theta.shape == (8,)
        assert g.phi.shape == (16,)
        assert np.all((g.theta > 0) & (g.theta < math.pi))
        assert abs(g.wcol.sum() - 2.0) < 1e-14
        assert np.allclose(np.diff(g.phi), math.pi / 8)

    def test_order_bounds(self):
        with pytest.raises(sht.ShtError):
            get_grid(1)
        with pytest.raises(sht.ShtError):
            sht.SphGrid(sht.P_MAX + 1)


class TestForwardInverse:
    def test_constant(self):
        g = get_grid(6)
        f = sht.forward(np.ones(g.shape), g)
        assert abs(f.c[0, 6] - math.sqrt(4 * math.pi)) < 1e-14
        rest = np.abs(f.c).sum() - abs(f.c[0, 6])
        assert rest < 1e-13

    def test_cos_theta(self):
        g = get_grid(6)
        th, _ = grid_mesh(g)
        f = sht.forward(np.cos(th), g)
        assert abs(f.c[1, 6] - math.sqrt(4 * math.pi / 3)) < 1e-14

    def test_roundtrip_random(self):
        for seed in range(3):
            p = 14
            f = random_band_limited(p, seed)
            g = get_grid(p)
            f2 = sht.forward(sht.inverse(f, g), g)
            assert np.abs(f2.c - f.c).max() < 1e-13

    def test_upsampling_exact(self):
        f = SpectralField.zeros(5)
        f.c[1, 5] = math.sqrt(4 * math.pi / 3)     # cos(theta)
        g = get_grid(11)
        vals = sht.inverse(f, g)
        assert np.abs(vals - np.cos(g.theta)[:, None]).max() < 1e-14

    def test_parseval(self):
        p = 12
        f = random_band_limited(p, 5)
        g = get_grid(p)
        v = sht.inverse(f, g)
        quad = float(np.sum(g.wmeasure[:, None] * v ** 2))
        coef = float(np.sum(np.abs(f.c) ** 2))
        assert abs(quad - coef) < 1e-11 * max(1.0, coef)

    def test_size_mismatch(self):
        g = get_grid(6)
        with pytest.raises(sht.ShtError):
            sht.forward(np.ones((3, 3)), g)

    def test_mean(self):
        f = SpectralField.constant(8, 2.5)
        assert abs(f.mean() - 2.5) < 1e-15


class TestEvaluate:
    def test_y20_spot_value(self):
        f = SpectralField.zeros(4)
        f.c[2, 4] = 1.0
        got = sht.evaluate(f, np.array([math.pi / 3]), np.array([1.234]))[0]
        exact = math.sqrt(5 / (4 * math.pi)) * (3 * 0.25 - 1) / 2
        assert abs(got - exact) < 1e-14
        assert abs(exact - math.sqrt(5 / (4 * math.pi)) * (-0.125)) < 1e-16

    def test_matches_grid_synthesis(self):
        p = 9
        f = random_band_limited(p, 2)
        g = get_grid(p)
        th, ph = grid_mesh(g)
        assert np.abs(sht.evaluate(f, th, ph) - sht.inverse(f, g)).max() < 1e-12

    def test_downsampling_pointwise(self):
        # coarse-grid inverse must evaluate pointwise, not alias
        p = 10
        f = random_band_limited(p, 3)
        g = get_grid(4)
        th, ph = grid_mesh(g)
        assert np.abs(sht.inverse(f, g) - sht.evaluate(f, th, ph)).max() < 1e-12


class TestDifferentiate:
    def test_dphi_of_zonal_is_zero(self):
        f = SpectralField.zeros(6)
        f.c[1, 6] = 1.3
        assert np.abs(sht.differentiate(f, "phi")).max() < 1e-14

    def test_dtheta_cos(self):
        g = get_grid(8)
        f = SpectralField.zeros(8)
        f.c[1, 8] = math.sqrt(4 * math.pi / 3)
        got = sht.differentiate(f, "theta", g)
        assert np.abs(got + np.sin(g.theta)[:, None]).max() < 1e-13

    def test_dphi_sectoral(self):
        g = get_grid(8)
        th, ph = grid_mesh(g)
        f = sht.forward(np.sin(th) * np.sin(ph), g)
        got = sht.differentiate(f, "phi", g)
        assert np.abs(got - np.sin(th) * np.cos(ph)).max() < 1e-13

    def test_second_derivative(self):
        g = get_grid(8)
        f = SpectralField.zeros(8)
        f.c[1, 8] = math.sqrt(4 * math.pi / 3)
        got = sht.differentiate(f, "theta2", g)
        assert np.abs(got + np.cos(g.theta)[:, None]).max() < 1e-12

    def test_unknown_kind(self):
        with pytest.raises(sht.ShtError):
            sht.differentiate(SpectralField.zeros(4), "dx")


class TestResample:
    def test_up_down_identity(self):
        f = random_band_limited(8, 1)
        back = sht.resample(sht.resample(f, 16), 8)
        assert np.abs(back.c - f.c).max() == 0.0

    def test_pure_mode_retained(self):
        f = SpectralField.zeros(6)
        f.c[3, 6 + 2] = 1.0
        f.c[3, 6 - 2] = 1.0
        up = sht.resample(f, 12)
        assert abs(up.c[3, 12 + 2] - 1.0) < 1e-15
        assert np.count_nonzero(up.c) == 2

    def test_dealiased_product(self):
        # product of two degree-p fields on a 2p grid, truncated, matches
        # a much finer reference projection
        p = 6
        f1 = random_band_limited(p, 11)
        f2 = random_band_limited(p, 12)
        g2 = get_grid(2 * p)
        prod = sht.inverse(f1, g2) * sht.inverse(f2, g2)
        got = sht.get_basis(2 * p, p).analyze(prod)
        gref = get_grid(3 * p)
        ref = sht.get_basis(3 * p, p).analyze(
            sht.inverse(f1, gref) * sht.inverse(f2, gref))
        assert np.abs(got - ref).max() < 1e-12


class TestRotation:
    def test_constant_invariant(self):
        f = SpectralField.constant(6, 2.0)
        fr = sht.rotate(f, Rotation(0.3, 1.1, -2.0))
        assert np.abs(fr.c - f.c).max() < 1e-14

    def test_cos_to_sincos(self):
        f = SpectralField.zeros(6)
        f.c[1, 6] = math.sqrt(4 * math.pi / 3)
        fr = sht.rotate(f, Rotation(0.0, math.pi / 2, 0.0))
        g = get_grid(6)
        got = sht.inverse(fr, g)
        want = g.st[:, None] * np.cos(g.phi)[None, :]
        assert np.abs(got - want).max() < 1e-13

    def test_inverse_rotation_roundtrip(self):
        f = random_band_limited(10, 4)
        rot = Rotation(0.7, 2.1, -1.3)
        back = sht.rotate(sht.rotate(f, rot), rot.inverse())
        assert np.abs(back.c - f.c).max() < 1e-12

    def test_pointwise_property(self):
        # inverse(rotate(f))(x) == inverse(f)(R^-1 x)
        f = random_band_limited(12, 6)
        rot = Rotation(0.9, 1.1, -0.4)
        fr = sht.rotate(f, rot)
        R = rot.matrix()
        th = np.array([0.3, 1.0, 2.0, 2.8])
        ph = np.array([0.1, 2.0, 4.0, 5.5])
        u = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                      np.cos(th)])
        v = R.T @ u
        th2 = np.arccos(np.clip(v[2], -1, 1))
        ph2 = np.arctan2(v[1], v[0])
        assert np.abs(sht.evaluate(fr, th, ph)
                      - sht.evaluate(f, th2, ph2)).max() < 1e-12

    def test_degree_block_energy(self):
        f = random_band_limited(14, 7)
        for rot in [Rotation(0.2, 0.5, 1.0), Rotation(-1.0, 2.9, 0.1)]:
            fr = sht.rotate(f, rot)
            assert np.abs(fr.energy_per_degree()
                          - f.energy_per_degree()).max() < 1e-12

    def test_conjugate_symmetry_preserved(self):
        f = random_band_limited(9, 8)
        fr = sht.rotate(f, Rotation(1.0, 0.8, 0.3))
        p = 9
        for n in range(p + 1):
            for m in range(1, n + 1):
                a = fr.c[n, p - m]
                b = (-1) ** m * np.conj(fr.c[n, p + m])
                assert abs(a - b) < 1e-13


class TestWigner:
    @staticmethod
    def explicit(l, mp, m, beta):
        ch, sh = math.cos(beta / 2), math.sin(beta / 2)
        pref = math.sqrt(math.factorial(l + mp) * math.factorial(l - mp)
                         * math.factorial(l + m) * math.factorial(l - m))
        s = 0.0
        for k in range(max(0, m - mp), min(l - mp, l + m) + 1):
            den = (math.factorial(l + m - k) * math.factorial(k)
                   * math.factorial(mp - m + k) * math.factorial(l - mp - k))
            s += (-1) ** (mp - m + k) * ch ** (2 * l + m - mp - 2 * k) \
                * sh ** (mp - m + 2 * k) / den
        return pref * s

    def test_against_explicit_formula(self):
        for beta in (0.3, math.pi / 2, 2.7, 0.013):
            ds = sht.wigner_stack(8, beta)
            for l in (1, 3, 6, 8):
                for mp in range(-l, l + 1):
                    for m in range(-l, l + 1):
                        assert abs(ds[l][mp + l, m + l]
                                   - self.explicit(l, mp, m, beta)) < 1e-12

    def test_orthogonality_high_degree(self):
        for beta in (0.7, 2.2, 3.0):
            d = sht.wigner_stack(sht.P_MAX, beta)[sht.P_MAX]
            n = 2 * sht.P_MAX + 1
            assert np.abs(d @ d.T - np.eye(n)).max() < 5e-13


class TestPacking:
    def test_roundtrip_and_count(self):
        p = 11
        f = random_band_limited(p, 9)
        v = sht.pack_real(f.c, p)
        assert v.size == sht.n_real_dof(p) == (p + 1) ** 2
        assert np.abs(sht.unpack_real(v, p) - f.c).max() == 0.0
