"""Differential geometry of spectrally represented drop surfaces.

A drop is four spectral fields: the position components x, y, z and the
surfactant concentration.  All geometric quantities (normal, area element,
curvature, surface differential operators) are evaluated from exact spectral
derivatives on an upsampled grid, so products of geometric factors are
de-aliased before any projection back to the state's band limit.
"""

from __future__ import annotations

import math

import numpy as np

from . import sht
from .sht import SpectralField, SphGrid, get_basis, get_grid


class GeometryError(RuntimeError):
    """Degenerate metric, inverted orientation or failed surface solve."""


class DropState:
    """Surface position (3 spectral fields) plus surfactant concentration."""

    __slots__ = ("x", "y", "z", "gamma")

    def __init__(self, x: SpectralField, y: SpectralField, z: SpectralField,
                 gamma: SpectralField):
        if not (x.p == y.p == z.p == gamma.p):
            raise sht.ShtError("all DropState fields must share one order")
        self.x = x
        self.y = y
        self.z = z
        self.gamma = gamma

    @property
    def p(self) -> int:
        return self.x.p

    def position_fields(self):
        return (self.x, self.y, self.z)

    def copy(self) -> "DropState":
        return DropState(self.x.copy(), self.y.copy(), self.z.copy(),
                         self.gamma.copy())

    def resample(self, new_p: int) -> "DropState":
        return DropState(sht.resample(self.x, new_p), sht.resample(self.y, new_p),
                         sht.resample(self.z, new_p), sht.resample(self.gamma, new_p))


def sphere_state(p: int, radius: float = 1.0, center=(0.0, 0.0, 0.0),
                 gamma0: float = 1.0) -> DropState:
    """Spherical drop; position fields are exactly degree 1."""
    return ellipsoid_state(p, (radius, radius, radius), center, gamma0)


def ellipsoid_state(p: int, semi_axes, center=(0.0, 0.0, 0.0),
                    gamma0: float = 1.0) -> DropState:
    """Ellipsoid x = (a sin cos, b sin sin, c cos): degree-1 position fields."""
    a, b, c = semi_axes
    g = get_grid(p)
    th = g.theta[:, None] * np.ones((1, g.shape[1]))
    ph = np.ones((g.shape[0], 1)) * g.phi[None, :]
    basis = get_basis(p)
    x = basis.scalar_field(center[0] + a * np.sin(th) * np.cos(ph))
    y = basis.scalar_field(center[1] + b * np.sin(th) * np.sin(ph))
    z = basis.scalar_field(center[2] + c * np.cos(th))
    return DropState(x, y, z, SpectralField.constant(p, gamma0))


def perturbed_sphere_state(p: int, amplitudes: dict, radius: float = 1.0,
                           center=(0.0, 0.0, 0.0), gamma0: float = 1.0) -> DropState:
    """Sphere with radial bumps: r = radius * (1 + sum a_nm Re-pattern of Y_nm)."""
    g = get_grid(p)
    th = g.theta[:, None] * np.ones((1, g.shape[1]))
    ph = np.ones((g.shape[0], 1)) * g.phi[None, :]
    r = np.full(g.shape, float(radius))
    for (n, m), amp in amplitudes.items():
        f = SpectralField.zeros(p)
        if m == 0:
            f.c[n, p] = 1.0
        else:
            f.c[n, p + m] = 0.5
            f.c[n, p - m] = 0.5 * (-1.0) ** m
        r = r + radius * amp * sht.inverse(f, g)
    basis = get_basis(p)
    x = basis.scalar_field(r * np.sin(th) * np.cos(ph) + center[0])
    y = basis.scalar_field(r * np.sin(th) * np.sin(ph) + center[1])
    z = basis.scalar_field(r * np.cos(th) + center[2])
    return DropState(x, y, z, SpectralField.constant(p, gamma0))


# ----------------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------------

class SurfaceGeometry:
    """Grid-sampled metric data of one drop surface.

    Everything lives on ``grid`` (usually upsampled relative to the state):
    position X, tangents Xt/Xp, first fundamental form (E, F, G), area
    element W, outward unit normal n, mean curvature H, plus the spectral
    basis used for band-limited analysis on that grid.  Immutable after
    construction.
    """

    def __init__(self, state: DropState, grid: SphGrid):
        self.state = state
        self.grid = grid
        self.p = state.p
        basis = get_basis(grid.p, state.p)
        self.basis = get_basis(grid.p)

        fields = state.position_fields()
        self.X = np.stack([basis.synthesize(f.c) for f in fields])
        self.Xt = np.stack([basis.synthesize(f.c, dtheta=1) for f in fields])
        self.Xp = np.stack([basis.synthesize(f.c, dphi=1) for f in fields])
        Xtt = np.stack([basis.synthesize(f.c, dtheta=2) for f in fields])
        Xtp = np.stack([basis.synthesize(f.c, dtheta=1, dphi=1) for f in fields])
        Xpp = np.stack([basis.synthesize(f.c, dphi=2) for f in fields])

        self.E = np.sum(self.Xt * self.Xt, axis=0)
        self.F = np.sum(self.Xt * self.Xp, axis=0)
        self.G = np.sum(self.Xp * self.Xp, axis=0)
        det = self.E * self.G - self.F ** 2
        if np.any(det <= 0.0):
            raise GeometryError("degenerate surface metric (det <= 0)")
        self.W = np.sqrt(det)
        self.n = np.cross(self.Xt, self.Xp, axis=0) / self.W
        e2 = np.sum(Xtt * self.n, axis=0)
        f2 = np.sum(Xtp * self.n, axis=0)
        g2 = np.sum(Xpp * self.n, axis=0)
        self.H = -(e2 * self.G - 2.0 * f2 * self.F + g2 * self.E) / (2.0 * det)
        if self.integrate(np.sum(self.X * self.n, axis=0)) <= 0.0:
            raise GeometryError("surface orientation is inverted")

    # -- quadrature on this grid -------------------------------------------

    def integrate(self, values: np.ndarray) -> float:
        """Surface integral of grid samples (area element included here)."""
        return float(np.sum(self.grid.wmeasure[:, None] / self.grid.st[:, None]
                            * self.W * values))

    # -- spectral helpers on this grid ---------------------------------------

    def values(self, f: SpectralField) -> np.ndarray:
        return get_basis(self.grid.p, f.p).synthesize(f.c)

    def _derivs(self, f: SpectralField):
        b = get_basis(self.grid.p, f.p)
        return b.synthesize(f.c, dtheta=1), b.synthesize(f.c, dphi=1)

    def _grid_deriv(self, values: np.ndarray, dtheta: int = 0, dphi: int = 0):
        c = self.basis.analyze(values)
        return self.basis.synthesize(c, dtheta=dtheta, dphi=dphi)

    # -- surface differential operators --------------------------------------

    def surface_grad(self, f: SpectralField) -> np.ndarray:
        """Tangential gradient as a (3, ntheta, nphi) grid vector field."""
        ft, fp = self._derivs(f)
        return self.surface_grad_from_derivs(ft, fp)

    def surface_grad_from_derivs(self, ft: np.ndarray, fp: np.ndarray) -> np.ndarray:
        det = self.W ** 2
        a = (self.G * ft - self.F * fp) / det
        b = (self.E * fp - self.F * ft) / det
        return a[None, :, :] * self.Xt + b[None, :, :] * self.Xp

    def surface_div(self, v: np.ndarray) -> np.ndarray:
        """Surface divergence of a grid vector field with smooth components.

        Uses div v = sum_i e_i . grad_S(v_i): each Cartesian component is a
        smooth scalar on the sphere, so its band-limited analysis converges
        spectrally, unlike the contravariant fluxes, which are pole-singular.
        """
        out = np.zeros(self.grid.shape)
        for i in range(3):
            c = self.basis.analyze(v[i])
            vt = self.basis.synthesize(c, dtheta=1)
            vp = self.basis.synthesize(c, dphi=1)
            out += self.surface_grad_from_derivs(vt, vp)[i]
        return out

    def laplace_beltrami(self, f: SpectralField) -> np.ndarray:
        return self.surface_div(self.surface_grad(f))

    def project_tangential(self, v: np.ndarray) -> np.ndarray:
        return v - np.sum(v * self.n, axis=0)[None, :, :] * self.n


def geometry(state: DropState, upsample=2) -> SurfaceGeometry:
    """Build the surface geometry on an upsampled grid.

    ``upsample`` is a fixed integer factor, or 'adaptive' to refine until the
    tail of the mean-curvature spectrum (last two degrees) holds less than
    1e-8 of its total energy.
    """
    p = state.p
    if upsample == "adaptive":
        geom = None
        for factor in (1, 2, 3, 4):
            pg = min(factor * p, sht.P_MAX)
            geom = SurfaceGeometry(state, get_grid(pg))
            spec = sht.forward(geom.H, geom.grid).energy_per_degree()
            tot = float(np.sum(spec))
            if tot == 0.0 or float(np.sum(spec[-2:])) < 1e-8 * tot or pg == sht.P_MAX:
                return geom
        return geom
    pg = min(int(upsample) * p, sht.P_MAX)
    if pg < p:
        raise GeometryError("upsample factor must be >= 1")
    return SurfaceGeometry(state, get_grid(pg))


# ----------------------------------------------------------------------------
# integral diagnostics
# ----------------------------------------------------------------------------

def volume(state: DropState, geom: SurfaceGeometry | None = None) -> float:
    geom = geom if geom is not None else geometry(state)
    return geom.integrate(np.sum(geom.X * geom.n, axis=0)) / 3.0


def area(state: DropState, geom: SurfaceGeometry | None = None) -> float:
    geom = geom if geom is not None else geometry(state)
    return geom.integrate(np.ones(geom.grid.shape))


def surfactant_mass(state: DropState, geom: SurfaceGeometry | None = None) -> float:
    geom = geom if geom is not None else geometry(state)
    return geom.integrate(geom.values(state.gamma))


def centroid(state: DropState, geom: SurfaceGeometry | None = None) -> np.ndarray:
    geom = geom if geom is not None else geometry(state)
    v = volume(state, geom)
    xn = np.sum(geom.X * geom.n, axis=0)
    return np.array([geom.integrate(geom.X[i] * xn) for i in range(3)]) / (4.0 * v)


# ----------------------------------------------------------------------------
# deformation measurement
# ----------------------------------------------------------------------------

def _ray_length(state: DropState, origin: np.ndarray, direction: np.ndarray) -> float:
    """Distance from ``origin`` to the surface along ``direction``.

    Damped Gauss-Newton on X(theta, phi) = origin + s*direction, seeded from
    the best node of a refined grid.  The phi column of the Jacobian
    degenerates at the parametrization poles, hence the damping.
    """
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    pg = min(2 * state.p, sht.P_MAX)
    g = get_grid(pg)
    basis = get_basis(pg, state.p)
    X = np.stack([basis.synthesize(f.c) for f in state.position_fields()])
    rel = X - origin[:, None, None]
    rn = np.sqrt(np.sum(rel ** 2, axis=0))
    score = np.sum(rel * d[:, None, None], axis=0) / rn
    j, k = np.unravel_index(np.argmax(score), score.shape)
    th, ph = float(g.theta[j]), float(g.phi[k])
    s = float(rn[j, k])

    fields = state.position_fields()
    F = np.full(3, np.inf)
    for _ in range(60):
        ta = np.array([th])
        pa = np.array([ph])
        (v0, vt, vp) = sht.evaluate_many(fields, ta, pa,
                                         derivs=((0, 0), (1, 0), (0, 1)))
        pos = np.array([v[0] for v in v0])
        Jt = np.array([v[0] for v in vt])
        Jp = np.array([v[0] for v in vp])
        F = pos - origin - s * d
        if np.linalg.norm(F) < 1e-13 * max(1.0, s):
            break
        J = np.column_stack([Jt, Jp, -d])
        JtJ = J.T @ J + 1e-14 * np.eye(3)
        try:
            delta = np.linalg.solve(JtJ, -J.T @ F)
        except np.linalg.LinAlgError as exc:
            raise GeometryError("ray-surface Newton solve failed") from exc
        th = float(np.clip(th + delta[0], 1e-12, math.pi - 1e-12))
        ph = float((ph + delta[1]) % (2.0 * math.pi))
        s += float(delta[2])
    else:
        if np.linalg.norm(F) > 1e-8 * max(1.0, s):
            raise GeometryError("ray-surface intersection did not converge")
    if s <= 0:
        raise GeometryError("ray-surface intersection behind origin")
    return float(s)


def measure_deformation(state: DropState, axis=(0.0, 0.0, 1.0)) -> float:
    """Taylor deformation parameter (a_par - a_perp)/(a_par + a_perp).

    Extents are measured from the volume centroid: a_par averages the two
    ray lengths along +-axis, a_perp the two along a perpendicular direction.
    """
    d = np.asarray(axis, float)
    d = d / np.linalg.norm(d)
    trial = np.array([1.0, 0.0, 0.0])
    if abs(float(d @ trial)) > 0.9:
        trial = np.array([0.0, 1.0, 0.0])
    dperp = np.cross(d, trial)
    dperp /= np.linalg.norm(dperp)
    c = centroid(state)
    a_par = 0.5 * (_ray_length(state, c, d) + _ray_length(state, c, -d))
    a_perp = 0.5 * (_ray_length(state, c, dperp) + _ray_length(state, c, -dperp))
    return (a_par - a_perp) / (a_par + a_perp)
