"""Leaky-dielectric electrostatics on the current drop configuration.

The exterior normal field E_n solves the second-kind equation

    R/(R+1) Einf.n(x0) + (R-1)/(R+1) sum_j L_j[E_n](x0) = E_n(x0)/2,

with L the adjoint Laplace double layer (kernel (x0-x).n(x0)/(4 pi r^3)).
The Galerkin unknowns are the spherical-harmonic coefficients of E_n per
drop; the operator application is matrix-backed (singular self blocks,
regular/near cross blocks) and the Krylov solve is restarted GMRES.

The on-surface mean field (E_out + E_in)/2 is recovered from the
single-layer representation: its tangential part is the surface gradient of
the single-layer potential of the charge density, its normal part is the
adjoint double layer, so no principal-value vector quadrature is needed on
the self drop.  The interior normal component is E_n/R; the tangential field
and the Maxwell traction follow pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import sht
from .sht import SpectralField, get_basis, pack_real, unpack_real
from .system import DropSystem


class SolverError(RuntimeError):
    """Krylov solver failed to reach the requested residual."""


@dataclass(frozen=True)
class AppliedField:
    """Uniform plus quadrupole applied field, E = -grad phi_inf."""
    E_u: float = 0.0
    E_q: float = 0.0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Field vectors at points (..., 3): (-Eq x, -Eq y, Eu + 2 Eq z)."""
        out = np.empty_like(points, dtype=float)
        out[..., 0] = -self.E_q * points[..., 0]
        out[..., 1] = -self.E_q * points[..., 1]
        out[..., 2] = self.E_u + 2.0 * self.E_q * points[..., 2]
        return out


class SurfaceEField:
    """Per-drop electric state sampled on the geometry grid."""

    def __init__(self, En_field: SpectralField, En: np.ndarray, Et: np.ndarray,
                 mean: np.ndarray, normal: np.ndarray):
        self.En_field = En_field
        self.En = En              # exterior normal component, grid samples
        self.Et = Et              # tangential vector, (3, ...) grid samples
        self.mean = mean          # (E_out + E_in)/2, (3, ...) grid samples
        self.normal = normal      # outward normal of the same grid


def _gmres(op, b, rtol, restart=50, maxiter=4, x0=None, M=None):
    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    x, info = spla.gmres(op, b, rtol=rtol, atol=0.0, restart=restart,
                         maxiter=maxiter, x0=x0, M=M, callback=cb,
                         callback_type="pr_norm")
    if info != 0:
        raise SolverError(f"GMRES stalled (info={info}) after {count['n']} "
                          f"inner iterations")
    return x, count["n"]


def solve_En(system: DropSystem, field: AppliedField, R: float,
             rtol: float = 1e-12, x0=None):
    """Normal-field solve; returns (per-drop SpectralField, GMRES iterations)."""
    if R <= 0.0:
        raise ValueError("conductivity ratio must be positive")
    p = system.states[0].p
    basis = get_basis(p)
    nd = system.nd
    rhs_fields = []
    for i in range(nd):
        einf = field.evaluate(system.ops[i].X0)
        rhs_fields.append(basis.analyze(
            (R / (R + 1.0)) * np.sum(einf * system.ops[i].n0, axis=1)
            .reshape(system.ops[i].base.shape)))
    if abs(R - 1.0) < 1e-15:
        out = [SpectralField(p, 2.0 * c) for c in rhs_fields]
        return out, 0
    chi = (R - 1.0) / (R + 1.0)
    ndof = sht.n_real_dof(p)
    for op_ in system.ops:
        op_.build(["lap_dl_adj"])

    def matvec(v):
        fields = [unpack_real(v[i * ndof:(i + 1) * ndof], p) for i in range(nd)]
        vals = [basis.synthesize(c) for c in fields]
        lsum = system.apply_lap("lap_dl_adj", vals)
        out = np.empty_like(v)
        for i in range(nd):
            resid = 0.5 * vals[i].ravel() - chi * lsum[i]
            out[i * ndof:(i + 1) * ndof] = pack_real(
                basis.analyze(resid.reshape(system.ops[i].base.shape)), p)
        return out

    b = np.concatenate([pack_real(c, p) for c in rhs_fields])
    A = spla.LinearOperator((nd * ndof, nd * ndof), matvec=matvec)
    guess = None
    if x0 is not None:
        guess = np.concatenate([pack_real(f.c, p) for f in x0])
    sol, iters = _gmres(A, b, rtol, x0=guess)
    fields = [SpectralField(p, unpack_real(sol[i * ndof:(i + 1) * ndof], p))
              for i in range(nd)]
    return fields, iters


def mean_and_tangential(system: DropSystem, field: AppliedField, R: float,
                        En_fields) -> list:
    """Mean surface field, tangential field and E_n on the geometry grids."""
    p = system.states[0].p
    q = (1.0 / R - 1.0)
    dens = [q * get_basis(p).synthesize(f.c) for f in En_fields]
    # self single layer via the matrix-free path (one apply per geometry);
    # the adjoint double layer reuses the matrix built for the E_n solve
    sl = [system.ops[i].apply_scalar_direct("lap_sl", q * En_fields[i].c)
          for i in range(system.nd)]
    if system.nd > 1:
        for i in range(system.nd):
            for jj in range(system.nd):
                if jj != i:
                    sl[i] = sl[i] + system.cross("lap_sl", i, jj) \
                        @ np.ravel(dens[jj])
    ln = system.apply_lap("lap_dl_adj", dens)
    gcross = (system.apply_lap_grad_cross(dens) if system.nd > 1 else
              [np.zeros((3, n)) for n in system.Ns])
    out = []
    basis = get_basis(p)
    for i in range(system.nd):
        geom = system.geoms[i]
        shape = system.ops[i].base.shape
        s_field = SpectralField(p, basis.analyze(sl[i].reshape(shape)))
        grad_s = geom.surface_grad(s_field)
        ln_g = geom.values(SpectralField(p, basis.analyze(ln[i].reshape(shape))))
        einf = field.evaluate(np.moveaxis(geom.X, 0, -1))
        mean = np.moveaxis(einf, -1, 0) + grad_s - ln_g[None, :, :] * geom.n
        for a in range(3):
            cf = SpectralField(p, basis.analyze(gcross[i][a].reshape(shape)))
            mean[a] = mean[a] - geom.values(cf)
        En_g = geom.values(En_fields[i])
        Et = mean - ((1.0 + R) / (2.0 * R)) * En_g[None, :, :] * geom.n
        Et = geom.project_tangential(Et)
        out.append(SurfaceEField(En_fields[i], En_g, Et, mean, geom.n))
    return out


def electric_traction(sf: SurfaceEField, R: float, Q: float) -> np.ndarray:
    """Maxwell traction jump on the geometry grid, dimensionless form."""
    normal_part = 0.5 * ((1.0 - Q / R ** 2) * sf.En ** 2
                         - (1.0 - Q) * np.sum(sf.Et * sf.Et, axis=0))
    return normal_part[None, :, :] * sf.normal \
        + (1.0 - Q / R) * sf.En[None, :, :] * sf.Et


def compute_tractions(system: DropSystem, field: AppliedField, R: float,
                      Q: float, rtol: float = 1e-12, x0=None):
    """Full electric pipeline: E_n solve, mean/tangential, traction.

    Returns (per-drop SurfaceEField, per-drop traction grids, iterations).
    """
    En_fields, iters = solve_En(system, field, R, rtol=rtol, x0=x0)
    sfs = mean_and_tangential(system, field, R, En_fields)
    tractions = [electric_traction(sf, R, Q) for sf in sfs]
    return sfs, tractions, iters
