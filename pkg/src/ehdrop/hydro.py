"""Interfacial mechanics and the Stokes boundary-integral velocity solve.

Equation of state (Langmuir or linear) -> surface tension and Marangoni
modulus; interfacial traction f = 2 gamma H n - grad_S gamma; velocity from

    (lam + 1) u(x0) = -sum_j S_j[f/Ca_E - f^E](x0)
                      + (lam - 1) sum_j D_j[u](x0),

with S and D the Stokes single/double layer sums of the drop system.  For
lam = 1 the double layer drops out and the velocity is explicit; otherwise a
matrix-free GMRES iterates on the packed spherical-harmonic coefficients of
the three velocity components per drop.

Everything is dimensionless: lengths in undeformed radii, velocities in the
electric scale, tensions in the equilibrium tension (so the interfacial
force enters divided by Ca_E).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
import math

import numpy as np
import scipy.sparse.linalg as spla

from . import sht
from .sht import SpectralField, get_basis, pack_real, unpack_real
from .surface import DropState, SurfaceGeometry
from .system import DropSystem
from .efield import SolverError


class EOSDomainError(RuntimeError):
    """Langmuir coverage x_s * Gamma reached 1 somewhere on a surface."""


@dataclass
class PhysicalParams:
    """Dimensionless material and field constants of a scenario.

    Langmuir EOS: gamma = gamma0 (1 + beta ln(1 - x_s Gamma)); gamma0 = None
    normalizes the equilibrium tension gamma(1) to 1, consistent with the
    electric capillary number being defined on the equilibrium tension.
    Linear EOS: gamma = 1 + beta_tilde (1 - Gamma).  Pe = inf selects the
    non-diffusing surfactant branch.
    """
    lam: float = 1.0
    R: float = 1.0
    Q: float = 1.0
    Ca_E: float = 0.1
    Pe: float = math.inf
    eos: str = "linear"
    beta: float = 0.0
    x_s: float = 0.0
    gamma0: float | None = None
    beta_tilde: float = 0.0
    E_u: float = 0.0
    E_q: float = 0.0
    clean: bool = False

    def __post_init__(self):
        for name in ("lam", "R", "Q", "Ca_E"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.Pe <= 0.0:
            raise ValueError("Pe must be positive (inf allowed)")
        if self.eos not in ("langmuir", "linear"):
            raise ValueError(f"unknown equation of state {self.eos!r}")
        if self.eos == "langmuir" and not (0.0 <= self.x_s < 1.0):
            raise ValueError("surface coverage x_s must lie in [0, 1)")

    def gamma_reference(self) -> float:
        """Langmuir gamma0, auto-normalized to unit equilibrium tension."""
        if self.gamma0 is not None:
            return self.gamma0
        return 1.0 / (1.0 + self.beta * math.log(1.0 - self.x_s))


def eos_gamma(gamma_vals: np.ndarray, params: PhysicalParams):
    """Surface tension and d(gamma)/d(Gamma) from concentration samples."""
    if params.clean:
        return np.ones_like(gamma_vals), np.zeros_like(gamma_vals)
    if params.eos == "langmuir":
        arg = 1.0 - params.x_s * gamma_vals
        if np.any(arg <= 0.0):
            raise EOSDomainError("Langmuir EOS out of domain: x_s*Gamma >= 1")
        g0 = params.gamma_reference()
        gam = g0 * (1.0 + params.beta * np.log(arg))
        dgam = -g0 * params.beta * params.x_s / arg
        return gam, dgam
    gam = 1.0 + params.beta_tilde * (1.0 - gamma_vals)
    return gam, np.full_like(gamma_vals, -params.beta_tilde)


def interfacial_force(state: DropState, geom: SurfaceGeometry,
                      params: PhysicalParams) -> np.ndarray:
    """f = 2 gamma H n - (dgamma/dGamma) grad_S Gamma on the geometry grid."""
    gv = geom.values(state.gamma)
    gam, dgam = eos_gamma(gv, params)
    f = 2.0 * (gam * geom.H)[None, :, :] * geom.n
    if not params.clean:
        f = f - dgam[None, :, :] * geom.surface_grad(state.gamma)
    return f


def project_forcing(system: DropSystem, forcings) -> tuple:
    """Band-limit geometry-grid forcings; return (coeff stacks, base values)."""
    p = system.states[0].p
    coeffs, base_vals = [], []
    bb = get_basis(p)
    for i, f in enumerate(forcings):
        ba = get_basis(system.geoms[i].grid.p, p)
        cs = np.stack([ba.analyze(f[a]) for a in range(3)])
        coeffs.append(cs)
        base_vals.append(np.stack([bb.synthesize(cs[a]) for a in range(3)]))
    return coeffs, base_vals


def solve_velocity(system: DropSystem, forcings, params: PhysicalParams,
                   rtol: float = 1e-11, x0=None):
    """Velocity coefficient stacks per drop from geometry-grid forcings.

    ``forcings``: per-drop (3, ...) samples of f/Ca_E - f^E on the geometry
    grid.  Returns (list of (3, p+1, 2p+1) stacks, gmres iterations).
    """
    p = system.states[0].p
    lam = params.lam
    coeffs, base_vals = project_forcing(system, forcings)
    S = system.apply_stokes("stokes_sl", base_vals, direct_coeffs=coeffs)
    basis = get_basis(p)
    rhs = []
    for i in range(system.nd):
        shape = system.ops[i].base.shape
        rhs.append(np.stack([basis.analyze((-S[i][a]).reshape(shape))
                             for a in range(3)]))
    if abs(lam - 1.0) < 1e-15:
        return [r * 0.5 for r in rhs], 0

    for op_ in system.ops:
        op_.build(["stokes_dl"])
    nd = system.nd
    ndof = sht.n_real_dof(p)

    def pack3(stack):
        return np.concatenate([pack_real(stack[a], p) for a in range(3)])

    def unpack3(v):
        return np.stack([unpack_real(v[a * ndof:(a + 1) * ndof], p)
                         for a in range(3)])

    def matvec(v):
        stacks = [unpack3(v[i * 3 * ndof:(i + 1) * 3 * ndof]) for i in range(nd)]
        vals = [np.stack([basis.synthesize(s[a]) for a in range(3)])
                for s in stacks]
        D = system.apply_stokes("stokes_dl", vals)
        out = np.empty_like(v)
        for i in range(nd):
            shape = system.ops[i].base.shape
            resid = (lam + 1.0) * vals[i].reshape(3, -1) - (lam - 1.0) * D[i]
            out[i * 3 * ndof:(i + 1) * 3 * ndof] = pack3(
                np.stack([basis.analyze(resid[a].reshape(shape))
                          for a in range(3)]))
        return out

    b = np.concatenate([pack3(r) for r in rhs])
    A = spla.LinearOperator((nd * 3 * ndof, nd * 3 * ndof), matvec=matvec)
    guess = None
    if x0 is not None:
        guess = np.concatenate([pack3(s) for s in x0])
    from .efield import _gmres
    sol, iters = _gmres(A, b, rtol, x0=guess)
    stacks = [unpack3(sol[i * 3 * ndof:(i + 1) * 3 * ndof]) for i in range(nd)]
    return stacks, iters


def surface_velocity(system: DropSystem, ustacks, i: int) -> np.ndarray:
    """Velocity samples of drop i on its geometry grid."""
    geom = system.geoms[i]
    return np.stack([geom.values(SpectralField(system.states[0].p, ustacks[i][a]))
                     for a in range(3)])


def velocity_flux(system: DropSystem, ustacks, i: int) -> float:
    """Volume-change rate: surface flux of u.n (incompressibility check)."""
    ug = surface_velocity(system, ustacks, i)
    return system.geoms[i].integrate(np.sum(ug * system.geoms[i].n, axis=0))
