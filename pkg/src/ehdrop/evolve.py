"""Adaptive time stepping of the coupled drop/surfactant system.

One step runs the traction pipeline (electrostatics, interfacial force,
Stokes solve) at the current time, predicts the midpoint, runs the pipeline
again there, and advances positions with the midpoint velocity while the
concentration takes its IMEX update.  The local error compares the
second-order results against forward-Euler predictions; a step is accepted
when it beats the tolerance, after which the surface parametrization is
re-optimized.  The step size always follows dt <- dt (0.9 tol/err)^(1/2)
within [dt_min, dt_max].
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield, replace
import math

import numpy as np

from . import sht, transport
from .sht import SpectralField, get_basis, get_grid
from .surface import DropState, GeometryError, geometry, surfactant_mass
from .system import DropSystem
from .quad import NearEvalPlan
from .efield import AppliedField, SolverError, compute_tractions
from .hydro import EOSDomainError, PhysicalParams, interfacial_force, \
    solve_velocity, surface_velocity


@dataclass
class StepController:
    """Step-size law dt <- dt (0.9 tol/err)^(1/2), clipped to [dt_min, dt_max]."""
    dt: float
    tol: float = 1e-6
    safety: float = 0.9
    exponent: float = 0.5
    dt_min: float = 1e-8
    dt_max: float = 0.5

    def propose(self, err: float) -> float:
        if err <= 0.0:
            return self.dt_max
        fac = (self.safety * self.tol / err) ** self.exponent
        return float(min(max(self.dt * fac, self.dt_min), self.dt_max))


@dataclass(frozen=True)
class ReparamSettings:
    """High-frequency attenuation profile and descent controls.

    rho(n) = 0 up to cutoff_frac*p, then ((n - cut)/(p - cut))^power; the
    descent moves grid points tangentially (via their preimage parameters in
    the original surface chart) until the relative energy drop per iteration
    falls below ``threshold``.
    """
    enabled: bool = True
    cutoff_frac: float = 0.5
    power: float = 2.0
    max_iter: int = 15
    step: float = 0.35
    threshold: float = 1e-3


@dataclass
class NumericsOptions:
    upsample: int | str = 2
    sing_upsample: float = 2.0
    near_plan: NearEvalPlan = dfield(default_factory=NearEvalPlan)
    reparam: ReparamSettings = dfield(default_factory=ReparamSettings)
    gmres_rtol: float = 1e-12


@dataclass
class StepResult:
    states: list
    accepted: bool
    err: float
    dt_used: float
    dt_next: float
    umax: float = 0.0
    unmax: float = 0.0
    utmax: float = 0.0
    en_iters: int = 0
    stokes_iters: int = 0
    reparam_iters: int = 0
    failure: str | None = None
    umax_drop: list = dfield(default_factory=list)
    unmax_drop: list = dfield(default_factory=list)
    utmax_drop: list = dfield(default_factory=list)
    enmax_drop: list = dfield(default_factory=list)


# ----------------------------------------------------------------------------
# traction pipeline
# ----------------------------------------------------------------------------

def velocity_of_states(states, params: PhysicalParams, field: AppliedField,
                       opts: NumericsOptions, warm=None):
    """Build a DropSystem and run tractions -> velocity once.

    Returns (system, velocity stacks, info dict).
    """
    system = DropSystem(states, upsample=opts.upsample,
                        sing_upsample=opts.sing_upsample,
                        near_plan=opts.near_plan)
    warm = warm or {}
    en_iters = 0
    tractions = None
    enmax = [0.0] * system.nd
    if (field.E_u != 0.0 or field.E_q != 0.0):
        sfs, tractions, en_iters = compute_tractions(
            system, field, params.R, params.Q, rtol=opts.gmres_rtol,
            x0=warm.get("En"))
        warm["En"] = [sf.En_field for sf in sfs]
        enmax = [float(np.abs(sf.En).max()) for sf in sfs]
    forcings = []
    for i, st in enumerate(states):
        f = interfacial_force(st, system.geoms[i], params) / params.Ca_E
        if tractions is not None:
            f = f - tractions[i]
        forcings.append(f)
    ustacks, st_iters = solve_velocity(system, forcings, params,
                                       rtol=max(opts.gmres_rtol, 1e-12),
                                       x0=warm.get("u"))
    warm["u"] = ustacks
    info = {"en_iters": en_iters, "stokes_iters": st_iters, "warm": warm,
            "enmax": enmax}
    return system, ustacks, info


def _advance_positions(states, ustacks, dt: float):
    out = []
    for st, u in zip(states, ustacks):
        fields = []
        for a, f in enumerate(st.position_fields()):
            fields.append(SpectralField(st.p, f.c + dt * u[a]))
        out.append(DropState(fields[0], fields[1], fields[2], st.gamma.copy()))
    return out


def estimate_error(states_t, states_second, ustacks_t, gammas_euler, dt: float):
    """max over drops of the Euler-vs-second-order discrepancy (inf norm)."""
    p = states_t[0].p
    basis = get_basis(p)
    err = 0.0
    for st, s2, u, ge in zip(states_t, states_second, ustacks_t, gammas_euler):
        for a, f in enumerate(st.position_fields()):
            euler_c = f.c + dt * u[a]
            diff = basis.synthesize(s2.position_fields()[a].c - euler_c)
            err = max(err, float(np.abs(diff).max()))
        diffg = basis.synthesize(s2.gamma.c - ge.c)
        err = max(err, float(np.abs(diffg).max()))
    return err


# ----------------------------------------------------------------------------
# reparametrization
# ----------------------------------------------------------------------------

def attenuation_profile(p: int, settings: ReparamSettings) -> np.ndarray:
    ns = np.arange(p + 1, dtype=float)
    cut = settings.cutoff_frac * p
    rho = np.where(ns <= cut, 0.0,
                   ((ns - cut) / max(p - cut, 1.0)) ** settings.power)
    rho[:2] = 0.0
    return rho


def _hf_energy(coeff_stacks, rho):
    tot = 0.0
    for c in coeff_stacks:
        tot += float(np.sum(rho * np.sum(np.abs(c) ** 2, axis=1)))
    return tot


def reparametrize(state: DropState, settings: ReparamSettings | None = None):
    """Tangential grid redistribution minimizing high-frequency shape energy.

    Grid nodes keep exact preimage parameters in the original surface chart,
    so the surface never moves and the concentration rides along as a
    material field (re-evaluated at the preimages).  Returns
    (new state, iterations, energy_before, energy_after).
    """
    settings = settings or ReparamSettings()
    p = state.p
    grid = get_grid(p)
    basis = get_basis(p)
    rho = attenuation_profile(p, settings)
    fields = state.position_fields()

    Theta = np.repeat(grid.theta[:, None], grid.shape[1], axis=1).copy()
    Phi = np.repeat(grid.phi[None, :], grid.shape[0], axis=0).copy()

    def positions(th, ph):
        return np.stack(sht.evaluate_many(fields, th, ph)[0])

    def coeffs_of(Xv):
        return [basis.analyze(Xv[a]) for a in range(3)]

    Xv = np.stack([basis.synthesize(f.c) for f in fields])
    cs = coeffs_of(Xv)
    E0 = _hf_energy(cs, rho)
    scale2 = sum(float(np.sum(np.abs(c) ** 2)) for c in cs)
    if E0 < 1e-28 * max(scale2, 1.0) or not settings.enabled:
        return state.copy(), 0, E0, E0

    eta = settings.step
    E = E0
    it = 0
    while it < settings.max_iter:
        it += 1
        grad = np.stack([basis.synthesize(rho[:, None] * c) for c in cs])
        dXt, dXp = sht.evaluate_many(fields, Theta, Phi,
                                     derivs=((1, 0), (0, 1)))
        Xt = np.stack(dXt)
        Xp = np.stack(dXp)
        Wn = np.cross(Xt, Xp, axis=0)
        W2 = np.sum(Wn * Wn, axis=0)
        nrm = Wn / np.sqrt(W2)
        tang = grad - np.sum(grad * nrm, axis=0)[None] * nrm
        # parameter increments from the tangential displacement
        Ee = np.sum(Xt * Xt, axis=0)
        Ff = np.sum(Xt * Xp, axis=0)
        Gg = np.sum(Xp * Xp, axis=0)
        bt = np.sum(tang * Xt, axis=0)
        bp = np.sum(tang * Xp, axis=0)
        det = Ee * Gg - Ff ** 2
        dth = -(Gg * bt - Ff * bp) / det
        dph = -(Ee * bp - Ff * bt) / det
        # trust region in arc length
        sname = np.sqrt(Ee) * np.abs(dth) + np.sqrt(np.maximum(Gg, 1e-300)) * np.abs(dph)
        cap = np.max(sname)
        lim = 0.2 / max(cap, 1e-300)
        while True:
            stepfac = eta * min(1.0, lim / max(eta, 1e-300))
            Th2 = np.clip(Theta + stepfac * dth, 1e-8, math.pi - 1e-8)
            Ph2 = (Phi + stepfac * dph) % (2.0 * math.pi)
            Xv2 = positions(Th2, Ph2)
            cs2 = coeffs_of(Xv2)
            E2 = _hf_energy(cs2, rho)
            if E2 < E or eta < 1e-6:
                break
            eta *= 0.5
        if E2 >= E:
            break
        Theta, Phi, Xv, cs = Th2, Ph2, Xv2, cs2
        drop = (E - E2) / max(E, 1e-300)
        E = E2
        eta = min(eta * 1.25, 2.0)
        if drop < settings.threshold:
            break

    gnew = basis.analyze(sht.evaluate(state.gamma, Theta, Phi))
    new = DropState(SpectralField(p, cs[0]), SpectralField(p, cs[1]),
                    SpectralField(p, cs[2]), SpectralField(p, gnew))
    return new, it, E0, E


# ----------------------------------------------------------------------------
# one adaptive step
# ----------------------------------------------------------------------------

def step(states, params: PhysicalParams, field: AppliedField,
         controller: StepController, opts: NumericsOptions | None = None,
         warm=None) -> StepResult:
    """One attempt at advancing the system by controller.dt (Algorithm flow:
    tractions at t, midpoint predictor, tractions at midpoint, full update,
    error control, reparametrization on acceptance)."""
    opts = opts or NumericsOptions()
    dt = controller.dt
    try:
        sys_t, u_t, info_t = velocity_of_states(states, params, field, opts,
                                                warm=warm)
        u_t_geom = [surface_velocity(sys_t, u_t, i) for i in range(sys_t.nd)]
        gE_t = [transport.convective_rhs(states[i].gamma, sys_t.geoms[i],
                                         u_t_geom[i]) for i in range(sys_t.nd)]
        gI_t = [transport.diffusion_rhs(states[i].gamma, sys_t.geoms[i],
                                        params.Pe) for i in range(sys_t.nd)]

        states_mid = _advance_positions(states, u_t, dt / 2.0)
        geoms_mid = [geometry(s, opts.upsample) for s in states_mid]
        gammas_mid = []
        for i in range(sys_t.nd):
            half_rhs = states[i].gamma + (dt / 2.0) * gE_t[i]
            gmid, _ = transport.implicit_diffusion_solve(
                geoms_mid[i], half_rhs, dt / 2.0, params.Pe,
                rtol=opts.gmres_rtol)
            gammas_mid.append(gmid)
            states_mid[i] = DropState(states_mid[i].x, states_mid[i].y,
                                      states_mid[i].z, gmid)
        sys_m, u_m, info_m = velocity_of_states(states_mid, params, field,
                                                opts, warm=info_t["warm"])
        states_new = _advance_positions(states, u_m, dt)
        gammas_euler = []
        for i in range(sys_t.nd):
            u_m_geom = surface_velocity(sys_m, u_m, i)
            gE_mid = transport.convective_rhs(gammas_mid[i], sys_m.geoms[i],
                                              u_m_geom)
            gI_mid = transport.diffusion_rhs(gammas_mid[i], sys_m.geoms[i],
                                             params.Pe)
            gnew = states[i].gamma + dt * (gE_mid + gI_mid)
            states_new[i] = DropState(states_new[i].x, states_new[i].y,
                                      states_new[i].z, gnew)
            gammas_euler.append(states[i].gamma + dt * (gE_t[i] + gI_t[i]))
    except (EOSDomainError, SolverError, GeometryError) as exc:
        return StepResult(states=list(states), accepted=False, err=math.inf,
                          dt_used=dt,
                          dt_next=max(dt / 2.0, controller.dt_min),
                          failure=f"{type(exc).__name__}: {exc}")

    err = estimate_error(states, states_new, u_t, gammas_euler, dt)
    accepted = err < controller.tol
    dt_next = controller.propose(err)
    u_d, un_d, ut_d = [], [], []
    for i in range(sys_t.nd):
        ug = u_t_geom[i]
        un = np.sum(ug * sys_t.geoms[i].n, axis=0)
        ut_ = ug - un[None] * sys_t.geoms[i].n
        u_d.append(float(np.sqrt(np.sum(ug * ug, axis=0)).max()))
        un_d.append(float(np.abs(un).max()))
        ut_d.append(float(np.sqrt(np.sum(ut_ * ut_, axis=0)).max()))
    umax, unmax, utmax = max(u_d), max(un_d), max(ut_d)
    rp_iters = 0
    if accepted and opts.reparam.enabled:
        fixed = []
        for s in states_new:
            ns, ri, _, _ = reparametrize(s, opts.reparam)
            fixed.append(ns)
            rp_iters = max(rp_iters, ri)
        states_new = fixed
    return StepResult(states=states_new if accepted else list(states),
                      accepted=accepted, err=err, dt_used=dt, dt_next=dt_next,
                      umax=umax, unmax=unmax, utmax=utmax,
                      en_iters=info_t["en_iters"] + info_m["en_iters"],
                      stokes_iters=info_t["stokes_iters"] + info_m["stokes_iters"],
                      reparam_iters=rp_iters, umax_drop=u_d, unmax_drop=un_d,
                      utmax_drop=ut_d, enmax_drop=info_t["enmax"])
