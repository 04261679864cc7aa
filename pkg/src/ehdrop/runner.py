"""Scenario front end: text configs, simulation loop, output files, CLI.

Config files are line-oriented ``section.key = value`` text; unknown keys
are rejected, missing mandatory keys (physics.R, physics.Q, numerics.p)
raise with the key path.  ``ehdrop run <config>`` integrates the scenario
and writes a deterministic CSV time series (one row per accepted step,
17 significant digits) plus coefficient snapshots; ``ehdrop spt`` prints
small-deformation tables; ``ehdrop convergence`` reruns a scenario over a
list of spectral orders against the finest as reference.  Exit codes:
0 ok, 1 config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import logging
import math
import os
import sys

import numpy as np

from . import sht, spt, surface, evolve
from .sht import SpectralField
from .surface import DropState, sphere_state
from .efield import AppliedField
from .hydro import PhysicalParams
from .quad import NearEvalPlan

log = logging.getLogger("ehdrop")


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# configuration schema
# ----------------------------------------------------------------------------

@dataclasses.dataclass
class DropConfig:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    gamma0: float = 1.0
    snapshot: str | None = None


@dataclasses.dataclass
class NumericsConfig:
    p: int = 9
    tol: float = 1e-5
    dt0: float = 0.01
    dt_min: float = 1e-8
    dt_max: float = 0.5
    T_max: float = 1.0
    upsample: object = 2          # int factor or 'adaptive'
    sing_upsample: float = 2.0
    near_d: float = 1.0
    near_m_up: int = 4
    near_n_lag: int = 8
    near_reach: float = 3.0
    reparam: bool = True
    reparam_max_iter: int = 15
    reparam_threshold: float = 1e-3
    field_off_time: float = math.inf
    stop_when_steady: bool = False
    steady_tol: float = 1e-6
    steady_window: float = 1.0
    gmres_rtol: float = 1e-12


@dataclasses.dataclass
class OutputConfig:
    timeseries: str | None = None
    snapshot_every: float = 0.0
    snapshot_prefix: str | None = None


@dataclasses.dataclass
class ScenarioConfig:
    physics: PhysicalParams = dataclasses.field(default_factory=PhysicalParams)
    numerics: NumericsConfig = dataclasses.field(default_factory=NumericsConfig)
    outputs: OutputConfig = dataclasses.field(default_factory=OutputConfig)
    drops: list = dataclasses.field(default_factory=lambda: [DropConfig()])


_PHYSICS_KEYS = {
    "R": ("R", float), "Q": ("Q", float), "lambda": ("lam", float),
    "Ca_E": ("Ca_E", float), "Pe": ("Pe", float), "eos": ("eos", str),
}
_SURF_KEYS = {
    "beta": ("beta", float), "x_s": ("x_s", float),
    "gamma0": ("gamma0", float), "beta_tilde": ("beta_tilde", float),
    "enabled": ("enabled", bool),
}
_FIELD_KEYS = {"E_u": float, "E_q": float}
_NUM_KEYS = {
    "p": int, "tol": float, "dt0": float, "dt_min": float, "dt_max": float,
    "T_max": float, "upsample": "upsample", "sing_upsample": float,
    "near_d": float, "near_m_up": int, "near_n_lag": int, "near_reach": float,
    "reparam": bool, "reparam_max_iter": int, "reparam_threshold": float,
    "field_off_time": float, "stop_when_steady": bool, "steady_tol": float,
    "steady_window": float, "gmres_rtol": float,
}
_OUT_KEYS = {"timeseries": str, "snapshot_every": float, "snapshot_prefix": str}
_DROP_KEYS = {"center", "radius", "gamma0", "snapshot"}


def _to_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected boolean, got {s!r}")


def _convert(value: str, typ):
    if typ is bool:
        return _to_bool(value)
    if typ is float:
        return float(value)
    if typ is int:
        return int(value)
    return value


def parse_config(text: str) -> ScenarioConfig:
    """Parse the section.key = value format; strict about unknown keys."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in body.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} lacks a section")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    for need in ("physics.R", "physics.Q", "numerics.p"):
        if need not in raw:
            raise ConfigError(f"missing mandatory key {need}")

    phys_kwargs: dict = {}
    surf_kwargs: dict = {"enabled": True}
    field_vals = {"E_u": 0.0, "E_q": 0.0}
    num = NumericsConfig()
    out = OutputConfig()
    drops: dict = {}

    for key, value in raw.items():
        section, name = key.split(".", 1)
        try:
            if section == "physics":
                if name not in _PHYSICS_KEYS:
                    raise ConfigError(f"unknown key {key}")
                attr, typ = _PHYSICS_KEYS[name]
                phys_kwargs[attr] = _convert(value, typ)
            elif section == "surfactant":
                if name not in _SURF_KEYS:
                    raise ConfigError(f"unknown key {key}")
                attr, typ = _SURF_KEYS[name]
                surf_kwargs[attr] = _convert(value, typ)
            elif section == "field":
                if name not in _FIELD_KEYS:
                    raise ConfigError(f"unknown key {key}")
                field_vals[name] = float(value)
            elif section == "numerics":
                if name not in _NUM_KEYS:
                    raise ConfigError(f"unknown key {key}")
                typ = _NUM_KEYS[name]
                if typ == "upsample":
                    num.upsample = value if value == "adaptive" else int(value)
                else:
                    setattr(num, name, _convert(value, typ))
            elif section == "outputs":
                if name not in _OUT_KEYS:
                    raise ConfigError(f"unknown key {key}")
                setattr(out, name, _convert(value, _OUT_KEYS[name]))
            elif section.startswith("drop"):
                idx = section[4:]
                if not idx.isdigit():
                    raise ConfigError(f"unknown section {section!r}")
                if name not in _DROP_KEYS:
                    raise ConfigError(f"unknown key {key}")
                d = drops.setdefault(int(idx), DropConfig())
                if name == "center":
                    parts = value.split()
                    if len(parts) != 3:
                        raise ConfigError(f"{key}: center needs three numbers")
                    d.center = tuple(float(v) for v in parts)
                elif name == "radius":
                    d.radius = float(value)
                elif name == "gamma0":
                    d.gamma0 = float(value)
                else:
                    d.snapshot = value
            else:
                raise ConfigError(f"unknown section {section!r} in key {key}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    enabled = surf_kwargs.pop("enabled")
    phys_kwargs.update({k: v for k, v in surf_kwargs.items()})
    phys_kwargs["E_u"] = field_vals["E_u"]
    phys_kwargs["E_q"] = field_vals["E_q"]
    phys_kwargs["clean"] = not enabled
    try:
        physics = PhysicalParams(**phys_kwargs)
    except ValueError as exc:
        key = _field_to_key(str(exc))
        raise ConfigError(f"{key}: {exc}") from None

    if num.p < 2 or num.p > sht.P_MAX:
        raise ConfigError(f"numerics.p: order must be in [2, {sht.P_MAX}]")
    if num.tol <= 0 or num.dt0 <= 0 or num.T_max < 0:
        raise ConfigError("numerics: tol, dt0 must be positive; T_max >= 0")

    cfg = ScenarioConfig(physics=physics, numerics=num, outputs=out)
    if drops:
        cfg.drops = [drops[k] for k in sorted(drops)]
    return cfg


def _field_to_key(msg: str) -> str:
    table = {"lam": "physics.lambda", "R": "physics.R", "Q": "physics.Q",
             "Ca_E": "physics.Ca_E", "Pe": "physics.Pe", "eos": "physics.eos",
             "x_s": "surfactant.x_s"}
    for name, key in table.items():
        if name in msg.split():
            return key
    return "physics"


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def echo_config(cfg: ScenarioConfig):
    log.info("resolved configuration:")
    for line in format_config(cfg).splitlines():
        log.info("  %s", line)


def format_config(cfg: ScenarioConfig) -> str:
    buf = io.StringIO()
    ph = cfg.physics
    buf.write(f"physics.R = {ph.R}\nphysics.Q = {ph.Q}\n"
              f"physics.lambda = {ph.lam}\nphysics.Ca_E = {ph.Ca_E}\n"
              f"physics.Pe = {ph.Pe}\nphysics.eos = {ph.eos}\n")
    buf.write(f"surfactant.enabled = {not ph.clean}\n"
              f"surfactant.beta = {ph.beta}\nsurfactant.x_s = {ph.x_s}\n"
              f"surfactant.beta_tilde = {ph.beta_tilde}\n")
    if ph.gamma0 is not None:
        buf.write(f"surfactant.gamma0 = {ph.gamma0}\n")
    buf.write(f"field.E_u = {ph.E_u}\nfield.E_q = {ph.E_q}\n")
    for f in dataclasses.fields(cfg.numerics):
        buf.write(f"numerics.{f.name} = {getattr(cfg.numerics, f.name)}\n")
    for f in dataclasses.fields(cfg.outputs):
        v = getattr(cfg.outputs, f.name)
        if v is not None:
            buf.write(f"outputs.{f.name} = {v}\n")
    for i, d in enumerate(cfg.drops, 1):
        buf.write(f"drop{i}.center = {d.center[0]} {d.center[1]} {d.center[2]}\n")
        buf.write(f"drop{i}.radius = {d.radius}\n")
        buf.write(f"drop{i}.gamma0 = {d.gamma0}\n")
        if d.snapshot:
            buf.write(f"drop{i}.snapshot = {d.snapshot}\n")
    return buf.getvalue()


# ----------------------------------------------------------------------------
# snapshots
# ----------------------------------------------------------------------------

def write_snapshot(state: DropState, path: str):
    """Decimal-text snapshot: order p, then x, y, z, Gamma coefficients.

    Each field contributes (p+1)^2 lines 're im', degrees n = 0..p outer,
    orders m = -n..n inner.
    """
    p = state.p
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{p}\n")
        for f in (state.x, state.y, state.z, state.gamma):
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    z = f.c[n, p + m]
                    fh.write(f"{z.real:.17g} {z.imag:.17g}\n")


def read_snapshot(path: str) -> DropState:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    p = int(lines[0])
    need = 4 * (p + 1) ** 2
    if len(lines) - 1 != need:
        raise ConfigError(f"snapshot {path}: expected {need} coefficient "
                          f"lines for p={p}, found {len(lines) - 1}")
    vals = np.array([[float(t) for t in ln.split()] for ln in lines[1:]])
    zs = vals[:, 0] + 1j * vals[:, 1]
    fields = []
    k = 0
    for _ in range(4):
        c = np.zeros((p + 1, 2 * p + 1), dtype=complex)
        for n in range(p + 1):
            for m in range(-n, n + 1):
                c[n, p + m] = zs[k]
                k += 1
        fields.append(SpectralField(p, c))
    return DropState(*fields)


def build_states(cfg: ScenarioConfig) -> list:
    states = []
    for d in cfg.drops:
        if d.snapshot:
            st = read_snapshot(d.snapshot)
            if st.p != cfg.numerics.p:
                st = st.resample(cfg.numerics.p)
            states.append(st)
        else:
            states.append(sphere_state(cfg.numerics.p, radius=d.radius,
                                       center=d.center, gamma0=d.gamma0))
    return states


# ----------------------------------------------------------------------------
# time series
# ----------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def timeseries_header(nd: int) -> str:
    cols = ["t", "dt"]
    for i in range(1, nd + 1):
        cols += [f"D{i}", f"volume{i}", f"area{i}", f"mass{i}",
                 f"cx{i}", f"cy{i}", f"cz{i}", f"umax{i}",
                 f"gamma_min{i}", f"gamma_max{i}", f"Enmax{i}"]
    return ",".join(cols)


def timeseries_row(t, dt, states, res) -> str:
    vals = [t, dt]
    for i, st in enumerate(states):
        geom = surface.geometry(st, 2)
        gvals = geom.values(st.gamma)
        vals += [surface.measure_deformation(st),
                 surface.volume(st, geom), surface.area(st, geom),
                 surface.surfactant_mass(st, geom),
                 *surface.centroid(st, geom),
                 res.umax_drop[i] if res.umax_drop else 0.0,
                 float(gvals.min()), float(gvals.max()),
                 res.enmax_drop[i] if res.enmax_drop else 0.0]
    return ",".join(_fmt(v) for v in vals)


# ----------------------------------------------------------------------------
# scenario loop
# ----------------------------------------------------------------------------

def run_scenario(cfg: ScenarioConfig, csv_sink=None, progress=None) -> dict:
    """Integrate the configured scenario; returns a summary dictionary."""
    echo_config(cfg)
    num = cfg.numerics
    states = build_states(cfg)
    params = cfg.physics
    opts = evolve.NumericsOptions(
        upsample=num.upsample, sing_upsample=num.sing_upsample,
        near_plan=NearEvalPlan(d_near=num.near_d, m_up=num.near_m_up,
                               n_lag=num.near_n_lag, reach=num.near_reach),
        reparam=evolve.ReparamSettings(enabled=num.reparam,
                                       max_iter=num.reparam_max_iter,
                                       threshold=num.reparam_threshold),
        gmres_rtol=num.gmres_rtol)
    ctrl = evolve.StepController(dt=num.dt0, tol=num.tol,
                                 dt_min=num.dt_min, dt_max=num.dt_max)
    vol0 = [surface.volume(s) for s in states]
    mass0 = [surface.surfactant_mass(s) for s in states]

    rows = []
    own_csv = None
    sink = csv_sink
    if sink is None and cfg.outputs.timeseries:
        own_csv = open(cfg.outputs.timeseries, "w", encoding="utf-8")
        sink = own_csv
    if sink is not None:
        sink.write(timeseries_header(len(states)) + "\n")

    t = 0.0
    snap_idx = 0
    next_snap = 0.0
    steady_since = None
    nrej = 0
    warm = None
    summary: dict = {"steps": 0, "rejected": 0, "stopped": "T_max"}
    try:
        while t < num.T_max - 1e-14:
            field = AppliedField(params.E_u, params.E_q)
            if t >= num.field_off_time:
                field = AppliedField(0.0, 0.0)
            ctrl.dt = min(ctrl.dt, num.T_max - t)
            if num.field_off_time > t and num.field_off_time < t + ctrl.dt:
                ctrl.dt = num.field_off_time - t
            res = evolve.step(states, params, field, ctrl, opts, warm=warm)
            if res.failure:
                log.warning("step failed at t=%.6g: %s", t, res.failure)
                warm = None
            if res.accepted:
                states = res.states
                t += res.dt_used
                summary["steps"] += 1
                if sink is not None or progress is not None:
                    row = timeseries_row(t, res.dt_used, states, res)
                    if sink is not None:
                        sink.write(row + "\n")
                    rows.append(row)
                if progress:
                    progress(t, states, res)
                if cfg.outputs.snapshot_prefix and cfg.outputs.snapshot_every > 0:
                    if t >= next_snap - 1e-12:
                        for i, s in enumerate(states, 1):
                            write_snapshot(
                                s, f"{cfg.outputs.snapshot_prefix}."
                                   f"d{i}.{snap_idx:05d}.snap")
                        snap_idx += 1
                        next_snap += cfg.outputs.snapshot_every
                metric = res.unmax if params.clean else res.umax
                if num.stop_when_steady:
                    if metric < num.steady_tol:
                        if steady_since is None:
                            steady_since = t
                        elif t - steady_since >= num.steady_window:
                            summary["stopped"] = "steady"
                            break
                    else:
                        steady_since = None
            else:
                nrej += 1
                if res.dt_next <= num.dt_min * (1 + 1e-12) and \
                        ctrl.dt <= num.dt_min * (1 + 1e-12):
                    raise RuntimeError(
                        f"step size collapsed to dt_min at t={t:.6g} "
                        f"(err={res.err:.3g}, failure={res.failure})")
            ctrl.dt = res.dt_next
            summary["rejected"] = nrej
    finally:
        if own_csv is not None:
            own_csv.close()

    summary.update({
        "t_final": t,
        "states": states,
        "volume_drift": [abs(surface.volume(s) - v0) / abs(v0)
                         for s, v0 in zip(states, vol0)],
        "mass_drift": [abs(surface.surfactant_mass(s) - m0) / abs(m0)
                       for s, m0 in zip(states, mass0)],
        "D": [surface.measure_deformation(s) for s in states],
        "last_result": res if summary["steps"] or nrej else None,
        "rows": rows,
    })
    log.info("finished at t=%.6g after %d steps (%d rejected); "
             "volume drift %s; mass drift %s", t, summary["steps"], nrej,
             summary["volume_drift"], summary["mass_drift"])
    return summary


# ----------------------------------------------------------------------------
# SPT tables
# ----------------------------------------------------------------------------

def spt_table(field_kind: str, drop_kind: str, R: float, Q: float,
              ca_values, beta_tilde: float | None = None,
              s: float = 2.0) -> str:
    """CSV text: Ca_E sweep of the deformation parameter at orders 1 and 2."""
    lines = ["Ca_E,D_order1,D_order2"]
    for ca in ca_values:
        d1 = spt.D_steady(field_kind, drop_kind, R, Q, ca, order=1)
        d2 = spt.D_steady(field_kind, drop_kind, R, Q, ca, order=2,
                          beta_tilde=beta_tilde, s=s)
        lines.append(f"{_fmt(ca)},{_fmt(d1)},{_fmt(d2)}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# convergence study
# ----------------------------------------------------------------------------

def surface_distance(state_ref: DropState, state: DropState) -> float:
    """Max distance from reference base nodes to the other surface."""
    from .quad import nearest_point
    geom = surface.SurfaceGeometry(state_ref, sht.get_grid(state_ref.p))
    pts = geom.X.reshape(3, -1).T
    worst = 0.0
    for k in range(pts.shape[0]):
        _, _, _, _, dist = nearest_point(state, pts[k])
        worst = max(worst, abs(dist))
    return worst


def gamma_distance(state_ref: DropState, state: DropState) -> float:
    from .quad import nearest_point
    geom = surface.SurfaceGeometry(state_ref, sht.get_grid(state_ref.p))
    pts = geom.X.reshape(3, -1).T
    gref = geom.values(state_ref.gamma).ravel()
    worst = 0.0
    for k in range(pts.shape[0]):
        th, ph, _, _, _ = nearest_point(state, pts[k])
        g = sht.evaluate(state.gamma, np.array([th]), np.array([ph]))[0]
        worst = max(worst, abs(g - gref[k]))
    return worst


def convergence_study(cfg: ScenarioConfig, p_list, p_ref: int,
                      reparam_check: bool = False) -> dict:
    """Rerun the scenario across orders against a reference order."""
    def run_at(p, reparam=True):
        c2 = dataclasses.replace(cfg)
        c2.numerics = dataclasses.replace(cfg.numerics, p=p, reparam=reparam)
        c2.outputs = OutputConfig()
        return run_scenario(c2)["states"]

    ref = run_at(p_ref)
    out = {"p_ref": p_ref, "p": [], "err_x": [], "err_gamma": []}
    for p in p_list:
        states = run_at(p)
        out["p"].append(p)
        out["err_x"].append(max(surface_distance(r, s)
                                for r, s in zip(ref, states)))
        out["err_gamma"].append(max(gamma_distance(r, s)
                                    for r, s in zip(ref, states)))
    if reparam_check:
        states = run_at(max(p_list), reparam=False)
        out["err_x_noreparam"] = max(surface_distance(r, s)
                                     for r, s in zip(ref, states))
    return out


# ----------------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------------

PRESETS = {
    # single clean drop in a weak uniform field; transient of the
    # deformation parameter vs the exponential-relaxation model
    "relax-uniform": """
physics.R = 2
physics.Q = 1
physics.lambda = 1
physics.Ca_E = 0.1
physics.Pe = inf
surfactant.enabled = false
field.E_u = 1
numerics.p = 9
numerics.tol = 1e-5
numerics.dt0 = 0.005
numerics.T_max = 1.5
""",
    # surfactant-covered drop in a uniform field (moderate coverage)
    "uniform-surfactant": """
physics.R = 3
physics.Q = 1
physics.lambda = 1
physics.Ca_E = 0.2
physics.Pe = inf
physics.eos = langmuir
surfactant.beta = 0.2
surfactant.x_s = 0.3
field.E_u = 1
numerics.p = 9
numerics.tol = 1e-5
numerics.dt0 = 0.005
numerics.T_max = 3
numerics.stop_when_steady = true
""",
    # highly diffusive surfactant (finite Peclet)
    "uniform-diffusive": """
physics.R = 3
physics.Q = 3.5
physics.lambda = 1
physics.Ca_E = 0.1
physics.Pe = 0.4
physics.eos = langmuir
surfactant.beta = 0.2
surfactant.x_s = 0.3
field.E_u = 1
numerics.p = 9
numerics.tol = 1e-5
numerics.dt0 = 0.005
numerics.T_max = 3
numerics.stop_when_steady = true
""",
    # strong-coverage drop matched to bench experiments
    "uniform-experiment": """
physics.R = 10
physics.Q = 1.3699
physics.lambda = 0.08
physics.Ca_E = 0.2
physics.Pe = inf
physics.eos = langmuir
surfactant.beta = 0.04
surfactant.x_s = 0.96
field.E_u = 1
numerics.p = 9
numerics.tol = 1e-5
numerics.dt0 = 0.002
numerics.T_max = 5
numerics.stop_when_steady = true
""",
    # quadrupole field, clean drop (deformation-table scenario)
    "quad-clean": """
physics.R = 2
physics.Q = 0.01
physics.lambda = 1
physics.Ca_E = 0.03
physics.Pe = inf
surfactant.enabled = false
field.E_q = 1
numerics.p = 13
numerics.tol = 1e-4
numerics.dt0 = 0.002
numerics.T_max = 4
numerics.stop_when_steady = true
numerics.steady_tol = 1e-6
""",
    # quadrupole field, surfactant-covered drop, linear EOS
    "quad-surfactant": """
physics.R = 2
physics.Q = 0.01
physics.lambda = 1
physics.Ca_E = 0.03
physics.Pe = inf
physics.eos = linear
surfactant.beta_tilde = 1
field.E_q = 1
numerics.p = 13
numerics.tol = 1e-4
numerics.dt0 = 0.002
numerics.T_max = 4
numerics.stop_when_steady = true
numerics.steady_tol = 1e-6
""",
    # quadrupole, milder contrast (second-order correction small)
    "quad-mild": """
physics.R = 1
physics.Q = 1.5
physics.lambda = 1
physics.Ca_E = 0.05
physics.Pe = inf
physics.eos = linear
surfactant.beta_tilde = 0.5
field.E_q = 1
numerics.p = 13
numerics.tol = 1e-4
numerics.dt0 = 0.002
numerics.T_max = 4
numerics.stop_when_steady = true
""",
    # combined uniform+quadrupole field: translation plus deformation
    "combined-convergence": """
physics.R = 6
physics.Q = 2
physics.lambda = 1
physics.Ca_E = 0.1
physics.Pe = 100
physics.eos = langmuir
surfactant.beta = 0.2
surfactant.x_s = 0.5
field.E_u = 1
field.E_q = 1
numerics.p = 16
numerics.tol = 1e-7
numerics.dt0 = 0.002
numerics.T_max = 0.1
""",
    # two aligned drops, translation-velocity scaling probe
    "two-drop": """
physics.R = 2
physics.Q = 1
physics.lambda = 1
physics.Ca_E = 0.05
physics.Pe = inf
surfactant.enabled = false
field.E_u = 1
numerics.p = 9
numerics.tol = 1e-5
numerics.dt0 = 0.005
numerics.T_max = 0.01
drop1.center = 0 0 0
drop2.center = 0 0 8
""",
    # three surfactant drops on the x axis in a quadrupole field,
    # field switched off at t = 1
    "three-drop": """
physics.R = 4.5
physics.Q = 5
physics.lambda = 1
physics.Ca_E = 0.1
physics.Pe = 10
physics.eos = langmuir
surfactant.beta = 0.2
surfactant.x_s = 0.3
field.E_q = 1
numerics.p = 11
numerics.tol = 1e-6
numerics.dt0 = 0.005
numerics.T_max = 5
numerics.field_off_time = 1
drop1.center = -4 0 0
drop2.center = 0 0 0
drop3.center = 4 0 0
""",
}


# ----------------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------------

def _threads_from_env():
    n = os.environ.get("EHDROP_NUM_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def main(argv=None) -> int:
    _threads_from_env()
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ap = argparse.ArgumentParser(
        prog="ehdrop",
        description="Boundary-integral electrohydrodynamics of "
                    "surfactant-covered drops")
    sub = ap.add_subparsers(dest="cmd", required=True)

    ap_run = sub.add_parser("run", help="integrate a scenario config")
    ap_run.add_argument("config")

    ap_spt = sub.add_parser("spt", help="small-deformation table (CSV)")
    ap_spt.add_argument("--field", choices=("uniform", "quadrupole"),
                        default="uniform")
    ap_spt.add_argument("--drop", choices=("clean", "surfactant"),
                        default="clean")
    ap_spt.add_argument("--R", type=float, required=True)
    ap_spt.add_argument("--Q", type=float, required=True)
    ap_spt.add_argument("--beta-tilde", type=float, default=None)
    ap_spt.add_argument("--ca", type=str, default="0.01:0.1:10",
                        help="min:max:count sweep or comma list")
    ap_spt.add_argument("--s", type=float, default=2.0)

    ap_conv = sub.add_parser("convergence",
                             help="rerun a scenario over spectral orders")
    ap_conv.add_argument("config")
    ap_conv.add_argument("--p-list", required=True,
                         help="comma-separated orders, e.g. 8,12,16")
    ap_conv.add_argument("--reference", type=int, default=None,
                         help="reference order (default: largest in list)")
    ap_conv.add_argument("--reparam-check", action="store_true",
                         help="also run the largest order without "
                              "reparametrization")

    ap_pre = sub.add_parser("presets", help="list or print built-in scenarios")
    ap_pre.add_argument("name", nargs="?")

    args = ap.parse_args(argv)
    try:
        if args.cmd == "run":
            try:
                cfg = load_config(args.config)
            except (ConfigError, OSError) as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return 1
            run_scenario(cfg)
            return 0
        if args.cmd == "spt":
            if "," in args.ca:
                cas = [float(v) for v in args.ca.split(",")]
            else:
                lo, hi, n = args.ca.split(":")
                cas = list(np.linspace(float(lo), float(hi), int(n)))
            sys.stdout.write(spt_table(args.field, args.drop, args.R, args.Q,
                                       cas, beta_tilde=args.beta_tilde,
                                       s=args.s))
            return 0
        if args.cmd == "convergence":
            try:
                cfg = load_config(args.config)
                p_list = [int(v) for v in args.p_list.split(",")]
            except (ConfigError, OSError, ValueError) as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return 1
            p_ref = args.reference or max(p_list)
            p_list = [p for p in p_list if p != p_ref]
            out = convergence_study(cfg, p_list, p_ref,
                                    reparam_check=args.reparam_check)
            print("p,err_x,err_gamma")
            for p, ex, eg in zip(out["p"], out["err_x"], out["err_gamma"]):
                print(f"{p},{_fmt(ex)},{_fmt(eg)}")
            if "err_x_noreparam" in out:
                print(f"# no-reparametrization err_x at p={max(p_list)}: "
                      f"{_fmt(out['err_x_noreparam'])}")
            return 0
        if args.cmd == "presets":
            if args.name:
                if args.name not in PRESETS:
                    print(f"config error: unknown preset {args.name!r}",
                          file=sys.stderr)
                    return 1
                sys.stdout.write(PRESETS[args.name].lstrip())
            else:
                for name in sorted(PRESETS):
                    print(name)
            return 0
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # runtime failure path, exit code 2
        log.error("runtime error: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
