"""Translation velocity of an aligned drop pair vs centroid separation.

Evaluates the instantaneous centroid velocity of two spheres on the field
axis for several separations; the field-induced interaction should decay
like 1/h^2.
"""

import csv
import pathlib

import numpy as np

from ehdrop import surface
from ehdrop.efield import AppliedField, compute_tractions
from ehdrop.hydro import PhysicalParams, interfacial_force, solve_velocity, \
    surface_velocity
from ehdrop.surface import sphere_state, volume
from ehdrop.system import DropSystem

HERE = pathlib.Path(__file__).resolve().parent
SEPARATIONS = [6.0, 8.0, 10.0, 12.0, 16.0, 20.0]


def pair_translation_speed(h, p=9):
    params = PhysicalParams(lam=1.0, R=2.0, Q=1.0, Ca_E=0.05, clean=True)
    field = AppliedField(E_u=1.0)
    states = [sphere_state(p, center=(0, 0, -h / 2)),
              sphere_state(p, center=(0, 0, h / 2))]
    system = DropSystem(states)
    _, tractions, _ = compute_tractions(system, field, params.R, params.Q)
    forcings = [interfacial_force(states[i], system.geoms[i], params)
                / params.Ca_E - tractions[i] for i in range(2)]
    us, _ = solve_velocity(system, forcings, params)
    geom = system.geoms[0]
    un = np.sum(surface_velocity(system, us, 0) * geom.n, axis=0)
    return abs(geom.integrate(geom.X[2] * un) / volume(states[0], geom))


def main():
    rows = []
    for h in SEPARATIONS:
        ut = pair_translation_speed(h)
        rows.append((h, ut))
        print(f"h={h:5.1f}: U_T = {ut:.4e}")
    slope = np.polyfit(np.log([r[0] for r in rows]),
                       np.log([r[1] for r in rows]), 1)[0]
    out = HERE / "two_drop_scaling.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "U_T"])
        w.writerows(rows)
    print(f"wrote {out}; log-log slope = {slope:.3f} (expected ~ -2)")


if __name__ == "__main__":
    main()
