"""Three surfactant-covered drops on the x axis in a quadrupole field.

The field stays on until t = 1 and is then switched off, letting the drops
relax back toward spheres with uniform concentration.  Writes the full time
series (deformation, volume, surfactant mass, centroids per drop) and prints
the conservation numbers at the end.
"""

import pathlib

from ehdrop import runner

HERE = pathlib.Path(__file__).resolve().parent


def main():
    cfg = runner.parse_config(runner.PRESETS["three-drop"])
    cfg.outputs.timeseries = str(HERE / "three_drops.csv")
    print("three drops, quadrupole field off at t = "
          f"{cfg.numerics.field_off_time}, integrating to "
          f"T = {cfg.numerics.T_max} ...")
    res = runner.run_scenario(cfg)
    print(f"steps: {res['steps']} (+{res['rejected']} rejected)")
    for i, (dv, dm) in enumerate(zip(res["volume_drift"],
                                     res["mass_drift"]), 1):
        print(f"drop {i}: relative volume drift {dv:.3e}, "
              f"surfactant mass drift {dm:.3e}")
    print("wrote", cfg.outputs.timeseries)


if __name__ == "__main__":
    main()
