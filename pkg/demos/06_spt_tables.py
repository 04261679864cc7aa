"""Closed-form small-deformation tables for all four drop/field cases.

No simulation: evaluates the first- and second-order deformation laws over a
capillary-number sweep, like the `ehdrop spt` subcommand, and writes one CSV
per case.
"""

import pathlib

import numpy as np

from ehdrop import runner

HERE = pathlib.Path(__file__).resolve().parent

CASES = [
    ("uniform", "clean", 2.0, 1.0, None),
    ("uniform", "surfactant", 3.0, 1.0, None),
    ("quadrupole", "clean", 2.0, 0.01, None),
    ("quadrupole", "surfactant", 2.0, 0.01, 1.0),
]


def main():
    cas = np.linspace(0.01, 0.1, 10)
    for field, drop, R, Q, bt in CASES:
        text = runner.spt_table(field, drop, R, Q, cas, beta_tilde=bt)
        out = HERE / f"spt_{field}_{drop}.csv"
        out.write_text(text)
        last = text.strip().splitlines()[-1].split(",")
        print(f"{field}/{drop} (R={R}, Q={Q}): wrote {out.name}; "
              f"D(0.1) = {float(last[2]):.6f} at order 2")


if __name__ == "__main__":
    main()
