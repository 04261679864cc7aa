"""Boundary-integral electrohydrodynamics of surfactant-covered drops.

Spectral (spherical-harmonic) surface representation, singular and nearly
singular layer-potential quadrature, leaky-dielectric electrostatics, Stokes
velocity solves, insoluble-surfactant transport, adaptive midpoint/IMEX time
stepping with surface reparametrization, and closed-form small-deformation
references.
"""

from . import sht, surface, quad, system, efield, hydro, transport, evolve, \
    spt, runner

__all__ = ["sht", "surface", "quad", "system", "efield", "hydro",
           "transport", "evolve", "spt", "runner"]
