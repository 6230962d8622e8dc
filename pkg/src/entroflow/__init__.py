"""Structure-preserving 1D thin-film and viscous shallow-water solvers with
energy / BD / BF entropy balance audits."""

__version__ = "0.1.0"
