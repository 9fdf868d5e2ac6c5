"""Volume-integral scattering solvers and singular-source boundary probes."""

__version__ = "0.1.0"
