"""Open-boundary ASEP simulation and its viscous Burgers hydrodynamic limit."""

__version__ = "0.1.0"
