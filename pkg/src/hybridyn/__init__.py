"""Hybrid classical-quantum dynamics on a phase-space grid."""
__version__ = "0.1.0"
