"""Weakly nonlinear geometric optics for weakly stable hyperbolic boundary problems.

Submodules: model, spectral, profiles, amplitude, corrector, solver,
nashmoser, harness, defaults, cli.
"""
__version__ = "0.1.0"
