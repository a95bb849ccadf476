"""Default models, experiment settings and tolerance bands.

All thresholds used by the experiment drivers and the acceptance suite live
here so they can be audited in one place.
"""
from __future__ import annotations

import numpy as np

from .model import BoundarySource, HyperbolicModel, euler_model

__all__ = [
    "EULER_POINT",
    "TOL",
    "demo_nonlinearity",
    "default_model",
    "control_model",
    "default_source",
    "EPS_LIST",
    "FINAL_TIME",
    "NONLINEAR_SCALE",
]

# (v, u, c, eta) with Mach number 1/sqrt3
EULER_POINT = (1.0, 1.0, float(np.sqrt(3.0)), 1.0)

EPS_LIST = (1 / 4, 1 / 8, 1 / 16)
FINAL_TIME = 0.8
NONLINEAR_SCALE = 0.5
SOURCE_VECTOR = (0.0, 0.5)

TOL = {
    "spectral": 1e-10,
    "identities": 1e-11,
    "fast_residual": 1e-10,
    "amplitude_order": 1.8,          # self-convergence order of the linear transport
    "memory_agreement": 1e-2,        # exact vs grid memory, relative L2
    "memory_refinement": 2.0,        # improvement factor under one refinement
    "mean": 1e-12,
    "amp_eps_band": 2.0,             # sup|v|/eps may vary by this factor
    "amp_growth": (1.5, 3.0),        # per-halving growth of sup|v|/eps^2
    "conv_ratio": 0.7,               # per-halving error ratio of the corrected approximation
    "oracle_error": 1e-2,
    "oracle_order": 1.8,
    "nm_residual": 1e-6,
    "nm_steps": 30,
    "nm_match": 1e-4,
    "nm_bookkeeping": 1e-12,
    "smoothing_constant": 10.0,
}


def demo_nonlinearity(scale: float = NONLINEAR_SCALE) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic interior and boundary terms used by the nonlinear experiments.

    The linearized Euler system has D = Psi = 0; this choice gives nonzero
    resonant coupling l_1 A0 D(r_2, r_3) and a nonzero Burgers coefficient.
    """
    D = np.zeros((3, 3, 3))
    D[0, 0, 0] = 1.0
    D[1, 0, 1] = D[1, 1, 0] = 0.5
    D[2, 2, 2] = 1.0
    D[0, 1, 2] = D[0, 2, 1] = 0.5
    Psi = np.zeros((2, 3, 3))
    Psi[1, 0, 0] = 1.0
    return scale * D, scale * Psi


def default_model(nonlinear: bool = True, scale: float = NONLINEAR_SCALE) -> HyperbolicModel:
    if not nonlinear:
        return euler_model(*EULER_POINT)
    D, Psi = demo_nonlinearity(scale)
    return euler_model(*EULER_POINT, D=D, Psi=Psi)


def control_model(model: HyperbolicModel) -> HyperbolicModel:
    """Uniformly stable control: one sign of the WR boundary matrix flipped."""
    v, u = model.params.get("v", 1.0), model.params.get("u", 1.0)
    return model.with_boundary(np.array([[0.0, v, 0.0], [u, 0.0, -v]]))


def default_source(amplitude: float = 1.0) -> BoundarySource:
    """Single theta0-mode source chi(t) G exp(i theta0) + c.c."""
    return BoundarySource.single_mode(amplitude * np.asarray(SOURCE_VECTOR), 1)
