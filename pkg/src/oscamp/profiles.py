"""Multi-phase Fourier calculus for profiles V(x, theta), theta in T^M.

A :class:`TrigSeries` stores coefficients ``V_alpha`` (arrays of shape
``grid + (N,)``) for multi-indices alpha with at most two nonzero entries.
Scalar theta-periodic series (amplitudes, incoming profiles) are plain arrays
whose axis 0 runs over Fourier indices ``-K..K``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .spectral import ModeSet, ResonanceTriple

__all__ = [
    "TrigSeries",
    "ModeLabel",
    "ProfileError",
    "classify_mode",
    "project_E",
    "partial_inverse_R",
    "apply_cL",
    "prepare",
    "interaction_integral",
    "primitive_mean_zero",
    "scalar_modes",
]

ZERO, CHAR, NONCHAR = "zero", "characteristic", "noncharacteristic"


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ModeLabel:
    kind: str
    m: int | None = None
    n: int | None = None


def _match_tol(ms: ModeSet) -> float:
    w = np.sort(ms.omega)
    gap = np.min(np.diff(w)) if len(w) > 1 else 1.0
    return 1e-8 * gap


def _label(ms: ModeSet, alpha: tuple[int, ...], tol: float) -> ModeLabel:
    if not any(alpha):
        return ModeLabel(ZERO)
    n = int(sum(alpha))
    aw = float(np.dot(alpha, ms.omega))
    if n == 0:
        return ModeLabel(NONCHAR)
    hits = [m for m in range(ms.M) if abs(aw - n * ms.omega[m]) <= tol * abs(n)]
    if len(hits) > 1:
        raise ProfileError(f"ambiguous characteristic match for alpha={alpha}")
    return ModeLabel(CHAR, hits[0], n) if hits else ModeLabel(NONCHAR)


def classify_mode(ms: ModeSet, alpha: Iterable[int]) -> ModeLabel:
    """Zero, Characteristic(m, n_alpha) or NonCharacteristic.

    The phase match is cross-checked against the smallest singular value of
    L(d(alpha . phi)).
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != ms.M or sum(1 for a in alpha if a) > 2:
        raise ProfileError(f"index {alpha} not in Z^(M;2)")
    lab = _label(ms, alpha, _match_tol(ms))
    if lab.kind != ZERO:
        Lm = ms.L(sum(alpha), float(np.dot(alpha, ms.omega)))
        s = np.linalg.svd(Lm, compute_uv=False)
        singular = s[-1] <= 1e-8 * max(1.0, s[0])
        if singular != (lab.kind == CHAR):
            raise ProfileError(f"singular-value test disagrees with phase match at alpha={alpha}")
    return lab


class TrigSeries:
    """Truncated series sum_alpha V_alpha(x) exp(i alpha . theta)."""

    def __init__(self, M: int, N: int, coeffs: Mapping[tuple[int, ...], np.ndarray] | None = None,
                 grid_shape: tuple[int, ...] = (), real: bool = False):
        self.M, self.N = M, N
        self.grid_shape = tuple(grid_shape)
        self.real = real
        self.coeffs: dict[tuple[int, ...], np.ndarray] = {}
        for a, v in (coeffs or {}).items():
            self[a] = v

    def __setitem__(self, alpha, value):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.M or sum(1 for a in alpha if a) > 2:
            raise ProfileError(f"index {alpha} not in Z^(M;2)")
        v = np.broadcast_to(np.asarray(value, dtype=complex), self.grid_shape + (self.N,)).copy()
        self.coeffs[alpha] = v

    def __getitem__(self, alpha) -> np.ndarray:
        return self.coeffs.get(tuple(alpha), np.zeros(self.grid_shape + (self.N,), complex))

    def add(self, alpha, value) -> None:
        alpha = tuple(int(a) for a in alpha)
        if alpha in self.coeffs:
            self.coeffs[alpha] = self.coeffs[alpha] + value
        else:
            self[alpha] = value

    def items(self):
        return self.coeffs.items()

    def empty_like(self) -> "TrigSeries":
        return TrigSeries(self.M, self.N, grid_shape=self.grid_shape, real=self.real)

    def map(self, fn) -> "TrigSeries":
        out = self.empty_like()
        for a, v in self.items():
            out[a] = fn(a, v)
        return out

    def __add__(self, other: "TrigSeries") -> "TrigSeries":
        out = self.map(lambda a, v: v)
        for a, v in other.items():
            out.add(a, v)
        out.real = self.real and other.real
        return out

    def __sub__(self, other: "TrigSeries") -> "TrigSeries":
        return self + other.map(lambda a, v: -v)

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.coeffs.values()), default=0.0)

    def max_diff(self, other: "TrigSeries") -> float:
        return (self - other).max_abs()

    def reality_defect(self) -> float:
        d = 0.0
        for a, v in self.items():
            w = self[tuple(-x for x in a)]
            d = max(d, float(np.max(np.abs(v - np.conj(w)))))
        return d

    def evaluate(self, theta) -> np.ndarray:
        """Value at phase vector theta (shape (..., M)) broadcast against the grid."""
        theta = np.asarray(theta, dtype=float)
        out = 0.0
        for a, v in self.items():
            ph = np.exp(1j * np.tensordot(theta, np.array(a, float), axes=([-1], [0])))
            out = out + ph[..., None] * v
        return out

    @classmethod
    def random(cls, ms: ModeSet, K: int, n_terms: int, rng, grid_shape=(), real: bool = True,
               single_phase: bool = False) -> "TrigSeries":
        """Random finite series for identity tests."""
        M, N = ms.M, ms.N
        s = cls(M, N, grid_shape=grid_shape, real=real)
        for _ in range(n_terms):
            a = [0] * M
            if single_phase:
                a[rng.integers(M)] = int(rng.choice([k for k in range(-K, K + 1) if k]))
            else:
                idx = rng.choice(M, size=2, replace=False)
                for i in idx:
                    a[i] = int(rng.integers(-K, K + 1))
            v = rng.standard_normal(grid_shape + (N,)) + 1j * rng.standard_normal(grid_shape + (N,))
            if real and not any(a):
                v = v.real
            s.add(a, v)
            if real and any(a):
                s.add([-x for x in a], np.conj(v))
        return s


def project_E(series: TrigSeries, ms: ModeSet) -> TrigSeries:
    """Averaging projector onto characteristic single-phase content."""
    tol = _match_tol(ms)
    out = series.empty_like()
    for a, v in series.items():
        lab = _label(ms, a, tol)
        if lab.kind == ZERO:
            out.add(a, v)
        elif lab.kind == CHAR:
            idx = [0] * ms.M
            idx[lab.m] = lab.n
            out.add(idx, v @ ms.P[lab.m].T)
    return out


def partial_inverse_R(series: TrigSeries, ms: ModeSet, det_floor: float = 1e-10,
                      report: dict | None = None) -> TrigSeries:
    """Coefficient-wise partial inverse of cL(d_theta).

    Characteristic alpha: (i n_alpha)^{-1} R_m V_alpha; noncharacteristic alpha:
    (i L(d(alpha . phi)))^{-1} V_alpha.  The smallest |det| seen is stored in
    ``report['min_det']`` when a dict is supplied.
    """
    tol = _match_tol(ms)
    out = series.empty_like()
    min_det = np.inf
    for a, v in series.items():
        lab = _label(ms, a, tol)
        if lab.kind == ZERO:
            continue
        if lab.kind == CHAR:
            out.add(a, v @ ms.R[lab.m].T / (1j * lab.n))
        else:
            Lm = ms.L(sum(a), float(np.dot(a, ms.omega)))
            det = abs(np.linalg.det(Lm))
            min_det = min(min_det, det)
            if det < det_floor:
                raise ProfileError(f"small divisor at alpha={a}: |det L| = {det:.3e}")
            out.add(a, np.linalg.solve(1j * Lm, v.reshape(-1, ms.N).T).T.reshape(v.shape))
    if report is not None:
        report["min_det"] = min_det
    return out


def apply_cL(series: TrigSeries, ms: ModeSet) -> TrigSeries:
    """Coefficient-wise multiplication by i L(d(alpha . phi))."""
    return series.map(lambda a, v: v @ (1j * ms.L(sum(a), float(np.dot(a, ms.omega)))).T)


# ---------------------------------------------------------------------------
# scalar theta-series: axis 0 indexes k = -K..K

def scalar_modes(c: np.ndarray) -> np.ndarray:
    K = (c.shape[0] - 1) // 2
    return np.arange(-K, K + 1)


def prepare(c: np.ndarray, n: int) -> np.ndarray:
    """Keep exactly the Fourier indices divisible by n."""
    if n == 0:
        raise ProfileError("preparation index must be nonzero")
    k = scalar_modes(c)
    mask = (k % n == 0).reshape((-1,) + (1,) * (c.ndim - 1))
    return np.where(mask, c, 0)


def interaction_integral(sp: np.ndarray, sr: np.ndarray, triple: ResonanceTriple,
                         K_out: int | None = None) -> np.ndarray:
    """Resonant part of sigma_p(theta_p) sigma_r(theta_r) as a theta_m-series.

    Output coefficient at n_m k is (sigma_p)_{k n_p} (sigma_r)_{k n_r}; this is
    the (2 pi)^{-1}-normalized theta-average of the prepared product.
    """
    Kp = (sp.shape[0] - 1) // 2
    Kr = (sr.shape[0] - 1) // 2
    K_out = Kp if K_out is None else K_out
    out = np.zeros((2 * K_out + 1,) + np.broadcast(sp[0], sr[0]).shape, complex)
    kmax = min(Kp // abs(triple.n_p), Kr // abs(triple.n_r), K_out // abs(triple.n_m))
    for k in range(-kmax, kmax + 1):
        if k == 0:
            continue
        out[k * triple.n_m + K_out] += sp[k * triple.n_p + Kp] * sr[k * triple.n_r + Kr]
    return out


def primitive_mean_zero(c: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Mean-zero theta-primitive: coefficient k -> c_k / (i k)."""
    K = (c.shape[0] - 1) // 2
    if np.max(np.abs(c[K])) > tol * max(1.0, float(np.max(np.abs(c)))):
        raise ProfileError("primitive requested for a series with nonzero mean")
    k = scalar_modes(c).astype(float).reshape((-1,) + (1,) * (c.ndim - 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(k != 0, c / (1j * k), 0)
    return out
