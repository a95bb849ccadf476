"""Spectral package at the boundary frequency beta.

Conventions: with ``A_0 = inv(B_d)`` and ``A_j = inv(B_d) B_j`` the normalized
operator is ``L(kappa) = kappa_0 A_0 + sum_j kappa_j A_j + kappa_d I``.  The
phases are ``phi_m = phi_0 + omega_m x_d`` where the omega_m are the eigenvalues
of ``K = -(beta_0 A_0 + sum_j beta_j A_j)``, so that ``L(d phi_m) = omega_m I - K``.
Mode indices are 0-based throughout the code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.linalg import schur

from .model import HyperbolicModel

__all__ = [
    "ModeSet",
    "ResonanceTriple",
    "SpectralError",
    "dispersion_roots",
    "group_velocity",
    "classify",
    "mode_package",
    "find_resonances",
    "euler_resonance",
    "lopatinskii_determinant",
    "lopatinskii_scan",
]

INCOMING, OUTGOING = "incoming", "outgoing"


class SpectralError(ValueError):
    pass


def beta_operator(model: HyperbolicModel, beta=None) -> np.ndarray:
    """L(d phi_0) = beta_0 A_0 + sum_{j<d} beta_j A_j."""
    beta = model.beta if beta is None else np.asarray(beta, dtype=float)
    Bd = model.Bd
    M = beta[0] * np.eye(model.N) + sum(beta[j] * model.B_list[j - 1] for j in range(1, model.d))
    return np.linalg.solve(Bd, M)


def _group(values: np.ndarray, rel: float = 1e-7) -> list[list[int]]:
    scale = max(1.0, float(np.max(np.abs(values))))
    groups: list[list[int]] = [[0]]
    for i in range(1, len(values)):
        if abs(values[i] - values[groups[-1][-1]]) <= rel * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def dispersion_roots(model: HyperbolicModel, beta=None, imag_tol: float = 1e-9):
    """Distinct real roots omega (descending) and their multiplicities."""
    K = -beta_operator(model, beta)
    w = np.linalg.eigvals(K)
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.max(np.abs(w.imag)) > imag_tol * scale:
        raise SpectralError("beta not in hyperbolic region (complex root)")
    w = np.sort(w.real)[::-1]
    groups = _group(w)
    return np.array([np.mean(w[g]) for g in groups]), [len(g) for g in groups]


def _null_basis(M: np.ndarray, nu: int) -> np.ndarray:
    _, s, vh = np.linalg.svd(M)
    return vh[-nu:].T.copy()


def _normalize_columns(R: np.ndarray) -> np.ndarray:
    R = R / np.linalg.norm(R, axis=0)
    idx = np.argmax(np.abs(R), axis=0)
    return R * np.sign(R[idx, np.arange(R.shape[1])])


def group_velocity(model: HyperbolicModel, eta, omega: float, check: bool = True,
                   fd_step: float = 1e-4, fd_tol: float = 1e-6) -> np.ndarray:
    """Gradient of the eigenvalue branch of sum xi_j B_j at xi = (eta, omega).

    Evaluated by the Rayleigh quotient l B_j r / (l r) on the full-space
    eigenvectors for the eigenvalue -tau, and checked against central finite
    differences of the sorted eigenvalue branch.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    tau = model.beta[0]
    xi = np.concatenate([eta, [omega]])
    A = sum(x * b for x, b in zip(xi, model.B_list))
    lam = -tau
    w = np.linalg.eigvals(A).real
    nu = int(np.sum(np.abs(w - lam) <= 1e-7 * max(1.0, np.max(np.abs(w)))))
    if nu == 0:
        raise SpectralError("omega is not a characteristic root at this frequency")
    r = _null_basis(A - lam * np.eye(model.N), nu)
    lt = _null_basis((A - lam * np.eye(model.N)).T, nu).T
    G = lt @ r
    v = np.empty(model.d)
    for j, Bj in enumerate(model.B_list):
        Mj = np.linalg.solve(G, lt @ Bj @ r)
        v[j] = np.trace(Mj) / nu
        if np.max(np.abs(Mj - v[j] * np.eye(nu))) > 1e-7 * max(1.0, np.max(np.abs(Bj))):
            raise SpectralError("degenerate characteristic point (branches split)")
    if check:
        fd = np.empty(model.d)
        for j in range(model.d):
            vals = []
            for sgn in (1, -1):
                xs = xi.copy()
                xs[j] += sgn * fd_step
                ws = np.linalg.eigvals(sum(x * b for x, b in zip(xs, model.B_list))).real
                vals.append(ws[np.argmin(np.abs(ws - lam))])
            fd[j] = (vals[0] - vals[1]) / (2 * fd_step)
        if np.max(np.abs(fd - v)) > fd_tol * max(1.0, np.max(np.abs(v))):
            raise SpectralError(f"group velocity check failed: {v} vs finite differences {fd}")
    return v


def classify(v, tol: float = 1e-9) -> str:
    v = np.asarray(v, dtype=float)
    if abs(v[-1]) <= tol * max(1.0, float(np.max(np.abs(v)))):
        raise SpectralError("glancing mode: normal group velocity vanishes")
    return INCOMING if v[-1] > 0 else OUTGOING


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Frequency-beta spectral objects.

    ``r[m]`` is an (N, nu_m) array of right vectors, ``l[m]`` an (nu_m, N)
    array of left vectors with ``l[m] @ r[m'] = delta``.  ``xlop_raw`` holds
    the coefficients (time, x_1, ..., x_{d-1}) of the Lopatinskii transport
    field ``b . B sum_{m incoming} R_m A_j e_m``; ``kappa`` is its time entry.
    """

    model: HyperbolicModel
    omega: np.ndarray
    mult: tuple[int, ...]
    velocity: np.ndarray
    direction: tuple[str, ...]
    r: tuple[np.ndarray, ...]
    l: tuple[np.ndarray, ...]
    P: np.ndarray
    R: np.ndarray
    beta_A: np.ndarray
    e: np.ndarray | None
    e_parts: np.ndarray | None
    b: np.ndarray | None
    xlop_raw: np.ndarray | None

    @property
    def M(self) -> int:
        return len(self.omega)

    @property
    def N(self) -> int:
        return self.model.N

    @property
    def incoming(self) -> list[int]:
        return [m for m, d in enumerate(self.direction) if d == INCOMING]

    @property
    def outgoing(self) -> list[int]:
        return [m for m, d in enumerate(self.direction) if d == OUTGOING]

    @property
    def kappa(self) -> float:
        return float(self.xlop_raw[0])

    @property
    def xlop(self) -> np.ndarray:
        """Lopatinskii field with unit time coefficient."""
        return self.xlop_raw / self.xlop_raw[0]

    @property
    def stable_basis(self) -> np.ndarray:
        return np.hstack([self.r[m] for m in self.incoming])

    def L(self, k0: float, kd: float) -> np.ndarray:
        """Symbol L(k0 * beta-covector + kd dx_d) = k0 beta_A + kd I."""
        return k0 * self.beta_A + kd * np.eye(self.N)

    def L_phase(self, m: int) -> np.ndarray:
        return self.L(1.0, self.omega[m])

    def vec(self, m: int) -> np.ndarray:
        """First right vector of mode m (the vector for simple modes)."""
        return self.r[m][:, 0]

    def lvec(self, m: int) -> np.ndarray:
        return self.l[m][0]

    def rescaled(self, scales) -> "ModeSet":
        """Replace r_m by s_m r_m (and l_m by l_m / s_m); projectors unchanged."""
        r = tuple(s * rm for s, rm in zip(scales, self.r))
        l = tuple(lm / s for s, lm in zip(scales, self.l))
        return replace(self, r=r, l=l)


def mode_package(model: HyperbolicModel, beta=None, require_wr: bool = True) -> ModeSet:
    """Assemble the complete ModeSet at beta (default: model.beta)."""
    beta = model.beta if beta is None else np.asarray(beta, dtype=float)
    if beta is not model.beta:
        model = HyperbolicModel(model.B_list, model.B, beta, D=model.D, Psi=model.Psi,
                                D0=model.D0, params=model.params)
    N = model.N
    bA = beta_operator(model)
    K = -bA
    omega, mult = dispersion_roots(model)
    blocks = [_normalize_columns(_null_basis(K - w * np.eye(N), nu)) for w, nu in zip(omega, mult)]
    Rmat = np.hstack(blocks)
    if np.linalg.cond(Rmat) > 1e10:
        raise SpectralError("eigenvector basis is degenerate (beta not semi-simple)")
    vel = np.array([group_velocity(model, beta[1:], w) for w in omega])
    direction = tuple(classify(v) for v in vel)

    def split(Rmat):
        Lmat = np.linalg.inv(Rmat)
        r, l, i = [], [], 0
        for nu in mult:
            r.append(Rmat[:, i:i + nu])
            l.append(Lmat[i:i + nu])
            i += nu
        return r, l

    r, l = split(Rmat)
    P = np.array([rm @ lm for rm, lm in zip(r, l)])
    M = len(omega)
    R = np.array([sum(P[k] / (omega[m] - omega[k]) for k in range(M) if k != m) for m in range(M)])

    e = e_parts = b = xlop = None
    inc = [m for m in range(M) if direction[m] == INCOMING]
    S = np.hstack([r[m] for m in inc]) if inc else np.zeros((N, 0))
    if S.shape[1] != model.p:
        raise SpectralError(f"stable subspace has dimension {S.shape[1]}, expected p={model.p}")
    BS = model.B @ S
    u_, s_, vh = np.linalg.svd(BS)
    tol = 1e-9 * max(1.0, s_[0])
    kdim = int(np.sum(s_ <= tol))
    if kdim != 1:
        if require_wr:
            raise SpectralError(f"not in WR configuration at beta: dim(ker B on E^s) = {kdim}")
    else:
        e = S @ vh[-1]
        e = e / e[np.argmax(np.abs(e))]
        b = u_[:, -1]
        b = b * np.sign(b[np.flatnonzero(np.abs(b) > 1e-12)[0]])
        # fix the scale of simple incoming vectors so that e_m = +-r_m
        scales = np.ones(M)
        for m in inc:
            if mult[m] == 1:
                em = P[m] @ e
                if np.linalg.norm(em) > 1e-12:
                    rm = r[m][:, 0]
                    scales[m] = np.dot(rm, em) / np.dot(rm, rm)
                    scales[m] = abs(scales[m])
        Rmat = np.hstack([s * rm for s, rm in zip(scales, r)])
        r, l = split(Rmat)
        e_parts = np.array([P[m] @ e for m in range(M)])
        A0 = model.A0
        Aj = [A0] + [model.A(j) for j in range(1, model.d)]
        xlop = np.array([b @ model.B @ sum(R[m] @ A @ e_parts[m] for m in inc) for A in Aj])
    return ModeSet(model, omega, tuple(mult), vel, direction, tuple(r), tuple(l), P, R, bA,
                   e, e_parts, b, xlop)


@dataclass(frozen=True)
class ResonanceTriple:
    """n_m phi_m = n_p phi_p + n_r phi_r with m outgoing and p, r incoming (0-based)."""

    m: int
    p: int
    r: int
    n_m: int
    n_p: int
    n_r: int

    @property
    def n(self) -> tuple[int, int, int]:
        return (self.n_m, self.n_p, self.n_r)

    def alpha(self, M: int, k: int = 1) -> tuple[int, ...]:
        """Two-phase index k(n_p e_p + n_r e_r), characteristic for phase m."""
        a = [0] * M
        a[self.p] = k * self.n_p
        a[self.r] = k * self.n_r
        return tuple(a)


def find_resonances(ms: ModeSet, n_max: int, tol: float = 1e-10) -> list[ResonanceTriple]:
    """All primitive resonance triples with max |n| <= n_max."""
    out: set[ResonanceTriple] = set()
    if n_max <= 0:
        return []
    wmax = float(np.max(np.abs(ms.omega)))
    rng = np.arange(-n_max, n_max + 1)
    rng = rng[rng != 0]
    npg, nrg = np.meshgrid(rng, rng, indexing="ij")
    nmg = npg + nrg
    for m in ms.outgoing:
        for p, r in combinations(ms.incoming, 2):
            defect = np.abs(nmg * ms.omega[m] - npg * ms.omega[p] - nrg * ms.omega[r])
            nmax = np.maximum(np.maximum(np.abs(npg), np.abs(nrg)), np.abs(nmg))
            ok = (nmg != 0) & (np.abs(nmg) <= n_max) & (defect <= tol * nmax * wmax)
            for a, c in zip(npg[ok], nrg[ok]):
                nm = int(a + c)
                g = math.gcd(math.gcd(int(a), int(c)), nm)
                s = 1 if nm > 0 else -1
                out.add(ResonanceTriple(m, p, r, s * nm // g, s * int(a) // g, s * int(c) // g))
    return sorted(out, key=lambda t: (t.m, t.p, t.r, abs(t.n_m), t.n_p))


def euler_resonance(u, c, max_den: int = 10**6, tol: float = 1e-12):
    """Exact (p, q) with 2M^2/(1-M^2) = p/q for the Euler family, or None.

    With Fraction inputs the test is exact; with floats the continued-fraction
    convergent of denominator <= max_den is accepted if it reproduces the value
    to relative precision tol.  Returns (p, q, (n1, n2, n3)) with n = (q, p+q, -p).
    """
    if isinstance(u, Fraction) and isinstance(c, Fraction):
        M2 = (u / c) ** 2
        x = 2 * M2 / (1 - M2)
        pq = x
    else:
        M2 = (float(u) / float(c)) ** 2
        x = 2 * M2 / (1 - M2)
        pq = Fraction(x).limit_denominator(max_den)
        if abs(float(pq) - x) > tol * x:
            return None
    p, q = pq.numerator, pq.denominator
    return p, q, (q, p + q, -p)


def lopatinskii_determinant(model: HyperbolicModel, tau: complex, eta) -> complex:
    """det(B E^s) for zeta = (tau, eta) with Im tau < 0, orthonormal basis of E^s."""
    eta = np.atleast_1d(eta)
    M0 = 1j * tau * np.eye(model.N) + sum(1j * e * b for e, b in zip(eta, model.B_list[:-1]))
    A = -np.linalg.solve(model.Bd, M0)
    T, Z, sdim = schur(A, output="complex", sort="lhp")
    if sdim != model.p:
        raise SpectralError("stable subspace dimension mismatch")
    return complex(np.linalg.det(model.B @ Z[:, :sdim]))


def lopatinskii_scan(model: HyperbolicModel, n_angles: int = 721,
                     gammas=(1e-3, 1e-5, 1e-7)) -> float:
    """Minimum |Lopatinskii determinant| over a sample of the unit hemisphere.

    Uses zeta = (tau - i gamma, eta) with (tau, eta) on the unit circle; a value
    bounded away from zero as gamma decreases indicates uniform stability.
    """
    vals = []
    for g in gammas:
        for ang in np.linspace(0.0, np.pi, n_angles):
            tau, eta = math.cos(ang), math.sin(ang)
            s = math.sqrt(max(1.0 - g * g, 0.0))
            try:
                vals.append(abs(lopatinskii_determinant(model, s * tau - 1j * g, [s * eta])))
            except (SpectralError, np.linalg.LinAlgError):
                vals.append(0.0)
    return float(min(vals))
