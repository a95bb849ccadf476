"""Key profile subsystem: incoming translates, resonant outgoing corrector and
the nonlocal amplitude equation on the boundary.

The boundary amplitude a(t, x1, theta0) solves

    a_t + w a_x1 + f1 a + f2 d_theta(a^2) + sum_t mu_t d_theta J_t|_{x_d=0} = g,

where ``g = -(b . d_theta G)/kappa`` and each resonance triple t = (q; p, s)
carries a scalar field J_t with

    (d_t + v_q . grad) J_t = I(a(translate_p), a(translate_s)),   J_t = 0 for t < 0,

the outgoing corrector being ``V1_out = sum_t S_t J_t``.  The incoming profiles
are exact translates ``U_m = e_m a(t - x_d/v_md, x1 - v_m1 x_d / v_md, theta)``.

Storage: ``a`` is kept as its nonnegative theta-modes ``ah[k, i]`` (k = 0..K,
a_0 = 0) on a periodic x1 grid; negative modes follow by conjugation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BoundarySource, HyperbolicModel
from .spectral import ModeSet, ResonanceTriple, find_resonances, mode_package

__all__ = [
    "ConstantsBundle",
    "AmplitudeBlowUp",
    "History",
    "KeySubsystem",
    "ProfileSolution",
    "compute_constants",
    "euler_closed_form_constants",
    "memory_term_exact",
    "step_amplitude",
    "evolve_tau",
    "reconstruct_sigma",
    "solve_key_subsystem",
]


class AmplitudeBlowUp(RuntimeError):
    pass


@dataclass
class ConstantsBundle:
    kappa: float
    w: np.ndarray                 # x1.. coefficients of the normalized Lopatinskii field
    f1: float
    f2: float
    bcoef: np.ndarray             # boundary functional -(B^T b)/kappa acting on V1_out
    triples: list[ResonanceTriple]
    sources: list[np.ndarray]     # S_t = -2 v_qd P_q A0 D(e_p, e_s)
    mu: list[float]               # bcoef . S_t
    c_zero: np.ndarray            # zero-order transport coefficients l_m . A0 D0 r_m
    eps: np.ndarray               # l_m . e  (sigma_m = eps_m a on the boundary)
    velocity: np.ndarray
    b: np.ndarray

    @property
    def alpha1(self) -> float:
        return self.f2

    @property
    def alpha2(self) -> float:
        return self.mu[0] if self.mu else 0.0

    def forcing(self, Gk: np.ndarray, k) -> np.ndarray:
        """theta-mode k of g = -(b . d_theta G)/kappa from G_k (..., p)."""
        return -1j * k * (Gk @ self.b) / self.kappa


def compute_constants(ms: ModeSet, triples: list[ResonanceTriple] | None = None) -> ConstantsBundle:
    """Coefficients of the amplitude equation and of the outgoing transport."""
    model = ms.model
    if ms.e is None:
        raise ValueError("constants need a WR mode set (e and b defined)")
    if triples is None:
        triples = find_resonances(ms, 12)
    kappa = ms.kappa
    A0 = model.A0
    b = ms.b
    f1 = float(b @ model.B @ sum(ms.R[m] @ A0 @ model.D0 @ ms.e_parts[m] for m in ms.incoming)) / kappa
    f2 = -float(b @ model.quad_boundary(ms.e, ms.e)) / kappa
    bcoef = -(model.B.T @ b) / kappa
    sources, mu = [], []
    for t in triples:
        if ms.direction[t.m] != "outgoing":
            raise ValueError(f"triple {t} does not end on an outgoing phase")
        vqd = ms.velocity[t.m][-1]
        S = -2.0 * vqd * ms.P[t.m] @ A0 @ model.quad(ms.e_parts[t.p], ms.e_parts[t.r])
        sources.append(S)
        mu.append(float(bcoef @ S))
    c_zero = np.array([float(np.trace(ms.l[m] @ A0 @ model.D0 @ ms.r[m])) / ms.mult[m] for m in range(ms.M)])
    eps = np.array([float(ms.l[m][0] @ ms.e) if ms.mult[m] == 1 else np.nan for m in range(ms.M)])
    return ConstantsBundle(kappa, np.array(ms.xlop[1:]), f1, f2, bcoef, list(triples), sources, mu,
                           c_zero, eps, ms.velocity.copy(), b.copy())


def euler_closed_form_constants(model: HyperbolicModel) -> dict[str, float]:
    """Closed-form Euler constants (normalizer, alpha1, alpha2, d) in the b = (u, -c) scaling."""
    P = model.params
    v, u, c, eta = P["v"], P["u"], P["c"], P["eta"]
    M = u / c
    l1 = (1 - M**2) / (2 * (1 + M**2)) * np.array([1 / v, -1 / c, 1 / u])
    r2 = np.array([v, c, 0.0])
    r3 = np.array([0.0, c, u])
    e = r2 - r3
    b = np.array([u, -c])
    A2inv = np.linalg.inv(model.Bd)
    lD = float(l1 @ A2inv @ model.quad(r2, r3))
    normalizer = u * v * (1 + M**2) / (M**2 * eta)
    return {
        "normalizer": normalizer,
        "alpha1": float(b @ model.quad_boundary(e, e)) / normalizer,
        "alpha2": 4 * u * c * M**2 * eta / (1 + M**2) * lD,
        "d": -2 * u * (1 - M**2) / (1 + M**2) * lD,
        "l1": l1, "r2": r2, "r3": r3, "e": e, "b": b,
    }


# ---------------------------------------------------------------------------
# history of boundary amplitudes

class History:
    """Stored levels a(t_n) at t_n = n dt, with linear interpolation in time."""

    def __init__(self, dt: float, K: int, n_x1: int, L1: float):
        self.dt, self.K, self.n_x1, self.L1 = dt, K, n_x1, L1
        self.levels: list[np.ndarray] = []
        self.xi = 2 * np.pi * np.fft.fftfreq(n_x1, d=L1 / n_x1)

    @property
    def t_last(self) -> float:
        return (len(self.levels) - 1) * self.dt

    def append(self, ah: np.ndarray) -> None:
        self.levels.append(np.array(ah, dtype=complex))

    def stack(self, extra: np.ndarray | None = None) -> np.ndarray:
        lv = self.levels + ([extra] if extra is not None else [])
        return np.array(lv)

    def interp(self, T: np.ndarray, extra: np.ndarray | None = None, arr: np.ndarray | None = None) -> np.ndarray:
        """Levels at times T (shape (n,)), zero for T < 0; returns (n, K+1, n_x1)."""
        H = self.stack(extra) if arr is None else arr
        T = np.asarray(T, dtype=float)
        tmax = (H.shape[0] - 1) * self.dt
        if np.any(T > tmax * (1 + 1e-12) + 1e-12):
            raise ValueError(f"history gap: requested t={float(T.max()):.6g} beyond {tmax:.6g}")
        s = np.clip(T / self.dt, 0.0, H.shape[0] - 1)
        i0 = np.minimum(np.floor(s).astype(int), max(H.shape[0] - 2, 0))
        fr = (s - i0)[:, None, None]
        i1 = np.minimum(i0 + 1, H.shape[0] - 1)
        out = (1 - fr) * H[i0] + fr * H[i1]
        out[T < 0] = 0.0
        return out

    def shift(self, A: np.ndarray, delta) -> np.ndarray:
        """Evaluate at x1 + delta (per leading index) by exact Fourier shift."""
        if self.n_x1 == 1:
            return A
        delta = np.asarray(delta, dtype=float).reshape((-1,) + (1,) * (A.ndim - 1))
        return np.fft.ifft(np.fft.fft(A, axis=-1) * np.exp(1j * self.xi * delta), axis=-1)


def inv_ik(n: int) -> np.ndarray:
    """1/(i k) for k = 0..n-1 with the k = 0 entry set to zero."""
    out = np.zeros(n, complex)
    out[1:] = 1.0 / (1j * np.arange(1, n))
    return out


def _mode(A: np.ndarray, j: int) -> np.ndarray:
    """theta-mode j (any sign) from half-spectrum array (..., K+1, n_x1)."""
    return A[..., j, :] if j >= 0 else np.conj(A[..., -j, :])


def _out_modes(t: ResonanceTriple, K: int) -> list[int]:
    ks = []
    k = 1
    while abs(k * t.n_m) <= K and abs(k * t.n_p) <= K and abs(k * t.n_r) <= K:
        ks.append(k)
        k += 1
    return ks


def _translate_args(v_q, v_m, T_node, x_shift, z):
    """Time argument and x1 shift of incoming mode m seen from (T_node, x1 + x_shift, z)."""
    return T_node - z / v_m[-1], x_shift - v_m[0] * z / v_m[-1]


def memory_term_exact(hist: History, consts: ConstantsBundle, t: float, triple_index: int = 0,
                      z0: float = 0.0, extra: np.ndarray | None = None, n_quad: int | None = None,
                      other: History | None = None, other_extra: np.ndarray | None = None) -> np.ndarray:
    """J_t(t, x1, z0, .) by integration along the outgoing characteristic.

    Trapezoid rule in s on the stored levels (or on ``n_quad`` equispaced nodes),
    linear interpolation of the history in time and exact Fourier shifts in x1.
    With ``other`` the s-partner is read from a second history, which gives the
    bilinear form J(H, H') used by linearizations.  Returns (K+1, n_x1).
    """
    tr = consts.triples[triple_index]
    vq, vp, vs = consts.velocity[tr.m], consts.velocity[tr.p], consts.velocity[tr.r]
    K = hist.K
    out = np.zeros((K + 1, hist.n_x1), complex)
    if t <= 0:
        return out
    n = int(round(t / hist.dt)) + 1 if n_quad is None else n_quad
    s = np.linspace(0.0, t, n)
    wts = np.full(n, s[1] - s[0])
    wts[[0, -1]] *= 0.5
    z = z0 - vq[-1] * (t - s)
    xs = -vq[0] * (t - s)
    H = hist.stack(extra)
    H2 = H if other is None else other.stack(other_extra)
    Tp, dp = _translate_args(vq, vp, s, xs, z)
    Ts, ds = _translate_args(vq, vs, s, xs, z)
    Ap = hist.shift(hist.interp(Tp, arr=H), dp)
    As = hist.shift(hist.interp(Ts, arr=H2), ds)
    for k in _out_modes(tr, K):
        prod = _mode(Ap, k * tr.n_p) * _mode(As, k * tr.n_r)
        out[k * tr.n_m] = np.tensordot(wts, prod, axes=(0, 0))
    return out


# ---------------------------------------------------------------------------
# the coupled system

@dataclass
class KeySubsystem:
    """Discretization data for the amplitude equation (and the J_t grid)."""

    ms: ModeSet
    consts: ConstantsBundle
    source: BoundarySource
    K: int = 8
    n_x1: int = 16
    L1: float = 2 * np.pi
    dt: float = 0.005
    mode: str = "exact"            # "exact" or "grid"
    dz: float | None = None
    height: float | None = None
    T: float = 1.0
    cfl: float = 0.5
    blocking_tol: float = 1e-2

    def __post_init__(self):
        if np.any(self.ms.model.D0):
            raise NotImplementedError("time marching implemented for D0 = 0 (no zero-order transport terms)")
        self.x1 = np.arange(self.n_x1) * self.L1 / self.n_x1
        self.xi = 2 * np.pi * np.fft.fftfreq(self.n_x1, d=self.L1 / self.n_x1)
        self.kk = np.arange(self.K + 1)
        c = self.consts
        wx = c.w[0] if len(c.w) else 0.0
        if self.n_x1 > 1:
            dx = self.L1 / self.n_x1
            # integrating factor handles transport exactly; keep the nonlinear step sane
            if abs(wx) * self.dt > 10 * dx:
                raise ValueError("time step too large for the x1 grid")
        self.E_a = np.exp(-1j * wx * self.xi * self.dt)
        self.nz = 0
        if self.mode == "grid":
            if not c.triples:
                self.mode = "exact"
            else:
                vqd = max(abs(c.velocity[t.m][-1]) for t in c.triples)
                vin = max(c.velocity[m][-1] for m in self.ms.incoming)
                if self.dz is None:
                    self.dz = vqd * self.dt / self.cfl
                if vqd * self.dt > self.cfl * self.dz * (1 + 1e-12):
                    raise ValueError("CFL violation for the outgoing transport grid")
                H = self.height if self.height is not None else 1.05 * vin * self.T + 4 * self.dz
                self.nz = int(np.ceil(H / self.dz)) + 1
                self.z = np.arange(self.nz) * self.dz
                self.E_J = [np.exp(-1j * c.velocity[t.m][0] * self.xi * self.dt) for t in c.triples]
        self._G = {k: None for k in range(1, self.K + 1)}

    # -- pieces of the right-hand side ---------------------------------------
    def forcing(self, t: float) -> np.ndarray:
        g = np.zeros((self.K + 1, self.n_x1), complex)
        for k in self.source.modes:
            if k <= self.K:
                g[k] = self.consts.forcing(self.source.mode(k, t, self.x1), k)
        return g

    def burgers(self, ah: np.ndarray) -> np.ndarray:
        """theta-derivative of a^2 with 3/2 padding (exact for |k| <= K)."""
        K = self.K
        n = 3 * K + 3
        full = np.zeros((n // 2 + 1, self.n_x1), complex)
        full[:K + 1] = ah
        phys = np.fft.irfft(full, n=n, axis=0) * n
        sq = np.fft.rfft(phys**2, axis=0) / n
        return 1j * self.kk[:, None] * sq[:K + 1]

    def boundary_rhs(self, ah: np.ndarray, t: float, Jtrace: list[np.ndarray]) -> np.ndarray:
        c = self.consts
        r = self.forcing(t) - c.f1 * ah
        if c.f2:
            r = r - c.f2 * self.burgers(ah)
        for mu, J in zip(c.mu, Jtrace):
            r = r - mu * 1j * self.kk[:, None] * J
        r[0] = 0.0
        return r

    def interaction_source(self, hist: History, t: float, tri: int, extra=None) -> np.ndarray:
        """I(a_p, a_s) on the (K+1, n_x1, nz) grid at time t."""
        c = self.consts
        tr = c.triples[tri]
        vp, vs = c.velocity[tr.p], c.velocity[tr.r]
        H = hist.stack(extra)
        Tp, dp = _translate_args(None, vp, np.full(self.nz, t), np.zeros(self.nz), self.z)
        Ts, ds = _translate_args(None, vs, np.full(self.nz, t), np.zeros(self.nz), self.z)
        Ap = hist.shift(hist.interp(Tp, arr=H), dp)
        As = hist.shift(hist.interp(Ts, arr=H), ds)
        out = np.zeros((self.K + 1, self.n_x1, self.nz), complex)
        for k in _out_modes(tr, self.K):
            out[k * tr.n_m] = (_mode(Ap, k * tr.n_p) * _mode(As, k * tr.n_r)).T
        return out

    def dz_upwind(self, J: np.ndarray, v: float) -> np.ndarray:
        """Third-order upwind z-derivative for a field moving with normal speed v."""
        h = self.dz
        d = np.zeros_like(J)
        if v < 0:
            d[..., 1:-2] = (-J[..., 3:] + 6 * J[..., 2:-1] - 3 * J[..., 1:-2] - 2 * J[..., :-3]) / (6 * h)
            d[..., 0] = (-J[..., 2] + 4 * J[..., 1] - 3 * J[..., 0]) / (2 * h)
            d[..., -2] = (J[..., -1] - J[..., -3]) / (2 * h)
        else:
            d[..., 2:-1] = (2 * J[..., 3:] + 3 * J[..., 2:-1] - 6 * J[..., 1:-2] + J[..., :-3]) / (6 * h)
            d[..., -1] = (3 * J[..., -1] - 4 * J[..., -2] + J[..., -3]) / (2 * h)
            d[..., 1] = (J[..., 2] - J[..., 0]) / (2 * h)
        return d

    def tau_rhs(self, Js: list[np.ndarray], hist: History, t: float, extra=None) -> list[np.ndarray]:
        c = self.consts
        out = []
        for i, (J, tr) in enumerate(zip(Js, c.triples)):
            vqd = c.velocity[tr.m][-1]
            out.append(self.interaction_source(hist, t, i, extra) - vqd * self.dz_upwind(J, vqd))
        return out

    def traces(self, hist: History, t: float, Js, extra=None) -> list[np.ndarray]:
        if self.mode == "grid":
            return [J[..., 0] for J in Js]
        return [memory_term_exact(hist, self.consts, t, i, extra=extra) for i in range(len(self.consts.triples))]

    def check(self, ah: np.ndarray, t: float) -> None:
        amax = float(np.max(np.abs(ah)))
        if not np.isfinite(amax) or amax > 1e8:
            raise AmplitudeBlowUp(f"amplitude blow-up at t={t:.4g} (max |a_k| = {amax:.3e})")
        top = ah[max(1, (3 * self.K) // 4):]
        if amax > 0 and top.size and float(np.max(np.abs(top))) > self.blocking_tol * amax:
            raise AmplitudeBlowUp(f"spectral blocking at t={t:.4g}: top theta-modes carry "
                                  f"{float(np.max(np.abs(top))) / amax:.2e} of the amplitude")


def _fx(a):
    return np.fft.fft(a, axis=-1)


def _ifx(a):
    return np.fft.ifft(a, axis=-1)


def step_amplitude(sys: KeySubsystem, hist: History, ah: np.ndarray, Js: list[np.ndarray], t: float):
    """One Heun step with exact integrating factor for the x1 transport.

    ``hist`` must end with the level ``ah`` at time t; returns (ah_new, Js_new).
    """
    dt = sys.dt
    grid = sys.mode == "grid"
    tr0 = sys.traces(hist, t, Js)
    N0 = sys.boundary_rhs(ah, t, tr0)
    a_star = _ifx(sys.E_a * _fx(ah + dt * N0))
    a_star[0] = 0.0
    if grid:
        S0 = sys.tau_rhs(Js, hist, t)
        J_star = [_ifx(E[:, None] * _fx((J + dt * S).swapaxes(-1, -2))).swapaxes(-1, -2)
                  for J, S, E in zip(Js, S0, sys.E_J)]
        for J in J_star:
            J[..., -1] = 0.0
    else:
        J_star = Js
    tr1 = sys.traces(hist, t + dt, J_star, extra=a_star)
    N1 = sys.boundary_rhs(a_star, t + dt, tr1)
    a_new = _ifx(sys.E_a * _fx(ah + 0.5 * dt * N0)) + 0.5 * dt * N1
    a_new[0] = 0.0
    if grid:
        S1 = sys.tau_rhs(J_star, hist, t + dt, extra=a_star)
        J_new = []
        for J, Sa, Sb, E in zip(Js, S0, S1, sys.E_J):
            Jn = _ifx(E[:, None] * _fx((J + 0.5 * dt * Sa).swapaxes(-1, -2))).swapaxes(-1, -2) + 0.5 * dt * Sb
            Jn[..., -1] = 0.0
            J_new.append(Jn)
    else:
        J_new = Js
    return a_new, J_new


def evolve_tau(sys: KeySubsystem, hist: History, Js: list[np.ndarray], t: float, a_next: np.ndarray):
    """Advance the J_t grids one step given the boundary history (Heun, upwind in z)."""
    dt = sys.dt
    S0 = sys.tau_rhs(Js, hist, t)
    J_star = [_ifx(E[:, None] * _fx((J + dt * S).swapaxes(-1, -2))).swapaxes(-1, -2)
              for J, S, E in zip(Js, S0, sys.E_J)]
    S1 = sys.tau_rhs(J_star, hist, t + dt, extra=a_next)
    out = []
    for J, Sa, Sb, E in zip(Js, S0, S1, sys.E_J):
        Jn = _ifx(E[:, None] * _fx((J + 0.5 * dt * Sa).swapaxes(-1, -2))).swapaxes(-1, -2) + 0.5 * dt * Sb
        Jn[..., -1] = 0.0
        out.append(Jn)
    return out


@dataclass
class ProfileSolution:
    sys: KeySubsystem
    hist: History
    J: list[np.ndarray] = field(default_factory=list)
    J_traces: list[list[np.ndarray]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def consts(self) -> ConstantsBundle:
        return self.sys.consts

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.hist.levels)) * self.hist.dt

    def levels(self, order: int = 0) -> np.ndarray:
        """History array, or its order-th time derivative by finite differences."""
        key = f"_lv{order}"
        if not hasattr(self, key):
            H = self.hist.stack()
            for _ in range(order):
                H = np.gradient(H, self.hist.dt, axis=0, edge_order=2)
            setattr(self, key, H)
        return getattr(self, key)

    def a_hat(self, T, dt_order: int = 0, dx_order: int = 0, primitive: bool = False,
              square: bool = False) -> np.ndarray:
        """Half spectrum at times T (n,), optionally differentiated, or the
        mean-free square (a^2)_k when ``square`` is set."""
        A = self.hist.interp(np.atleast_1d(T), arr=self.levels(dt_order))
        if square:
            A = np.array([self.sys.burgers(a) for a in A]) * inv_ik(A.shape[-2])[:, None]
        if dx_order:
            A = _ifx(_fx(A) * (1j * self.hist.xi) ** dx_order)
        if primitive:
            A = A * inv_ik(A.shape[-2])[:, None]
        return A

    def a_eval(self, t, x1, theta, dt_order: int = 0, dx_order: int = 0, primitive: bool = False,
               square: bool = False) -> np.ndarray:
        """Pointwise a (or a derivative, or its primitive, or a^2) at broadcast arrays t, x1, theta."""
        t, x1, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x1, theta)))
        shape = t.shape
        t, x1, theta = t.ravel(), x1.ravel(), theta.ravel()
        ut, inv = np.unique(t, return_inverse=True)
        A = self.a_hat(ut, dt_order, dx_order, primitive, square)
        nx = A.shape[-1]
        if nx == 1:
            coef = A[inv, :, 0]                                   # (npts, K+1)
        else:
            Ah = _fx(A) / nx                                      # (nt, K+1, nx) in xi
            ph = np.exp(1j * np.outer(x1, self.hist.xi))          # (npts, nx)
            coef = np.einsum("pkj,pj->pk", Ah[inv], ph)
        k = np.arange(A.shape[1])
        val = coef[:, 1:] * np.exp(1j * np.outer(theta, k[1:]))
        return (2 * np.real(val.sum(axis=1))).reshape(shape)

    def sigma(self, m: int, t, x1, z, theta, **kw) -> np.ndarray:
        """Scalar incoming profile sigma_m by exact characteristic translation."""
        v = self.consts.velocity[m]
        z = np.asarray(z, dtype=float)
        return self.consts.eps[m] * self.a_eval(np.asarray(t) - z / v[-1], np.asarray(x1) - v[0] * z / v[-1],
                                                theta, **kw)

    def J_exact(self, t: float, z0: float = 0.0, triple_index: int = 0) -> np.ndarray:
        n = int(round(t / self.hist.dt))
        H = History(self.hist.dt, self.hist.K, self.hist.n_x1, self.hist.L1)
        H.levels = self.hist.levels[: n + 1]
        return memory_term_exact(H, self.consts, n * self.hist.dt, triple_index, z0=z0)

    def residual(self, n_samples: int = 20) -> float:
        """Max residual of the amplitude equation with independent finite differences,
        relative to the max forcing."""
        sys, H = self.sys, self.hist
        lv = self.levels()
        nT = lv.shape[0]
        if nT < 5:
            return 0.0
        idx = np.unique(np.linspace(2, nT - 3, n_samples).astype(int))
        res, scale = 0.0, 0.0
        for n in idx:
            t = n * H.dt
            at = (-lv[n + 2] + 8 * lv[n + 1] - 8 * lv[n - 1] + lv[n - 2]) / (12 * H.dt)
            Hn = History(H.dt, H.K, H.n_x1, H.L1)
            Hn.levels = H.levels[: n + 1]
            tr = [memory_term_exact(Hn, self.consts, t, i, n_quad=4 * n + 1) for i in range(len(self.consts.triples))]
            wx = self.consts.w[0] if len(self.consts.w) else 0.0
            ax = _ifx(_fx(lv[n]) * 1j * H.xi)
            r = at + wx * ax - sys.boundary_rhs(lv[n], t, tr)
            res = max(res, float(np.max(np.abs(r[1:]))))
            scale = max(scale, float(np.max(np.abs(sys.forcing(t)))))
        return res / scale if scale else res


def reconstruct_sigma(sol: ProfileSolution, m: int, t, x1, z, theta) -> np.ndarray:
    return sol.sigma(m, t, x1, z, theta)


def solve_key_subsystem(model: HyperbolicModel, source: BoundarySource, T: float = 1.0, K: int = 8,
                        n_x1: int = 16, dt: float = 0.005, mode: str = "exact", ms: ModeSet | None = None,
                        triples: list[ResonanceTriple] | None = None, n_max: int = 12,
                        keep_traces: bool = False, **kw) -> ProfileSolution:
    """March the key subsystem to time T."""
    ms = mode_package(model) if ms is None else ms
    if triples is None:
        triples = find_resonances(ms, n_max)
    consts = compute_constants(ms, triples)
    if not source.x1_dependent:
        n_x1 = 1
    sys = KeySubsystem(ms, consts, source, K=K, n_x1=n_x1, L1=source.L1, dt=dt, mode=mode, T=T, **kw)
    hist = History(dt, K, sys.n_x1, source.L1)
    ah = np.zeros((K + 1, sys.n_x1), complex)
    Js = [np.zeros((K + 1, sys.n_x1, sys.nz), complex) for _ in consts.triples] if sys.mode == "grid" else []
    hist.append(ah)
    sol = ProfileSolution(sys, hist)
    nsteps = int(round(T / dt))
    sup = [0.0]
    for n in range(nsteps):
        t = n * dt
        ah, Js = step_amplitude(sys, hist, ah, Js, t)
        sys.check(ah, t + dt)
        hist.append(ah)
        sup.append(2 * float(np.sum(np.max(np.abs(ah), axis=1))))
        if keep_traces and sys.mode == "grid":
            sol.J_traces.append([J[..., 0].copy() for J in Js])
    sol.J = Js
    sol.diagnostics["sup_bound"] = np.array(sup)
    sol.diagnostics["max_mean"] = max(float(np.max(np.abs(lv[0]))) for lv in hist.levels)
    return sol
