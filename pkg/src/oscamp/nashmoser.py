"""Smoothing operators and a Nash-Moser iteration for the discrete key subsystem.

The unknown is the full history X = (a_0, ..., a_N) of boundary amplitudes on
the time grid of the amplitude marcher (half spectra in theta0, periodic grid in
x1).  With Step the Heun step of ``amplitude.step_amplitude`` (exact memory), the
discrete subsystem reads

    F(X) = g,    F(X)_n = a_n - Step(a_0..a_{n-1}) + Step(0),   g_n = Step(0)_n,

so F(0) = 0 and F(X) = g exactly when X is the time-marched solution.  The
derivative F'(Y) = I - dStep(Y) is block lower triangular with identity
diagonal; linearized solves are forward substitutions with the hand-written
linearization of the step (linearized Burgers term and both slots of the
bilinear memory integral).

Smoothing S_theta multiplies the (x1, theta0) spectrum of every level by a
C-infinity cutoff psi(|xi|/theta), psi = 1 on [0, 1] and 0 on [2, inf).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amplitude import History, KeySubsystem, memory_term_exact

__all__ = [
    "cutoff",
    "SmoothingFamily",
    "smoothing_constants",
    "DiscreteSubsystem",
    "IterationTrace",
    "NashMoserError",
    "nash_moser_solve",
    "picard_solve",
]


class NashMoserError(RuntimeError):
    pass


def cutoff(r) -> np.ndarray:
    """Smooth psi with psi = 1 for r <= 1, psi = 0 for r >= 2."""
    r = np.asarray(r, dtype=float)

    def f(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    a, b = f(2.0 - r), f(r - 1.0)
    return a / (a + b)


def cutoff_derivative(r) -> np.ndarray:
    """psi'(r) in closed form."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = (r > 1) & (r < 2)
    x, y = 2.0 - r[m], r[m] - 1.0
    fa, fb = np.exp(-1 / x), np.exp(-1 / y)
    dfa, dfb = -fa / x**2, fb / y**2          # d/dr of f(2 - r) and f(r - 1)
    out[m] = (dfa * (fa + fb) - fa * (dfa + dfb)) / (fa + fb) ** 2
    return out


@dataclass
class SmoothingFamily:
    """S_theta on functions given by (x1, theta0) spectra.

    ``xi1`` are the x1 wavenumbers, ``k`` the theta0 modes; both index the last
    two axes of the spectral arrays (..., k, xi1).
    """

    xi1: np.ndarray
    k: np.ndarray

    @classmethod
    def torus(cls, n1: int, n2: int) -> "SmoothingFamily":
        """Integer wavenumbers of the (2 pi)^2 torus with n1 x n2 points."""
        return cls(np.fft.fftfreq(n1, 1.0 / n1), np.fft.fftfreq(n2, 1.0 / n2))

    @property
    def modulus(self) -> np.ndarray:
        return np.hypot(self.k[:, None], self.xi1[None, :])

    def weight(self, s: float) -> np.ndarray:
        return (1.0 + self.modulus**2) ** (s / 2)

    def multiplier(self, theta: float) -> np.ndarray:
        if theta < 1:
            raise ValueError("smoothing parameter must be >= 1")
        return cutoff(self.modulus / theta)

    def d_multiplier(self, theta: float) -> np.ndarray:
        """d/dtheta psi(|xi|/theta)."""
        r = self.modulus / theta
        return -cutoff_derivative(r) * r / theta

    def apply(self, spec: np.ndarray, theta: float) -> np.ndarray:
        return spec * self.multiplier(theta)

    def norm(self, spec: np.ndarray, s: float) -> float:
        """Discrete H^s norm from normalized spectra (sum over all leading axes)."""
        return float(np.sqrt(np.sum(np.abs(spec) ** 2 * self.weight(s) ** 2)))


def smoothing_constants(n: int = 256, thetas=None, pairs=((1.0, 3.0), (0.0, 2.0), (2.0, 1.0), (3.0, 1.0)),
                        n_samples: int = 4, seed: int = 0, fd_step: float = 1e-4) -> dict:
    """Measured constants of the three smoothing inequalities on an n x n torus.

    (a) |S u|_b <= C theta^{(b-a)+} |u|_a
    (b) |S u - u|_b <= C theta^{b-a} |u|_a            (b <= a)
    (c) |d/dtheta S u|_b <= C theta^{b-a-1} |u|_a     (finite difference in theta)

    Random u have algebraically decaying spectra.  Returns, for each inequality,
    the array of constants over (pair, sample, theta).
    """
    thetas = np.geomspace(2, 64, 11) if thetas is None else np.asarray(thetas, float)
    fam = SmoothingFamily.torus(n, n)
    rng = np.random.default_rng(seed)
    rho = fam.modulus
    C = {"a": [], "b": [], "c": []}
    for _ in range(n_samples):
        u = np.fft.fft2(rng.standard_normal((n, n))) / n**2
        u = u * (1 + rho**2) ** (-1.0)                   # in H^s for s < 1 + ... decaying
        for (b, a) in pairs:
            ua = fam.norm(u, a)
            for th in thetas:
                Su = fam.apply(u, th)
                C["a"].append(fam.norm(Su, b) / (th ** max(b - a, 0.0) * ua))
                if b <= a:
                    C["b"].append(fam.norm(Su - u, b) / (th ** (b - a) * ua))
                dS = (fam.apply(u, th * (1 + fd_step)) - fam.apply(u, th * (1 - fd_step))) / (2 * fd_step * th)
                C["c"].append(fam.norm(dS, b) / (th ** (b - a - 1) * ua))
    return {k: np.array(v) for k, v in C.items()} | {"thetas": thetas}


# ---------------------------------------------------------------------------
# the discrete subsystem and its linearization

class DiscreteSubsystem:
    """Heun/exact-memory discretization of the key subsystem on [0, N dt]."""

    def __init__(self, sys: KeySubsystem, n_steps: int):
        if sys.mode != "exact":
            raise ValueError("Nash-Moser iteration uses the exact memory route")
        self.sys = sys
        self.N = n_steps
        self.dt = sys.dt
        self.shape = (n_steps + 1, sys.K + 1, sys.n_x1)
        self.smoother = SmoothingFamily(sys.xi, np.arange(sys.K + 1))
        self.g = self.step_all(np.zeros(self.shape, complex))

    # -- helpers -------------------------------------------------------------
    def _hist(self, X: np.ndarray, n: int) -> History:
        H = History(self.dt, self.sys.K, self.sys.n_x1, self.sys.L1)
        H.levels = list(X[:n])
        return H

    def _mem(self, H: History, t: float, extra=None, other=None, other_extra=None) -> list[np.ndarray]:
        c = self.sys.consts
        return [memory_term_exact(H, c, t, i, extra=extra, other=other, other_extra=other_extra)
                for i in range(len(c.triples))]

    def _bprod(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """ik (a b)_k by polarization of the dealiased square."""
        s = self.sys
        return 0.25 * (s.burgers(a + b) - s.burgers(a - b))

    def _E(self, a: np.ndarray) -> np.ndarray:
        out = np.fft.ifft(self.sys.E_a * np.fft.fft(a, axis=-1), axis=-1)
        out[0] = 0.0
        return out

    # -- the step and its derivative -------------------------------------------
    def step(self, X: np.ndarray, n: int) -> np.ndarray:
        """Heun step from level n-1 to n using the levels X[:n] as history."""
        s, dt = self.sys, self.dt
        t = (n - 1) * dt
        H = self._hist(X, n)
        a = X[n - 1]
        N0 = s.boundary_rhs(a, t, self._mem(H, t))
        a_star = self._E(a + dt * N0)
        N1 = s.boundary_rhs(a_star, t + dt, self._mem(H, t + dt, extra=a_star))
        out = self._E(a + 0.5 * dt * N0) + 0.5 * dt * N1
        out[0] = 0.0
        return out

    def step_all(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape, complex)
        for n in range(1, self.N + 1):
            out[n] = self.step(X, n)
        return out

    def _lin_rhs(self, a, adot, J, Jdot) -> np.ndarray:
        c = self.sys.consts
        kk = self.sys.kk[:, None]
        r = -c.f1 * adot
        if c.f2:
            r = r - 2.0 * c.f2 * self._bprod(a, adot)
        for mu, Jd in zip(c.mu, Jdot):
            r = r - mu * 1j * kk * Jd
        r[0] = 0.0
        return r

    def dstep(self, Y: np.ndarray, Ydot: np.ndarray, n: int) -> np.ndarray:
        """Derivative of ``step(., n)`` at Y in the direction Ydot (levels < n)."""
        s, dt = self.sys, self.dt
        t = (n - 1) * dt
        H, Hd = self._hist(Y, n), self._hist(Ydot, n)
        a, ad = Y[n - 1], Ydot[n - 1]
        J0 = self._mem(H, t)
        J0d = [u + v for u, v in zip(self._mem(Hd, t, other=H), self._mem(H, t, other=Hd))]
        N0 = s.boundary_rhs(a, t, J0)
        N0d = self._lin_rhs(a, ad, J0, J0d)
        a_star = self._E(a + dt * N0)
        a_stard = self._E(ad + dt * N0d)
        J1 = self._mem(H, t + dt, extra=a_star)
        J1d = [u + v for u, v in zip(self._mem(Hd, t + dt, extra=a_stard, other=H, other_extra=a_star),
                                     self._mem(H, t + dt, extra=a_star, other=Hd, other_extra=a_stard))]
        N1d = self._lin_rhs(a_star, a_stard, J1, J1d)
        out = self._E(ad + 0.5 * dt * N0d) + 0.5 * dt * N1d
        out[0] = 0.0
        return out

    # -- the map F and its linearization ---------------------------------------
    def F(self, X: np.ndarray) -> np.ndarray:
        return X - self.step_all(X) + self.g

    def apply_linear(self, Y: np.ndarray, Xdot: np.ndarray) -> np.ndarray:
        out = Xdot.copy()
        for n in range(1, self.N + 1):
            out[n] -= self.dstep(Y, Xdot, n)
        out[0] = Xdot[0]
        return out

    def solve_linear(self, Y: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Forward substitution for F'(Y) Xdot = f."""
        Xd = np.zeros(self.shape, complex)
        Xd[0] = f[0]
        for n in range(1, self.N + 1):
            Xd[n] = f[n] + self.dstep(Y, Xd, n)
        if not np.all(np.isfinite(Xd)):
            raise NashMoserError("linearized solve produced non-finite values")
        return Xd

    # -- smoothing on histories --------------------------------------------------
    def smooth(self, X: np.ndarray, theta: float) -> np.ndarray:
        spec = np.fft.fft(X, axis=-1)
        return np.fft.ifft(self.smoother.apply(spec, theta), axis=-1)

    def norm(self, X: np.ndarray, s: float = 0.0) -> float:
        """Discrete H^s norm in (x1, theta0), sup over time levels."""
        spec = np.fft.fft(X, axis=-1) / X.shape[-1]
        w = self.smoother.weight(s)
        return float(np.sqrt(np.max(np.sum(np.abs(spec) ** 2 * w**2, axis=(-2, -1)))))


# ---------------------------------------------------------------------------
# iteration

@dataclass
class IterationTrace:
    theta: list[float] = field(default_factory=list)
    Delta: list[float] = field(default_factory=list)
    increment_norms: list[dict[float, float]] = field(default_factory=list)
    quad_error: list[float] = field(default_factory=list)         # |e'_n|
    subst_error: list[float] = field(default_factory=list)        # |e''_n|
    accumulated: list[float] = field(default_factory=list)        # |E_n|
    residual: list[float] = field(default_factory=list)           # |F(V_{n+1}) - g| / |g|
    bookkeeping: list[float] = field(default_factory=list)        # replayed identity defect
    converged: bool = False
    s_grid: tuple[float, ...] = (0.0, 1.0, 2.0)
    increments: list[np.ndarray] = field(default_factory=list)
    f: list[np.ndarray] = field(default_factory=list)
    E: list[np.ndarray] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for n in range(len(self.theta)):
            row = {"n": n, "theta": self.theta[n], "Delta": self.Delta[n],
                   "quad_error": self.quad_error[n], "subst_error": self.subst_error[n],
                   "accumulated_error": self.accumulated[n], "residual": self.residual[n],
                   "bookkeeping_defect": self.bookkeeping[n]}
            for s, v in self.increment_norms[n].items():
                row[f"increment_H{s:g}"] = v
            out.append(row)
        return out


def nash_moser_solve(sub: DiscreteSubsystem, theta0: float = 2.0, tol: float = 1e-6,
                     n_max: int = 30, keep: bool = True) -> tuple[np.ndarray, IterationTrace]:
    """Nash-Moser iteration for F(V) = g with V_0 = 0.

    theta_n = sqrt(theta0^2 + n), Delta_n = theta_{n+1} - theta_n;
    f_0 = S_0 g,  f_n = S_n (g - E_{n-1}) - S_{n-1} (g - E_{n-2}),
    F'(S_n V_n) Vdot_n = f_n,  V_{n+1} = V_n + Vdot_n,
    e_n = F(V_{n+1}) - F(V_n) - F'(S_n V_n) Vdot_n (split into the quadratic
    part e'_n and the substitution part e''_n), E_n = e_0 + ... + e_n.
    The identity sum_{k<=n} f_k + S_n E_{n-1} = S_n g is replayed every step.
    """
    g = sub.g
    gnorm = max(sub.norm(g), 1e-300)
    tr = IterationTrace()
    V = np.zeros(sub.shape, complex)
    FV = np.zeros(sub.shape, complex)
    E_prev = np.zeros(sub.shape, complex)
    S_prev = None
    f_sum = np.zeros(sub.shape, complex)
    for n in range(n_max):
        th = float(np.sqrt(theta0**2 + n))
        th_next = float(np.sqrt(theta0**2 + n + 1))
        # T_n = S_n (g - E_{n-1}) and f_n = T_n - T_{n-1}, so that sum_{k<=n} f_k = T_n
        Sg_E = sub.smooth(g - E_prev, th)
        f = Sg_E if S_prev is None else Sg_E - S_prev
        SV = sub.smooth(V, th)
        Vd = sub.solve_linear(SV, f)
        V_new = V + Vd
        F_new = sub.F(V_new)
        lin_true = sub.apply_linear(V, Vd)
        lin_smooth = sub.apply_linear(SV, Vd)
        e_quad = F_new - FV - lin_true
        e_sub = lin_true - lin_smooth
        e = e_quad + e_sub
        E = E_prev + e
        f_sum = f_sum + f
        # bookkeeping: F(V_{n+1}) = sum f_k + E_n and sum f_k = S_n (g - E_{n-1})
        book = max(sub.norm(f_sum - sub.smooth(g - E_prev, th)), sub.norm(F_new - f_sum - E)) / gnorm
        res = sub.norm(F_new - g) / gnorm
        tr.theta.append(th)
        tr.Delta.append(th_next - th)
        tr.increment_norms.append({s: sub.norm(Vd, s) for s in tr.s_grid})
        tr.quad_error.append(sub.norm(e_quad) / gnorm)
        tr.subst_error.append(sub.norm(e_sub) / gnorm)
        tr.accumulated.append(sub.norm(E) / gnorm)
        tr.residual.append(res)
        tr.bookkeeping.append(book)
        if keep:
            tr.increments.append(Vd)
            tr.f.append(f)
            tr.E.append(E)
        if not np.isfinite(res):
            raise NashMoserError(f"divergence at step {n}")
        V, FV, S_prev, E_prev = V_new, F_new, Sg_E, E
        if res < tol:
            tr.converged = True
            break
    return V, tr


def picard_solve(sub: DiscreteSubsystem, n_max: int = 20, K_high: int | None = None) -> dict:
    """Naive fixed point X_{j+1} = L^{-1}(g - Q(X_j)) without smoothing.

    L keeps the transport and the f1 term; Q collects the Burgers and memory
    terms, evaluated on the previous iterate.  Returns per-iterate residuals
    and norms of the top theta-modes (a derivative-loss exhibit).
    """
    s, dt = sub.sys, sub.dt
    K = s.K
    K_high = K // 2 if K_high is None else K_high
    c = s.consts
    X = np.zeros(sub.shape, complex)
    gnorm = max(sub.norm(sub.g), 1e-300)

    def Q(Xj, n):
        H = sub._hist(Xj, n + 1)
        t = n * dt
        r = np.zeros((K + 1, s.n_x1), complex)
        if c.f2:
            r -= c.f2 * s.burgers(Xj[n])
        for mu, J in zip(c.mu, sub._mem(H, t)):
            r -= mu * 1j * s.kk[:, None] * J
        r[0] = 0.0
        return r

    res, high = [], []
    for _ in range(n_max):
        q = [Q(X, n) for n in range(sub.N + 1)]
        Y = np.zeros(sub.shape, complex)
        for n in range(1, sub.N + 1):
            t = (n - 1) * dt
            N0 = s.forcing(t) - c.f1 * Y[n - 1] + q[n - 1]
            a_star = sub._E(Y[n - 1] + dt * N0)
            N1 = s.forcing(t + dt) - c.f1 * a_star + q[n]
            Y[n] = sub._E(Y[n - 1] + 0.5 * dt * N0) + 0.5 * dt * N1
        X = Y
        res.append(sub.norm(sub.F(X) - sub.g) / gnorm)
        high.append(float(np.max(np.abs(X[:, K_high:]))))
        if not np.isfinite(res[-1]):
            break
    return {"residual": np.array(res), "high_mode_norm": np.array(high), "solution": X}
