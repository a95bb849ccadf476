"""Direct wavelength-resolving solver for

    v_t + B_1 v_x1 + B_2 v_x2 + D(v, v) = 0,           x2 > 0,
    B v + Psi(v, v) = eps^2 G(t, x1, phi_0/eps),       x2 = 0,

with v = 0 for t < 0, plus an exact Laplace-transform oracle for the linear
problem and error/norm utilities.

Space: x1 periodic, x2 in [0, L2] on a uniform grid.  Interior fluxes use flux
splitting along the eigenvectors of B_1 and B_2 with third-order upwind-biased
differences; time stepping is Heun (RK2).  At x2 = 0 the outgoing
characteristic component is advanced with one-sided differences and the
incoming components are recovered from the nonlinear boundary condition by
Newton's method.  All inflow at x2 = L2 is zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BoundarySource, HyperbolicModel, RunConfig

__all__ = [
    "SolverError",
    "Grid",
    "SpaceTimeField",
    "Trajectory",
    "DirectSolver",
    "make_grid",
    "advance",
    "solve_direct",
    "linear_oracle",
    "ErrorReport",
    "compare_to_approx",
    "singular_norms",
]


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    n1: int
    n2: int
    L1: float
    L2: float

    @property
    def dx1(self) -> float:
        return self.L1 / self.n1

    @property
    def dx2(self) -> float:
        return self.L2 / (self.n2 - 1)

    @property
    def x1(self) -> np.ndarray:
        return np.arange(self.n1) * self.dx1

    @property
    def x2(self) -> np.ndarray:
        return np.arange(self.n2) * self.dx2

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")


@dataclass
class SpaceTimeField:
    grid: Grid
    v: np.ndarray          # (N, n1, n2)
    t: float
    meta: dict = field(default_factory=dict)

    def sup(self) -> float:
        return float(np.max(np.abs(self.v)))


@dataclass
class Trajectory:
    snapshots: list[SpaceTimeField]
    times: np.ndarray              # every step
    sup: np.ndarray                # sup |v| at every step
    eps: float
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> SpaceTimeField:
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-9 * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")


def make_grid(model: HyperbolicModel, eps: float, source: BoundarySource, run: RunConfig,
              ppw: int | None = None) -> Grid:
    """Grid resolving the boundary and reflected wavelengths with ``ppw`` points."""
    ppw = run.ppw if ppw is None else ppw
    if ppw < 12:
        raise SolverError("at least 12 points per wavelength are required")
    eta = float(model.beta[1])
    lam1 = 2 * np.pi * eps / eta
    if source.x1_dependent:
        L1 = source.L1
        n1 = int(np.ceil(L1 / (lam1 / ppw)))
    else:
        L1, n1 = lam1, ppw
    from .spectral import dispersion_roots
    omega, _ = dispersion_roots(model)
    kmax = max(float(np.max(np.abs(omega))) / eps, eta / eps)
    dx2 = 2 * np.pi / kmax / ppw
    L2 = run.height(model)
    n2 = int(np.ceil(L2 / dx2)) + 1
    return Grid(n1, n2, L1, L2)


def _split(A: np.ndarray):
    lam, R = np.linalg.eig(A)
    lam, R = lam.real, R.real
    L = np.linalg.inv(R)
    Ap = R @ np.diag(np.maximum(lam, 0)) @ L
    Am = R @ np.diag(np.minimum(lam, 0)) @ L
    return Ap, Am, lam, R, L


def _apply(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij,j...->i...", M, v)


class DirectSolver:
    """Semi-discrete operator and time stepper on a fixed grid."""

    def __init__(self, model: HyperbolicModel, eps: float, source: BoundarySource, grid: Grid,
                 cfl: float = 0.4, newton_tol: float = 1e-12, newton_iter: int = 5):
        if model.d != 2:
            raise SolverError("the direct solver handles two space dimensions")
        self.model, self.eps, self.source, self.grid = model, eps, source, grid
        self.newton_tol, self.newton_iter = newton_tol, newton_iter
        B1, B2 = model.B_list
        self.A1p, self.A1m, lam1, _, _ = _split(B1)
        self.A2p, self.A2m, lam2, R2, L2 = _split(B2)
        self.speed = float(max(np.max(np.abs(lam1)), np.max(np.abs(lam2))))
        self.dt_max = cfl * min(grid.dx1, grid.dx2) / self.speed
        inc = lam2 > 0
        if int(inc.sum()) != model.p:
            raise SolverError("boundary is characteristic or p mismatch")
        self.R_in, self.R_out, self.L_out = R2[:, inc], R2[:, ~inc], L2[~inc]
        self.BR_in = model.B @ self.R_in
        self.has_D = bool(np.any(model.D))
        self.has_Psi = bool(np.any(model.Psi))
        if np.any(model.D0):
            self.D0 = model.D0
        else:
            self.D0 = None

    # -- spatial differences ---------------------------------------------------
    def _dx1(self, w: np.ndarray, forward_wind: bool) -> np.ndarray:
        h = self.grid.dx1
        r = lambda s: np.roll(w, -s, axis=1)
        if forward_wind:      # positive speed: upwind from the left
            return (2 * r(1) + 3 * w - 6 * r(-1) + r(-2)) / (6 * h)
        return (-2 * r(-1) - 3 * w + 6 * r(1) - r(2)) / (6 * h)

    def _dx2(self, w: np.ndarray, positive: bool) -> np.ndarray:
        h = self.grid.dx2
        d = np.empty_like(w)
        if positive:
            d[..., 2:-1] = (2 * w[..., 3:] + 3 * w[..., 2:-1] - 6 * w[..., 1:-2] + w[..., :-3]) / (6 * h)
            d[..., 1] = (w[..., 2] - w[..., 0]) / (2 * h)
            d[..., -1] = (3 * w[..., -1] - 4 * w[..., -2] + w[..., -3]) / (2 * h)
        else:
            d[..., 1:-2] = (-2 * w[..., :-3] - 3 * w[..., 1:-2] + 6 * w[..., 2:-1] - w[..., 3:]) / (6 * h)
            d[..., -2] = (w[..., -1] - w[..., -3]) / (2 * h)
            d[..., -1] = (3 * w[..., -1] - 4 * w[..., -2] + w[..., -3]) / (2 * h)
        d[..., 0] = (-3 * w[..., 0] + 4 * w[..., 1] - w[..., 2]) / (2 * h)
        return d

    def rhs(self, v: np.ndarray) -> np.ndarray:
        out = -(_apply(self.A1p, self._dx1(v, True)) + _apply(self.A1m, self._dx1(v, False)))
        out -= _apply(self.A2p, self._dx2(v, True)) + _apply(self.A2m, self._dx2(v, False))
        if self.has_D:
            out -= self.model.quad(np.moveaxis(v, 0, -1), np.moveaxis(v, 0, -1)).transpose(2, 0, 1)
        if self.D0 is not None:
            out -= _apply(self.D0, v)
        out[..., -1] = 0.0
        return out

    # -- boundary --------------------------------------------------------------
    def boundary_data(self, t: float) -> np.ndarray:
        x1 = self.grid.x1
        phi0 = self.model.beta[0] * t + self.model.beta[1] * x1
        return self.eps**2 * self.source.evaluate(np.full_like(x1, t), x1, phi0 / self.eps)

    def apply_boundary(self, v: np.ndarray, t: float) -> np.ndarray:
        """Replace the incoming part of v at x2 = 0 by the solution of the boundary equation."""
        v0 = v[:, :, 0].T                                   # (n1, N)
        w_out = v0 @ self.L_out.T                          # (n1, N-p)
        base = w_out @ self.R_out.T
        g = self.boundary_data(t)                          # (n1, p)
        c = np.linalg.solve(self.BR_in, (g - base @ self.model.B.T).T).T
        if self.has_Psi:
            for it in range(self.newton_iter + 1):
                vb = base + c @ self.R_in.T
                F = vb @ self.model.B.T + self.model.quad_boundary(vb, vb) - g
                err = float(np.max(np.abs(F)))
                if err <= self.newton_tol * max(1.0, float(np.max(np.abs(g)))):
                    break
                if it == self.newton_iter:
                    bad = int(np.argmax(np.max(np.abs(F), axis=1)))
                    raise SolverError(f"boundary Newton failed at node x1={self.grid.x1[bad]:.4g}, t={t:.4g}")
                dPsi = np.einsum("ijk,nj,kl->nil", self.model.Psi + self.model.Psi.transpose(0, 2, 1),
                                 vb, self.R_in)
                J = self.BR_in[None] + dPsi
                c = c - np.linalg.solve(J, F[..., None])[..., 0]
        v = v.copy()
        v[:, :, 0] = (base + c @ self.R_in.T).T
        v[..., -1] = 0.0
        return v

    def step(self, v: np.ndarray, t: float, dt: float) -> np.ndarray:
        k1 = self.rhs(v)
        v1 = self.apply_boundary(v + dt * k1, t + dt)
        k2 = self.rhs(v1)
        return self.apply_boundary(0.5 * (v + v1 + dt * k2), t + dt)

    def run(self, T: float, snap_times=(), dt: float | None = None) -> Trajectory:
        g = self.grid
        dt = self.dt_max if dt is None else dt
        if dt > self.dt_max * (1 + 1e-12):
            raise SolverError(f"CFL violation: dt={dt:.3e} > {self.dt_max:.3e}")
        nsteps = int(np.ceil(T / dt - 1e-9))
        dt = T / nsteps
        snap_steps = {int(round(s / dt)): s for s in snap_times}
        for n, s in snap_steps.items():
            if abs(n * dt - s) > 1e-9 * max(1, s):
                # refine the step so that snapshot times fall on the grid
                raise SolverError(f"snapshot t={s} is not a multiple of dt={dt:.6g}")
        v = np.zeros((self.model.N, g.n1, g.n2))
        snaps, sups = [], [0.0]
        if 0 in snap_steps:
            snaps.append(SpaceTimeField(g, v.copy(), 0.0))
        for n in range(nsteps):
            v = self.step(v, n * dt, dt)
            s = float(np.max(np.abs(v)))
            if not np.isfinite(s) or s > 1e6:
                raise SolverError(f"blow-up at t={(n + 1) * dt:.4g}")
            sups.append(s)
            if n + 1 in snap_steps:
                snaps.append(SpaceTimeField(g, v.copy(), (n + 1) * dt, {"dt": dt}))
        return Trajectory(snaps, np.arange(nsteps + 1) * dt, np.array(sups), self.eps,
                          {"dt": dt, "grid": g, "steps": nsteps})


def advance(fld: SpaceTimeField, model: HyperbolicModel, eps: float, source: BoundarySource,
            dt: float, cfl: float = 0.4) -> SpaceTimeField:
    """One Heun step of the direct solver."""
    s = DirectSolver(model, eps, source, fld.grid, cfl=cfl)
    if dt > s.dt_max * (1 + 1e-12):
        raise SolverError(f"CFL violation: dt={dt:.3e} > {s.dt_max:.3e}")
    return SpaceTimeField(fld.grid, s.step(fld.v, fld.t, dt), fld.t + dt, dict(fld.meta))


def _snap_dt(dt_max: float, T: float, snaps) -> float:
    """Largest dt <= dt_max with T and all snapshot times on the time grid."""
    vals = [T] + list(snaps)
    base = min(v for v in vals if v > 0)
    n = int(np.ceil(base / dt_max))
    while True:
        dt = base / n
        if all(abs(v / dt - round(v / dt)) < 1e-9 for v in vals):
            return dt
        n += 1
        if n > 10**7:
            raise SolverError("snapshot times incommensurable with the time step")


def solve_direct(model: HyperbolicModel, eps: float, source: BoundarySource, run: RunConfig,
                 snap_times=None, ppw: int | None = None, cfl: float | None = None,
                 grid: Grid | None = None) -> Trajectory:
    grid = make_grid(model, eps, source, run, ppw) if grid is None else grid
    solver = DirectSolver(model, eps, source, grid, cfl=run.cfl if cfl is None else cfl)
    snaps = [run.T] if snap_times is None else list(snap_times)
    dt = _snap_dt(solver.dt_max, run.T, snaps)
    traj = solver.run(run.T, snaps, dt=dt)
    traj.meta["ppw"] = run.ppw if ppw is None else ppw
    return traj


# ---------------------------------------------------------------------------
# exact linear oracle

def linear_oracle(model: HyperbolicModel, eps: float, source: BoundarySource, t: float,
                  x1: np.ndarray, x2: np.ndarray, gamma: float = 5.0, window: float = 8.0,
                  n_freq: int = 2**13) -> np.ndarray:
    """Exact solution of the linear problem (D = Psi = 0) for x1-independent source modes.

    Each boundary mode k contributes exp(i k eta x1/eps) W_k(t, x2) where W_k
    solves a one-dimensional system.  W_k is built from a damped Fourier
    (Laplace) representation of the boundary data: for every s = gamma + i w
    the decaying solutions exp(mu x2) q of (s + i k eta B_1/eps) q + mu B_2 q = 0
    span the stable space and are fitted to the data by B.  Exactness is up to
    exp(-gamma * window) and the spectral tail of the data.
    """
    if source.x1_dependent:
        raise SolverError("the linear oracle handles x1-independent sources only")
    B1, B2 = model.B_list
    tau, eta = model.beta
    dt = window / n_freq
    tn = np.arange(n_freq) * dt
    w = 2 * np.pi * np.fft.fftfreq(n_freq, d=dt)
    s = gamma + 1j * w
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    out = np.zeros((model.N,) + np.broadcast(x1, x2).shape)
    B2inv = np.linalg.inv(B2)
    for k in source.modes:
        h = eps**2 * source.mode(k, tn, np.zeros_like(tn)) * np.exp(1j * k * tau * tn / eps)[:, None]
        H = np.fft.fft(h * np.exp(-gamma * tn)[:, None], axis=0)            # (n, p)
        Mat = -np.einsum("ij,njk->nik", B2inv, s[:, None, None] * np.eye(model.N) + 1j * k * eta / eps * B1)
        mu, Q = np.linalg.eig(Mat)
        order = np.argsort(mu.real, axis=1)
        mu = np.take_along_axis(mu, order, axis=1)[:, :model.p]
        Q = np.take_along_axis(Q, order[:, None, :], axis=2)[:, :, :model.p]
        if np.any(mu.real >= 0):
            raise SolverError("stable space has the wrong dimension")
        c = np.linalg.solve(np.einsum("ij,njk->nik", model.B, Q), H[..., None])[..., 0]   # (n, p)
        wt = np.exp(s * t) / n_freq
        # W(t, x2) = sum_n wt_n sum_j c_nj Q_n[:, j] exp(mu_nj x2)
        xs = np.unique(x2)
        E = np.exp(mu[:, :, None] * xs[None, None, :])                        # (n, p, nx)
        W = np.einsum("n,nj,nij,njx->ix", wt, c, Q, E)                         # (N, nx)
        idx = np.searchsorted(xs, x2)
        Wx = W[:, idx]
        out += 2 * np.real(Wx * np.exp(1j * k * eta * x1 / eps))
    return out


# ---------------------------------------------------------------------------
# comparison and norms

@dataclass
class ErrorReport:
    eps: float
    times: np.ndarray
    sup_error: np.ndarray
    rel_error: np.ndarray
    e0_error: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(self.sup_error))

    def row(self) -> dict:
        return {"eps": self.eps, "sup_error": self.sup, "rel_error": float(np.max(self.rel_error)),
                "e0_error": float(np.max(self.e0_error))}


def compare_to_approx(traj: Trajectory, approx, eps: float, scale: float | None = None) -> ErrorReport:
    """Errors of u = v/eps against ``approx(t, X1, X2) -> (N, n1, n2)`` on the snapshot grids."""
    if abs(traj.eps - eps) > 1e-14:
        raise SolverError("trajectory and approximation use different eps")
    sc = eps if scale is None else scale
    times, sup, rel, e0 = [], [], [], []
    for snap in traj.snapshots:
        X1, X2 = snap.grid.mesh()
        ua = np.asarray(approx(snap.t, X1, X2))
        if ua.shape != snap.v.shape:
            raise SolverError(f"grid mismatch: {ua.shape} vs {snap.v.shape}")
        d = snap.v / sc - ua
        times.append(snap.t)
        sup.append(float(np.max(np.abs(d))))
        rel.append(sup[-1] / max(float(np.max(np.abs(snap.v / sc))), 1e-300))
        e0.append(float(np.sqrt(np.mean(np.sum(d**2, axis=0)) * snap.grid.L2)))
    return ErrorReport(eps, np.array(times), np.array(sup), np.array(rel), np.array(e0))


def singular_norms(U: np.ndarray, eps: float, beta, L1: float, m: int = 1, gamma: float = 0.0,
                   dt: float = 1.0) -> float:
    """Discrete singular norm of U(x1, theta0) samples on a periodic (n1, n_theta) grid.

    Derivatives are the singular ones d_x1 + beta_1 d_theta0 / eps, measured in
    Fourier space: |xi + k beta_1 / eps|^j; the optional weight exp(-gamma t) is
    applied through ``dt`` (the sample time).
    """
    n1, nth = U.shape[-2:]
    Uh = np.fft.fft2(U, axes=(-2, -1)) / (n1 * nth)
    xi = 2 * np.pi * np.fft.fftfreq(n1, d=L1 / n1)
    k = np.fft.fftfreq(nth, d=1.0 / nth)
    X = xi[:, None] + k[None, :] * float(np.asarray(beta)[-1]) / eps
    w = sum(np.abs(X) ** (2 * j) for j in range(m + 1))
    val = np.sqrt(np.sum(w * np.abs(Uh) ** 2) * L1)
    return float(val * np.exp(-gamma * dt))
