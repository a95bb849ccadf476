"""Fast-variable corrector and assembly of approximate solutions.

The exact solution u = v/eps is compared with

    u_app = V0(x, phi/eps),
    u_c   = V0 + eps V1 + eps^2 U2_p       (all at theta_m = phi_m/eps),

where V0 = sum_{m incoming} e_m a(translate_m, theta_m) and V1 collects

* the non-averaged part (I - E)V1 = -R L(d) V0,
* the outgoing corrector sum_t S_t J_t,
* incoming first correctors, transported from a boundary trace fixed by the
  first-order boundary condition up to a multiple a1 of e; the minimum-norm
  part is completed by a1, which solves the linear amplitude equation given by
  the second-order boundary solvability condition (x1-independent sources),
* the theta-mean field driven by the means of D(V0, V0) and Psi(V0, V0).

U2_p solves the fast system for the non-averaged part of -A0 D(V0, V0).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amplitude import History, ProfileSolution, _out_modes, inv_ik, memory_term_exact
from .profiles import ProfileError, TrigSeries, _match_tol, partial_inverse_R, project_E
from .spectral import ModeSet

__all__ = [
    "TwoScalePoly",
    "solve_fast_system",
    "substitute",
    "CorrectedApprox",
    "build_corrected_approx",
]


@dataclass
class TwoScalePoly:
    """sum_{(k0, kd)} U_{k0,kd}(x) exp(i k0 theta0 + i kd xi_d)."""

    N: int
    coeffs: dict[tuple[int, float], np.ndarray] = field(default_factory=dict)
    residual: float = 0.0

    def add(self, key, value) -> None:
        key = (int(key[0]), float(key[1]))
        self.coeffs[key] = self.coeffs.get(key, 0) + np.asarray(value, complex)

    def evaluate(self, theta0, xi_d) -> np.ndarray:
        """Values at broadcast (theta0, xi_d); coefficients must be constant (shape (N,))."""
        theta0, xi_d = np.broadcast_arrays(np.asarray(theta0, float), np.asarray(xi_d, float))
        out = np.zeros(theta0.shape + (self.N,), complex)
        for (k0, kd), U in self.coeffs.items():
            out += np.exp(1j * (k0 * theta0 + kd * xi_d))[..., None] * U
        return out

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.coeffs.values()), default=0.0)


def _key(ms: ModeSet, alpha) -> tuple[int, float]:
    return int(sum(alpha)), float(np.dot(alpha, ms.omega))


def solve_fast_system(F: TrigSeries, ms: ModeSet, det_floor: float = 1e-10, tol: float = 1e-10,
                      e_tol: float = 1e-10) -> TwoScalePoly:
    """Solve cL_0(d_theta0, d_xi_d) U = F|_{theta -> (theta0, xi_d)} for F with E F = 0.

    Coefficients are first grouped by (k0, kd) = (n_alpha, alpha . omega).
    Noncharacteristic keys are inverted directly; characteristic keys (kd = k0
    omega_m) are solved by least squares on the range of L(d phi_m).  The
    forward residual is checked before returning.
    """
    scale = max(1.0, F.max_abs())
    if project_E(F, ms).max_abs() > e_tol * scale:
        raise ProfileError("fast system needs E F = 0")
    groups: dict[tuple[int, float], np.ndarray] = {}
    keys = {}
    for a, v in F.items():
        k = _key(ms, a)
        match = next((kk for kk in keys if kk[0] == k[0] and abs(kk[1] - k[1]) <= 1e-9 * max(1, abs(k[1]))), None)
        k = match if match is not None else k
        keys[k] = a
        groups[k] = groups.get(k, 0) + v
    tol_m = _match_tol(ms)
    out = TwoScalePoly(ms.N)
    res = 0.0
    for k, v in groups.items():
        if k[0] == 0 and abs(k[1]) <= 1e-12:
            if np.max(np.abs(v)) > e_tol * scale:
                raise ProfileError("nonzero mean in fast-system data")
            continue
        L = 1j * ms.L(k[0], k[1])
        hits = [m for m in range(ms.M) if k[0] != 0 and abs(k[1] - k[0] * ms.omega[m]) <= tol_m * abs(k[0])]
        flat = v.reshape(-1, ms.N).T
        if hits:
            U, *_ = np.linalg.lstsq(L, flat, rcond=1e-10)
        else:
            if abs(np.linalg.det(L)) < det_floor:
                raise ProfileError(f"small divisor at key {k}")
            U = np.linalg.solve(L, flat)
        r = float(np.max(np.abs(L @ U - flat))) if flat.size else 0.0
        res = max(res, r)
        out.add(k, U.T.reshape(v.shape))
    out.residual = res / scale
    if out.residual > tol:
        raise ProfileError(f"fast-system residual {out.residual:.3e} exceeds {tol:.1e}")
    return out


def substitute(f: TrigSeries, ms: ModeSet) -> TwoScalePoly:
    """theta -> (theta0, xi_d): coefficient alpha goes to theta0-mode n_alpha with
    xi_d-frequency alpha . omega."""
    out = TwoScalePoly(ms.N)
    for a, v in f.items():
        out.add(_key(ms, a), v)
    return out


# ---------------------------------------------------------------------------
# assembly on the direct-solver grid

def _modes_at(sol: ProfileSolution, T: np.ndarray, X: np.ndarray, **kw) -> np.ndarray:
    """Half-spectrum coefficients a_k (or derivatives) at points (T, X): (K+1, npts)."""
    T = np.asarray(T, float).ravel()
    X = np.asarray(X, float).ravel()
    ut, inv = np.unique(T, return_inverse=True)
    A = sol.a_hat(ut, **kw)                                       # (nt, K+1, nx)
    return _x1_interp(A, inv, X, sol.hist)


def _x1_interp(A: np.ndarray, inv: np.ndarray, X: np.ndarray, hist: History) -> np.ndarray:
    nx = A.shape[-1]
    if nx == 1:
        return A[inv, :, 0].T
    Ah = np.fft.fft(A, axis=-1) / nx
    ph = np.exp(1j * np.outer(X, hist.xi))
    return np.einsum("pkj,pj->kp", Ah[inv], ph)


def _synth(c: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Real series 2 Re sum_{k>=1} c_k exp(i k theta) from (K+1, npts) coefficients."""
    k = np.arange(1, c.shape[0])
    return 2 * np.real(np.sum(c[1:] * np.exp(1j * np.outer(k, theta)), axis=0))


def _mj(A: np.ndarray, j: int) -> np.ndarray:
    """theta-mode j (any sign) from a half spectrum on the last axis."""
    return A[..., j] if j >= 0 else np.conj(A[..., -j])


def _ik(j: int) -> complex:
    return 1j * j


def _tinterp(arr: np.ndarray, T: np.ndarray, dt: float) -> np.ndarray:
    """Linear interpolation of level data arr (nT, ...) at times T, zero for T < 0."""
    T = np.asarray(T, float)
    s = np.clip(T / dt, 0.0, arr.shape[0] - 1)
    i0 = np.minimum(np.floor(s).astype(int), max(arr.shape[0] - 2, 0))
    i1 = np.minimum(i0 + 1, arr.shape[0] - 1)
    fr = (s - i0).reshape(T.shape + (1,) * (arr.ndim - 1))
    out = (1 - fr) * arr[i0] + fr * arr[i1]
    out[T < 0] = 0.0
    return out


def _conv(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Modes k = 0..K of the product of two real series given as half spectra (..., K+1)."""
    K = a.shape[-1] - 1
    out = np.zeros(np.broadcast_shapes(a.shape, y.shape), complex)
    for k in range(K + 1):
        for j in range(-K, K + 1):
            if abs(k - j) <= K:
                out[..., k] += _mj(a, k - j) * _mj(y, j)
    out[..., 0] = 0.0
    return out


@dataclass
class CorrectedApprox:
    sol: ProfileSolution
    eps: float
    fast: TwoScalePoly | None = None
    parts: dict = field(default_factory=dict)
    manifest: list[str] = field(default_factory=list)

    def __post_init__(self):
        sol = self.sol
        self.ms: ModeSet = sol.sys.ms
        self.model = self.ms.model
        self.c = sol.consts
        self.inc = self.ms.incoming
        self.A0 = self.model.A0
        self.A1 = self.model.A(1)
        self.S = np.column_stack([self.ms.vec(m) for m in self.inc])
        self.BSpinv = np.linalg.pinv(self.model.B @ self.S, rcond=1e-10)
        self._fast_vectors()
        # the boundary trace does not depend on eps; share it between approximations
        cache = sol.diagnostics.setdefault("_trace_cache", {})
        if not cache:
            self._trace = self._boundary_trace_history()
            self.a1 = self._second_amplitude() if sol.hist.n_x1 == 1 else None
            if self.a1 is not None:
                for j, m in enumerate(self.inc):
                    self._trace[:, j, :, 0] += self.c.eps[m] * self.a1
            cache.update(trace=self._trace, a1=self.a1, parts=dict(self.parts))
        self._trace, self.a1 = cache["trace"], cache["a1"]
        self.parts.update(cache["parts"])
        if self.a1 is not None:
            trace_note = "V1 trace: minimum-norm part plus e a1, a1 from the next boundary solvability condition"
        else:
            trace_note = "V1 trace: minimum-norm solution along ker B on the stable space (a1 omitted)"
        self.manifest += [
            trace_note,
            "theta-mean field by exact characteristics (x1-independent sources)",
            "U2_p from the non-averaged part of -A0 D(V0, V0)",
        ]

    # -- V1 boundary trace -----------------------------------------------------
    def _J_levels(self) -> list[np.ndarray]:
        H = self.sol.hist
        out = []
        nT = len(H.levels)
        for n in range(nT):
            Hn = History(H.dt, H.K, H.n_x1, H.L1)
            Hn.levels = H.levels[: n + 1]
            out.append([memory_term_exact(Hn, self.c, n * H.dt, i) for i in range(len(self.c.triples))])
        return out

    def _boundary_trace_history(self) -> np.ndarray:
        """sigma^1_m boundary coefficients at every stored level: (nT, n_inc, K+1, nx)."""
        sol, ms, c = self.sol, self.ms, self.c
        H = sol.hist
        K = H.K
        lv = sol.levels()
        lt = sol.levels(1)
        x1 = sol.sys.x1
        Jl = self._J_levels()
        self._Jl = Jl
        iik = inv_ik(K + 1)[:, None]
        # (I - E) V1 at the boundary: -sum_m R_m (A0 e_m a_t* + A1 e_m a_x*)
        vt = -sum(ms.R[m] @ self.A0 @ ms.e_parts[m] for m in self.inc)
        vx = -sum(ms.R[m] @ self.A1 @ ms.e_parts[m] for m in self.inc)
        psi_ee = self.model.quad_boundary(ms.e, ms.e)
        out = np.zeros((len(lv), len(self.inc), K + 1, H.n_x1), complex)
        defect = 0.0
        for n in range(len(lv)):
            t = n * H.dt
            a, at = lv[n], lt[n]
            ax = np.fft.ifft(np.fft.fft(a, axis=-1) * 1j * H.xi, axis=-1)
            sq = sol.sys.burgers(a) * iik                     # (a^2)_k, k >= 1
            rhs = np.zeros((K + 1, H.n_x1, self.model.p), complex)
            for k in range(1, K + 1):
                rhs[k] = sol.sys.source.mode(k, t, x1) if k in sol.sys.source.modes else 0.0
            rhs -= sq[..., None] * psi_ee
            V1ie = (at * iik)[..., None] * vt + (ax * iik)[..., None] * vx
            V1out = sum(J[..., None] * S for J, S in zip(Jl[n], c.sources)) if c.sources else 0.0
            rhs -= (V1ie + V1out) @ self.model.B.T
            rhs[0] = 0.0
            defect = max(defect, float(np.max(np.abs(rhs @ ms.b))))
            coef = rhs @ self.BSpinv.T                          # (K+1, nx, n_inc)
            out[n] = np.moveaxis(coef, -1, 0)
        self.parts["trace_solvability_defect"] = defect
        return out

    def _second_amplitude(self) -> np.ndarray:
        """Amplitude a1 of the e-component of the V1 boundary trace.

        It is fixed by the solvability of the second-order boundary condition,
        b . B V2 = -b . (Psi(V0, V1) + Psi(V1, V0)) at x_d = 0, which gives

            kappa d_t a1 = i k [terms from (I - E) V2, E_q V2 and Psi(V0, V1)].

        The outgoing part E_q V2 = r_q sigma2 is transported along the outgoing
        characteristic through the grid nodes (t_l, z_i = |v_qd| i dt).
        Returns the half spectrum on the amplitude time grid, (nT, K+1).
        """
        sol, ms, c, model = self.sol, self.ms, self.c, self.model
        H = sol.hist
        dt, K = H.dt, H.K
        A0, B, b = self.A0, model.B, ms.b
        inc = self.inc
        lv = sol.levels()[:, :, 0]
        lt = sol.levels(1)[:, :, 0]
        ltt = sol.levels(2)[:, :, 0]
        nT = lv.shape[0]
        iik = inv_ik(K + 1)
        ik = 1j * np.arange(K + 1)
        Ds = lambda u, w: model.quad(u, w) + model.quad(w, u)
        Ps = lambda u, w: model.quad_boundary(u, w) + model.quad_boundary(w, u)
        bB = b @ B
        eye = np.eye(ms.N)
        cmin = self._trace[:, :, :, 0].copy()
        cdot = np.gradient(cmin, dt, axis=0, edge_order=2)
        sq = np.array([sol.sys.burgers(a[:, None])[:, 0] for a in lv]) * iik
        Jb = np.array([[J[:, 0] for J in row] for row in self._Jl]).reshape(nT, len(c.triples), K + 1)
        Jbt = np.gradient(Jb, dt, axis=0, edge_order=2)
        W = {m: -ms.R[m] @ A0 @ ms.e_parts[m] for m in inc}        # (I - E) V1 = W_m a_t*

        # boundary terms that do not involve a1
        rest = np.zeros((nT, K + 1), complex)
        for j, m in enumerate(inc):
            rest -= iik * float(bB @ ms.R[m] @ A0 @ ms.vec(m)) * cdot[:, j]
            cc = float(bB @ ms.R[m] @ (A0 - eye / c.velocity[m][-1]) @ ms.R[m] @ A0 @ ms.e_parts[m])
            rest += iik**2 * cc * ltt
            rest -= iik * float(bB @ ms.R[m] @ A0 @ model.quad(ms.e_parts[m], ms.e_parts[m])) * sq
        for i, (tr, S) in enumerate(zip(c.triples, c.sources)):
            rest -= iik * float(bB @ ms.R[tr.m] @ A0 @ S) * Jbt[:, i]
        rest -= self._cross_terms(lv)
        # Psi(V0, V1) + Psi(V1, V0) with the a1-free part of V1 at the boundary
        mean0 = np.array([self._mean_field(n * dt, np.zeros((1, 1)), np.zeros((1, 1)))[:, 0, 0]
                          for n in range(nT)])
        y = np.zeros((nT, K + 1), complex)
        for j, m in enumerate(inc):
            y += cmin[:, j] * float(b @ Ps(ms.e, ms.vec(m)))
            y += lt * iik * float(b @ Ps(ms.e, W[m]))
        for i, S in enumerate(c.sources):
            y += Jb[:, i] * float(b @ Ps(ms.e, S))
        y[:, 0] = mean0 @ np.array([b @ Ps(ms.e, u) for u in eye])
        rest += _conv(lv, y)
        psi_ee = float(b @ Ps(ms.e, ms.e))

        # outgoing second-order transport, a1-free part
        tf_known = np.zeros((nT, K + 1), complex)
        lin_data = []
        for i, (tr, S) in enumerate(zip(c.triples, c.sources)):
            q, p, s_ = tr.m, tr.p, tr.r
            if p == s_:
                raise NotImplementedError("self-interacting resonance triples")
            vq, vp, vs = c.velocity[q][-1], c.velocity[p][-1], c.velocity[s_][-1]
            lq = ms.lvec(q) @ A0
            lqR = lq @ ms.R[q] @ A0
            g1 = vq * float(lqR @ S)
            g2 = vq * float(lqR @ Ds(ms.e_parts[p], ms.e_parts[s_]))
            h = {p: (s_, -vq * float(lq @ Ds(ms.e_parts[s_], ms.vec(p))),
                     -vq * float(lq @ Ds(ms.e_parts[s_], W[p]))),
                 s_: (p, -vq * float(lq @ Ds(ms.e_parts[p], ms.vec(s_))),
                      -vq * float(lq @ Ds(ms.e_parts[p], W[s_])))}
            lm = {m: ms.lvec(m) for m in (p, s_)}
            c_tt = {m: float(lm[m] @ A0 @ ms.R[m] @ A0 @ ms.e_parts[m]) for m in (p, s_)}
            c_sq = {m: float(lm[m] @ A0 @ model.quad(ms.e_parts[m], ms.e_parts[m])) for m in (p, s_)}
            jp = {m: inc.index(m) for m in (p, s_)}
            hz = abs(vq) * dt
            nZ = nT + 2
            z = np.arange(nZ) * hz
            tl = np.arange(nT) * dt
            Tm = {m: tl[:, None] - z[None, :] / c.velocity[m][-1] for m in (p, s_)}
            ks = _out_modes(tr, K)
            n_q, n_m = tr.n_m, {p: tr.n_p, s_: tr.n_r}
            # J on the (t, z) grid, characteristics through the nodes
            Ig = np.zeros((nT, nZ, K + 1), complex)
            fld = {m: _tinterp(lv, Tm[m], dt) for m in (p, s_)}
            for k in ks:
                Ig[:, :, k * n_q] = _mj(fld[p], k * n_m[p]) * _mj(fld[s_], k * n_m[s_])
            Jg = np.zeros_like(Ig)
            for l in range(1, nT):
                Jg[l, :-1] = Jg[l - 1, 1:] + 0.5 * dt * (Ig[l - 1, 1:] + Ig[l, :-1])
            Jtt = np.gradient(np.gradient(Jg, dt, axis=0, edge_order=2), dt, axis=0, edge_order=2)
            fld_t = {m: _tinterp(lt, Tm[m], dt) for m in (p, s_)}
            fld_tt = {m: _tinterp(ltt, Tm[m], dt) for m in (p, s_)}
            fld_c = {m: _tinterp(cmin[:, jp[m]], Tm[m], dt) for m in (p, s_)}
            fld_sq = {m: _tinterp(sq, Tm[m], dt) for m in (p, s_)}
            src = np.zeros((nT, nZ, K + 1), complex)
            src += g1 * Jtt * iik
            for k in ks:
                jq, a_, b_ = k * n_q, k * n_m[p], k * n_m[s_]
                dprod = (_mj(fld_t[p], a_) * _mj(fld[s_], b_) + _mj(fld[p], a_) * _mj(fld_t[s_], b_))
                src[:, :, jq] += g2 * dprod / (1j * jq)
                for m, (o, h_r, h_w) in h.items():
                    jm, jo = k * n_m[m], k * n_m[o]
                    sig = (_mj(fld_c[m], jm) + z[None, :] * (c_tt[m] * _mj(fld_tt[m], jm) / _ik(jm)
                                                             - c_sq[m] * _mj(fld_sq[m], jm)))
                    Y = h_r * sig + h_w * _mj(fld_t[m], jm) / _ik(jm)
                    src[:, :, jq] += Y * _mj(fld[o], jo)
            sig2 = np.zeros((nT, K + 1), complex)
            for n in range(1, nT):
                idx = np.arange(n + 1)
                w = np.full(n + 1, dt)
                w[[0, -1]] *= 0.5
                sig2[n] = np.tensordot(w, src[n - idx, idx], axes=(0, 0))
            bBr = float(bB @ ms.vec(q))
            tf_known += bBr * sig2
            lin_data.append((tr, bBr, h, Tm, fld, z, ks, n_q, n_m))
        rest += tf_known

        # march kappa d_t a1 = i k (rest + linear terms in a1), Heun
        def lin(n, A1):
            out = psi_ee * _conv(lv[n:n + 1], A1[n:n + 1])[0]
            for (tr, bBr, h, Tm, fld, z, ks, n_q, n_m) in lin_data:
                if n == 0:
                    continue
                idx = np.arange(n + 1)
                w = np.full(n + 1, dt)
                w[[0, -1]] *= 0.5
                acc = np.zeros(K + 1, complex)
                for m, (o, h_r, _) in h.items():
                    A1m = _tinterp(A1[: n + 1], Tm[m][n - idx, idx], dt)
                    for k in ks:
                        jm, jo = k * n_m[m], k * n_m[o]
                        acc[k * n_q] += np.sum(w * h_r * c.eps[m] * _mj(A1m, jm) * _mj(fld[o][n - idx, idx], jo))
                out = out + bBr * acc
            return out

        kap = self.ms.kappa
        A1 = np.zeros((nT, K + 1), complex)
        for n in range(nT - 1):
            f0 = ik / kap * (rest[n] + lin(n, A1))
            A1[n + 1] = A1[n] + dt * f0
            A1[n + 1, 0] = 0
            f1 = ik / kap * (rest[n + 1] + lin(n + 1, A1))
            A1[n + 1] = A1[n] + 0.5 * dt * (f0 + f1)
            A1[n + 1, 0] = 0
        self.parts["a1_max"] = float(np.max(np.abs(A1)))
        return A1

    def _cross_terms(self, lv: np.ndarray) -> np.ndarray:
        """b . B R_alpha A0 (D(e_p, e_s) + D(e_s, e_p)) a_kp a_ks summed over kp + ks = k."""
        ms, K, model = self.ms, self.sol.hist.K, self.model
        out = np.zeros((lv.shape[0], K + 1), complex)
        bB = ms.b @ model.B
        for i, p in enumerate(self.inc):
            for s in self.inc[i + 1:]:
                vec = self.A0 @ (model.quad(ms.e_parts[p], ms.e_parts[s]) + model.quad(ms.e_parts[s], ms.e_parts[p]))
                F = TrigSeries(ms.M, ms.N)
                for kp in range(-K, K + 1):
                    for k in range(1, K + 1):
                        ks = k - kp
                        if kp and ks and abs(ks) <= K:
                            a = [0] * ms.M
                            a[p], a[s] = kp, ks
                            F[a] = vec
                RF = partial_inverse_R(F, ms)
                for a, v in RF.items():
                    k = a[p] + a[s]
                    out[:, k] += (bB @ v) * _mj(lv, a[p]) * _mj(lv, a[s])
        return out

    def _trace_at(self, j: int, T: np.ndarray, X: np.ndarray) -> np.ndarray:
        H = self.sol.hist
        T = np.asarray(T, float).ravel()
        ut, inv = np.unique(T, return_inverse=True)
        A = H.interp(ut, arr=self._trace[:, j])
        return _x1_interp(A, inv, np.asarray(X, float).ravel(), H)

    # -- fast corrector ----------------------------------------------------------
    def _fast_vectors(self) -> None:
        """Unit-amplitude fast-system solutions for every index of D(V0, V0).

        Same-mode products contribute -A0 D(e_p, e_p) (a^2)_k at alpha = k e_p,
        cross products -2 A0 D(e_p, e_s) a_kp a_ks at alpha = kp e_p + ks e_s.
        """
        ms, K = self.ms, self.sol.hist.K
        inc = self.inc
        F = TrigSeries(ms.M, ms.N)
        pairs: dict[tuple[int, ...], list[tuple[int, int, int, int]]] = {}
        A0D = lambda u, w: self.A0 @ self.model.quad(u, w)
        for i, p in enumerate(inc):
            for s in inc[i:]:
                if p == s:
                    vec = -A0D(ms.e_parts[p], ms.e_parts[p])
                    for k in range(-2 * K, 2 * K + 1):
                        terms = [(p, kp, p, k - kp) for kp in range(-K, K + 1)
                                 if kp and k - kp and abs(k - kp) <= K]
                        if k == 0 or not terms:
                            continue
                        a = [0] * ms.M
                        a[p] = k
                        F[a] = vec
                        pairs[tuple(a)] = terms
                else:
                    vec = -2.0 * A0D(ms.e_parts[p], ms.e_parts[s])
                    for kp in range(-K, K + 1):
                        for ks in range(-K, K + 1):
                            if kp and ks:
                                a = [0] * ms.M
                                a[p], a[s] = kp, ks
                                F[a] = vec
                                pairs[tuple(a)] = [(p, kp, s, ks)]
        F = F - project_E(F, ms)
        self.fast = solve_fast_system(F, ms)
        self._F = F
        self._pairs = pairs
        self.parts["fast_residual"] = self.fast.residual

    # -- evaluation --------------------------------------------------------------
    def _geometry(self, t: float, X1: np.ndarray, X2: np.ndarray):
        tau, eta = self.model.beta
        th0 = (tau * t + eta * X1) / self.eps
        return th0

    def _incoming_args(self, m: int, t: float, X1, X2):
        v = self.c.velocity[m]
        return t - X2 / v[-1], X1 - v[0] * X2 / v[-1]

    def leading(self, t: float, X1, X2) -> np.ndarray:
        X1, X2 = np.broadcast_arrays(np.asarray(X1, float), np.asarray(X2, float))
        th0 = self._geometry(t, X1, X2)
        out = np.zeros((self.ms.N,) + X1.shape)
        for m in self.inc:
            T, X = self._incoming_args(m, t, X1, X2)
            th = (th0 + self.ms.omega[m] * X2 / self.eps).ravel()
            A = _synth(_modes_at(self.sol, T, X), th).reshape(X1.shape)
            out += self.ms.e_parts[m][:, None, None] * A if X1.ndim == 2 else np.multiply.outer(self.ms.e_parts[m], A)
        return out

    def first_order(self, t: float, X1, X2) -> dict[str, np.ndarray]:
        """Pieces of V1 on the grid (each (N,) + grid shape)."""
        X1, X2 = np.broadcast_arrays(np.asarray(X1, float), np.asarray(X2, float))
        shp = X1.shape
        ms, c = self.ms, self.c
        th0 = self._geometry(t, X1, X2).ravel()
        x2f = X2.ravel()
        N = ms.N
        V_ie = np.zeros((N, x2f.size))
        V_inc = np.zeros((N, x2f.size))
        for j, m in enumerate(self.inc):
            T, X = self._incoming_args(m, t, X1, X2)
            th = th0 + ms.omega[m] * x2f / self.eps
            em = ms.e_parts[m]
            d = lambda **kw: _synth(_modes_at(self.sol, T, X, primitive=True, **kw), th)
            at, ax = d(dt_order=1), d(dx_order=1)
            att, axt, axx = d(dt_order=2), d(dt_order=1, dx_order=1), d(dx_order=2)
            V_ie -= np.outer(ms.R[m] @ self.A0 @ em, at) + np.outer(ms.R[m] @ self.A1 @ em, ax)
            lm = ms.lvec(m)
            c_tt = lm @ self.A0 @ ms.R[m] @ self.A0 @ em
            c_xt = lm @ self.A0 @ ms.R[m] @ self.A1 @ em + lm @ self.A1 @ ms.R[m] @ self.A0 @ em
            c_xx = lm @ self.A1 @ ms.R[m] @ self.A1 @ em
            c_sq = lm @ self.A0 @ self.model.quad(em, em)
            sq = _synth(_modes_at(self.sol, T, X, square=True), th) if c_sq else 0.0
            src = c_tt * att + c_xt * axt + c_xx * axx - c_sq * sq
            sig = _synth(self._trace_at(j, T, X), th) + x2f * src
            V_inc += np.outer(ms.vec(m), sig)
        V_out = np.zeros((N, x2f.size))
        if c.triples:
            V_out = self._outgoing(t, X1, X2).reshape(N, -1)
        V_mean = self._mean_field(t, X1, X2).reshape(N, -1)
        return {k: v.reshape((N,) + shp) for k, v in
                (("non_averaged", V_ie), ("incoming", V_inc), ("outgoing", V_out), ("mean", V_mean))}

    def _outgoing(self, t: float, X1, X2) -> np.ndarray:
        ms, c, H = self.ms, self.c, self.sol.hist
        n = int(round(t / H.dt))
        if abs(n * H.dt - t) > 1e-9:
            raise ValueError("outgoing corrector evaluated off the amplitude time grid")
        Hn = History(H.dt, H.K, H.n_x1, H.L1)
        Hn.levels = H.levels[: n + 1]
        th0 = self._geometry(t, X1, X2)
        out = np.zeros((ms.N,) + X1.shape)
        zs, zinv = np.unique(X2, return_inverse=True)
        for i, (tr, S) in enumerate(zip(c.triples, c.sources)):
            vq = c.velocity[tr.m]
            zmax = -vq[-1] * t
            Jz = np.zeros((len(zs), H.K + 1, H.n_x1), complex)
            for iz, z in enumerate(zs):
                if z < zmax + 1e-12:
                    Jz[iz] = memory_term_exact(Hn, c, t, i, z0=z)
            # x1 dependence of J is on the amplitude grid; interpolate to X1
            coef = _x1_interp(Jz, zinv.ravel(), X1.ravel(), H)            # (K+1, npts)
            th = (th0 + ms.omega[tr.m] * X2 / self.eps).ravel()
            out += np.multiply.outer(S, _synth(coef, th).reshape(X1.shape))
        return out

    def _mean_field(self, t: float, X1, X2) -> np.ndarray:
        """theta-mean of V1 by characteristics of d_t + B_2 d_x2 (x1-independent data)."""
        if self.sol.hist.n_x1 != 1:
            raise NotImplementedError("mean field implemented for x1-independent sources")
        ms, model, H = self.ms, self.model, self.sol.hist
        B2 = model.B_list[-1]
        lam, R = np.linalg.eig(B2)
        lam, R = lam.real, R.real
        L = np.linalg.inv(R)
        inc = lam > 0
        BRin = model.B @ R[:, inc]
        lv = self.sol.levels()

        def msq(T):
            """2 sum_k |a_k|^2 at times T (zero before the start)."""
            T = np.asarray(T, float)
            A = H.interp(T.ravel(), arr=lv)[:, 1:, 0]
            return (2 * np.sum(np.abs(A) ** 2, axis=1)).reshape(T.shape)

        vin = [self.c.velocity[m][-1] for m in self.inc]
        Dm = [model.quad(ms.e_parts[m], ms.e_parts[m]) for m in self.inc]
        psi_ee = model.quad_boundary(ms.e, ms.e)
        LD = [L @ d for d in Dm]

        def source_char(T, Z):
            """L (-mean D(V0, V0)) at (T, Z): (N,) + shape."""
            return -sum(np.multiply.outer(ld, msq(T - Z / vd)) for ld, vd in zip(LD, vin))

        gl_x, gl_w = np.polynomial.legendre.leggauss(64)

        def integral(t0, z0, lam_j, j, length):
            """int_0^length S_j(t0 + s, z0 + lam s) ds with Gauss nodes (length >= 0)."""
            s = 0.5 * (gl_x + 1)[:, None] * length[None]
            val = source_char(t0[None] + s, z0[None] + lam_j * s)[j]
            return 0.5 * length * np.sum(gl_w[:, None] * val, axis=0)

        z = np.unique(np.asarray(X2, float))
        tt = np.full_like(z, t)
        W = np.zeros((model.N, z.size))
        out_idx = np.flatnonzero(~inc)
        in_idx = np.flatnonzero(inc)

        def w_out_at(tq, zq):
            res = np.zeros((len(out_idx), tq.size))
            for q, j in enumerate(out_idx):
                # backward along dz/dt = lam < 0 until t = 0
                res[q] = integral(np.zeros_like(tq), zq - lam[j] * tq, lam[j], j, np.maximum(tq, 0))
            return res

        for q, j in enumerate(out_idx):
            W[j] = w_out_at(tt, z)[q]
        for j in in_idx:
            tb = t - z / lam[j]
            ok = tb > 0
            wb = np.zeros(z.size)
            if np.any(ok):
                wo = w_out_at(tb[ok], np.zeros(int(ok.sum())))          # outgoing at the boundary
                hb = -psi_ee * msq(tb[ok])[:, None]                      # B V = -mean Psi(V0, V0)
                rhs = hb - (R[:, ~inc] @ wo).T @ model.B.T
                cin = np.linalg.solve(BRin, rhs.T)                       # (n_in, pts)
                wb[ok] = cin[list(in_idx).index(j)]
                wb[ok] += integral(tb[ok], np.zeros(int(ok.sum())), lam[j], j, z[ok] / lam[j])
            W[j] = wb
        V = R @ W
        idx = np.searchsorted(z, X2)
        return V[:, idx]

    def fast_part(self, t: float, X1, X2) -> np.ndarray:
        """U2_p on the grid."""
        X1, X2 = np.broadcast_arrays(np.asarray(X1, float), np.asarray(X2, float))
        ms, K = self.ms, self.sol.hist.K
        th0 = self._geometry(t, X1, X2).ravel()
        fields = {}
        for m in self.inc:
            T, X = self._incoming_args(m, t, X1, X2)
            C = _modes_at(self.sol, T, X)                             # (K+1, npts)
            th = th0 + ms.omega[m] * X2.ravel() / self.eps
            ph = np.exp(1j * np.outer(np.arange(K + 1), th))
            fields[m] = C * ph                                        # mode k of a e^{ik theta_m}
        get = lambda m, k: fields[m][k] if k > 0 else np.conj(fields[m][-k])
        out = np.zeros((ms.N, X1.size), complex)
        for key, lst in self._pairs.items():
            U = self.fast.coeffs.get(_key(ms, key))
            if U is None:
                continue
            prod = 0
            for (p, kp, s, ks) in lst:
                prod = prod + get(p, kp) * get(s, ks)
            out += np.outer(U, prod)
        return np.real(out).reshape((ms.N,) + X1.shape)

    def corrected(self, t: float, X1, X2, include_fast: bool = True) -> np.ndarray:
        V0 = self.leading(t, X1, X2)
        V1 = sum(self.first_order(t, X1, X2).values())
        out = V0 + self.eps * V1
        if include_fast:
            out = out + self.eps**2 * self.fast_part(t, X1, X2)
        return out


def build_corrected_approx(sol: ProfileSolution, eps: float) -> CorrectedApprox:
    """Leading and corrected approximations built from a profile solution."""
    return CorrectedApprox(sol, eps)
