"""Experiment drivers, norm utilities and CSV emission.

Every driver returns a ``Study`` (rows plus named verdicts).  Tolerance bands
come from ``defaults.TOL`` unless the plan overrides them.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import defaults
from .amplitude import solve_key_subsystem
from .corrector import build_corrected_approx, solve_fast_system
from .model import BoundarySource, HyperbolicModel, RunConfig, euler_model
from .nashmoser import DiscreteSubsystem, nash_moser_solve, picard_solve, smoothing_constants
from .profiles import TrigSeries, apply_cL, interaction_integral, partial_inverse_R, ProfileError, project_E
from .solver import linear_oracle, solve_direct
from .spectral import find_resonances, mode_package

__all__ = [
    "ExperimentPlan",
    "Study",
    "sup_norm",
    "rel_l2",
    "halving_ratios",
    "fitted_slope",
    "observed_order",
    "write_csv",
    "amplification_verdicts",
    "convergence_verdicts",
    "run_amplification_study",
    "run_convergence_study",
    "run_oracle_study",
    "run_amplitude_oracles",
    "run_nash_moser_study",
    "induction_constant",
    "run_identity_suite",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# norms and rates

def sup_norm(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def rel_l2(a, b) -> float:
    """|a - b|_2 / |b|_2."""
    nb = float(np.linalg.norm(np.ravel(b)))
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b))) / nb if nb else float(np.linalg.norm(np.ravel(a)))


def halving_ratios(values) -> np.ndarray:
    """values[i+1] / values[i] for a sequence ordered by decreasing eps."""
    v = np.asarray(values, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return v[1:] / v[:-1]


def fitted_slope(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    ok = err > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


def observed_order(e_coarse: float, e_fine: float, ratio: float = 2.0) -> float:
    return float(np.log(e_coarse / e_fine) / np.log(ratio))


def write_csv(path, rows: list[dict], units: dict[str, str] | None = None) -> Path:
    """Write rows with a header naming each column and its unit, e.g. ``eps [1]``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    units = units or {}
    keys = list(rows[0]) if rows else list(units)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{k} [{units.get(k, '1')}]" for k in keys])
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in keys])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return v


# ---------------------------------------------------------------------------
# plans and results

@dataclass
class ExperimentPlan:
    experiment: str
    eps_list: tuple[float, ...] = defaults.EPS_LIST
    ladder: tuple[int, ...] = (48,)
    out_dir: Path | None = None
    model: HyperbolicModel | None = None
    source: BoundarySource | None = None
    T: float = defaults.FINAL_TIME
    tol: dict = field(default_factory=dict)
    threads: int = 1
    control: bool = True

    def __post_init__(self):
        e = np.asarray(self.eps_list, float)
        if e.size == 0 or np.any(e <= 0) or np.any(np.diff(e) >= 0):
            raise ValueError("eps list must be positive and strictly decreasing")
        lad = np.asarray(self.ladder)
        if lad.size == 0 or np.any(np.diff(lad) <= 0):
            raise ValueError("grid ladder must be strictly refining")
        if self.model is None:
            self.model = defaults.default_model()
        if self.source is None:
            self.source = defaults.default_source()
        self.tol = {**defaults.TOL, **self.tol}
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)

    def run_config(self, eps: float, ppw: int | None = None) -> RunConfig:
        return RunConfig(eps=eps, T=self.T, ppw=ppw or self.ladder[0])

    def map_eps(self, fn):
        """fn(eps) for every eps, possibly concurrently; results in plan order."""
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(fn, self.eps_list))
        return [fn(e) for e in self.eps_list]


@dataclass
class Study:
    name: str
    rows: list[dict]
    verdicts: dict[str, bool]
    units: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def save(self, out_dir) -> Path:
        return write_csv(Path(out_dir) / f"{self.name}.csv", self.rows, self.units)

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f} s)"]
        lines += [f"  {k}: {'ok' if v else 'FAILED'}" for k, v in self.verdicts.items()]
        return "\n".join(lines)


def _finish(study: Study, plan: ExperimentPlan | None, t0: float) -> Study:
    study.seconds = time.perf_counter() - t0
    if plan is not None and plan.out_dir is not None:
        study.save(plan.out_dir)
    return study


# ---------------------------------------------------------------------------
# amplification

def amplification_verdicts(eps, sup_wr, sup_ctl, tol: dict) -> dict[str, bool]:
    """Scaling bands: WR response O(eps), control response O(eps^2)."""
    eps = np.asarray(eps, float)
    lo, hi = tol["amp_growth"]
    band = tol["amp_eps_band"]
    out = {}
    r1 = np.asarray(sup_wr) / eps
    g2 = halving_ratios(np.asarray(sup_wr) / eps**2)
    out["wr_ratio_to_eps_within_band"] = bool(r1.max() <= band * r1.min())
    out["wr_ratio_to_eps2_grows_per_halving"] = bool(np.all((g2 >= lo) & (g2 <= hi)))
    if sup_ctl is not None:
        c2 = np.asarray(sup_ctl) / eps**2
        s1 = 1.0 / halving_ratios(np.asarray(sup_ctl) / eps)
        out["control_ratio_to_eps2_within_band"] = bool(c2.max() <= band * c2.min())
        out["control_ratio_to_eps_shrinks_per_halving"] = bool(np.all((s1 >= lo) & (s1 <= hi)))
    return out


def run_amplification_study(plan: ExperimentPlan) -> Study:
    """sup|v_eps| over space and time for each eps; WR model and uniformly stable control."""
    t0 = time.perf_counter()
    models = {"wr": plan.model}
    if plan.control:
        models["control"] = defaults.control_model(plan.model)
    sups: dict[str, list[float]] = {}
    for name, mod in models.items():
        def one(eps, mod=mod):
            tr = solve_direct(mod, eps, plan.source, plan.run_config(eps))
            return float(np.max(tr.sup))
        sups[name] = plan.map_eps(one)
    rows = []
    for i, eps in enumerate(plan.eps_list):
        for name in models:
            s = sups[name][i]
            rows.append({"model": name, "eps": eps, "sup_v": s, "sup_v_over_eps": s / eps,
                         "sup_v_over_eps2": s / eps**2})
    ver = amplification_verdicts(plan.eps_list, sups["wr"], sups.get("control"), plan.tol)
    units = {"model": "label", "eps": "1", "sup_v": "state", "sup_v_over_eps": "state",
             "sup_v_over_eps2": "state"}
    return _finish(Study("amplification", rows, ver, units, {"sup": sups}), plan, t0)


# ---------------------------------------------------------------------------
# convergence

def convergence_verdicts(err_lead, err_corr, tol: dict) -> dict[str, bool]:
    el, ec = np.asarray(err_lead, float), np.asarray(err_corr, float)
    rc = halving_ratios(ec)
    return {
        "leading_strictly_decreasing": bool(np.all(np.diff(el) < 0)),
        "corrected_strictly_decreasing": bool(np.all(np.diff(ec) < 0)),
        "corrected_halving_ratio": bool(np.all(rc <= tol["conv_ratio"])),
        "corrected_not_above_leading": bool(np.all(ec <= el)),
    }


def run_convergence_study(plan: ExperimentPlan, dt_amp: float = 0.0025) -> Study:
    """sup_x |u_eps - u_app| at the final time, u = v/eps, leading and corrected."""
    t0 = time.perf_counter()
    sol = solve_key_subsystem(plan.model, plan.source, T=plan.T, dt=dt_amp)
    # build the eps-independent trace once before the (possibly concurrent) eps sweep
    build_corrected_approx(sol, plan.eps_list[0])

    def one(eps):
        tr = solve_direct(plan.model, eps, plan.source, plan.run_config(eps))
        snap = tr.snapshots[-1]
        X1, X2 = snap.grid.mesh()
        ap = build_corrected_approx(sol, eps)
        u = snap.v / eps
        return (sup_norm(u - ap.leading(snap.t, X1, X2)), sup_norm(u - ap.corrected(snap.t, X1, X2)),
                sup_norm(u))

    res = plan.map_eps(one)
    el = [r[0] for r in res]
    ec = [r[1] for r in res]
    rows = []
    for i, eps in enumerate(plan.eps_list):
        rows.append({"eps": eps, "sup_u": res[i][2], "err_leading": el[i], "err_corrected": ec[i],
                     "ratio_leading": el[i] / el[i - 1] if i else float("nan"),
                     "ratio_corrected": ec[i] / ec[i - 1] if i else float("nan")})
    ver = convergence_verdicts(el, ec, plan.tol)
    extra = {"slope_leading": fitted_slope(plan.eps_list, el),
             "slope_corrected": fitted_slope(plan.eps_list, ec),
             "a1_max": build_corrected_approx(sol, plan.eps_list[-1]).parts.get("a1_max")}
    units = {"eps": "1", "sup_u": "state/eps", "err_leading": "state/eps", "err_corrected": "state/eps",
             "ratio_leading": "1", "ratio_corrected": "1"}
    return _finish(Study("convergence", rows, ver, units, extra), plan, t0)


# ---------------------------------------------------------------------------
# direct solver against the exact linear solution

def run_oracle_study(plan: ExperimentPlan | None = None, eps: float = 1 / 8, ladder=(48, 96)) -> Study:
    """Relative sup error of the direct solver at the final time; observed order."""
    t0 = time.perf_counter()
    if plan is None:
        plan = ExperimentPlan("oracle", eps_list=(eps,), ladder=tuple(ladder),
                              model=defaults.default_model(nonlinear=False),
                              source=defaults.default_source(2.0))
    eps = plan.eps_list[0]
    rows = []
    for ppw in plan.ladder:
        tr = solve_direct(plan.model, eps, plan.source, plan.run_config(eps, ppw))
        snap = tr.snapshots[-1]
        X1, X2 = snap.grid.mesh()
        ex = linear_oracle(plan.model, eps, plan.source, snap.t, X1, X2)
        rows.append({"eps": eps, "ppw": ppw, "sup_error": sup_norm(snap.v - ex),
                     "rel_sup_error": sup_norm(snap.v - ex) / sup_norm(ex)})
    for i in range(1, len(rows)):
        rows[i]["order"] = observed_order(rows[i - 1]["rel_sup_error"], rows[i]["rel_sup_error"],
                                          rows[i]["ppw"] / rows[i - 1]["ppw"])
    rows[0]["order"] = float("nan")
    ver = {"default_grid_error": rows[0]["rel_sup_error"] < plan.tol["oracle_error"],
           "order_under_refinement": bool(len(rows) > 1 and rows[1]["order"] >= plan.tol["oracle_order"])}
    units = {"eps": "1", "ppw": "points/wavelength", "sup_error": "state", "rel_sup_error": "1", "order": "1"}
    return _finish(Study("oracle", rows, ver, units), plan, t0)


# ---------------------------------------------------------------------------
# amplitude solver oracles

def _transport_closed_form(source: BoundarySource, consts, K: int, x1: np.ndarray, t: float,
                           n_quad: int = 4001) -> np.ndarray:
    """a_k(t, x1) = int_0^t g_k(s, x1 - w (t - s)) ds by composite Simpson quadrature."""
    w = consts.w[0]
    s = np.linspace(0.0, t, n_quad)
    wts = np.full(n_quad, 2.0)
    wts[1::2] = 4.0
    wts[[0, -1]] = 1.0
    wts *= (s[1] - s[0]) / 3
    out = np.zeros((K + 1, x1.size), complex)
    for k in source.modes:
        if k <= K:
            X = x1[None, :] - w * (t - s)[:, None]
            g = consts.forcing(source.mode(k, s[:, None] + 0 * X, X), k)
            out[k] = np.tensordot(wts, g, axes=(0, 0))
    return out


def run_amplitude_oracles(T: float = 1.0, dt: float = 0.01, K: int = 8, n_x1: int = 16) -> Study:
    """Linear transport order, exact vs grid memory agreement, theta0-mean."""
    t0 = time.perf_counter()
    tol = defaults.TOL
    lin = defaults.default_model(nonlinear=False)
    src_x = BoundarySource(2, {1: (["0", "0.5*chi(t)*(1 + sin(x1))"], ["0", "0.25*chi(t)*cos(2*x1)"])}, 2 * np.pi)
    errs = []
    for h in (dt, dt / 2):
        sol = solve_key_subsystem(lin, src_x, T=T, K=K, n_x1=n_x1, dt=h)
        exact = _transport_closed_form(src_x, sol.consts, K, sol.sys.x1, T)
        errs.append(sup_norm(sol.hist.levels[-1] - exact) / sup_norm(exact))
    order = observed_order(errs[0], errs[1])
    # memory: exact vs grid route on the nonlinear model
    nl = defaults.default_model()
    src = defaults.default_source(0.6)
    mem = []
    means = []
    for h in (dt / 2, dt / 4):
        se = solve_key_subsystem(nl, src, T=T, K=K, dt=h, mode="exact")
        sg = solve_key_subsystem(nl, src, T=T, K=K, dt=h, mode="grid")
        mem.append(rel_l2(sg.J[0][..., 0], se.J_exact(T)))
        means += [se.diagnostics["max_mean"], sg.diagnostics["max_mean"]]
    rows = [{"check": "transport_error_dt", "value": errs[0]},
            {"check": "transport_error_dt_half", "value": errs[1]},
            {"check": "transport_order", "value": order},
            {"check": "memory_rel_l2_default", "value": mem[0]},
            {"check": "memory_rel_l2_refined", "value": mem[1]},
            {"check": "max_theta0_mean", "value": max(means)}]
    ver = {"transport_order": order >= tol["amplitude_order"],
           "memory_agreement": mem[0] < tol["memory_agreement"],
           "memory_refinement": mem[0] >= tol["memory_refinement"] * mem[1],
           "theta0_mean": max(means) < tol["mean"]}
    return _finish(Study("amplitude_oracles", rows, ver, {"check": "label", "value": "1"}), None, t0)


# ---------------------------------------------------------------------------
# Nash-Moser

def induction_constant(trace, alpha: float = 1.0) -> float:
    """Smallest delta with |Vdot_n|_s <= delta theta_n^(s - alpha - 1) Delta_n for all n, s."""
    out = 0.0
    for th, d, norms in zip(trace.theta, trace.Delta, trace.increment_norms):
        for s, v in norms.items():
            out = max(out, v / (th ** (s - alpha - 1) * d))
    return out


def run_nash_moser_study(T: float = 0.5, dt: float = 0.005, amplitude: float = 1.0, theta0: float = 2.0,
                         n_max: int | None = None, with_picard: bool = False, model: HyperbolicModel | None = None,
                         source: BoundarySource | None = None, K: int = 8) -> Study:
    t0 = time.perf_counter()
    tol = defaults.TOL
    n_max = tol["nm_steps"] if n_max is None else n_max
    C = smoothing_constants()
    model = defaults.default_model() if model is None else model
    source = defaults.default_source(amplitude) if source is None else source
    sol = solve_key_subsystem(model, source, T=T, dt=dt, K=K)
    sub = DiscreteSubsystem(sol.sys, int(round(T / dt)))
    V, trace = nash_moser_solve(sub, theta0=theta0, tol=tol["nm_residual"], n_max=n_max)
    match = sup_norm(V - np.array(sol.hist.levels))
    rows = trace.rows()
    res = np.array(trace.residual)
    dec = bool(np.all(np.diff(res) < 0))
    ver = {"smoothing_a": float(C["a"].max()) <= tol["smoothing_constant"],
           "smoothing_b": float(C["b"].max()) <= tol["smoothing_constant"],
           "smoothing_c": float(C["c"].max()) <= tol["smoothing_constant"],
           "residual_decreasing": dec,
           "converged": bool(trace.converged and res[-1] < tol["nm_residual"] and len(res) <= tol["nm_steps"]),
           "matches_time_marching": match < tol["nm_match"],
           "bookkeeping": float(max(trace.bookkeeping)) < tol["nm_bookkeeping"],
           "theta_steps": bool(all(1 / (3 * th) <= d <= 1 / (2 * th)
                                   for th, d in zip(trace.theta, trace.Delta)))}
    extra = {"match": match, "induction_delta": induction_constant(trace), "smoothing": {k: float(v.max()) for k, v in C.items() if k != "thetas"},
             "trace": trace}
    if with_picard:
        extra["picard"] = picard_solve(sub)
    units = {k: "1" for k in (rows[0] if rows else {})}
    return _finish(Study("nashmoser", rows, ver, units, extra), None, t0)


# ---------------------------------------------------------------------------
# identity suite

def _corrupt(ms, scale: float = 1e-6):
    """Fault injection: perturb P_1 (test mode)."""
    P = ms.P.copy()
    P[0] = P[0] + scale * np.ones_like(P[0])
    from dataclasses import replace
    return replace(ms, P=P)


def run_identity_suite(seed: int = 0, n_series: int = 50, corrupt: bool = False) -> Study:
    """Max defects of the algebraic identities on random data."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    model = euler_model(*defaults.EULER_POINT)
    ms = mode_package(model)
    if corrupt:
        ms = _corrupt(ms)
    N, M = ms.N, ms.M
    I = np.eye(N)
    d = {}
    # spectral biorthogonality and projector algebra
    LR = np.vstack([ms.l[m] for m in range(M)]) @ np.hstack([ms.r[m] for m in range(M)])
    d["biorthogonality"] = sup_norm(LR - np.eye(LR.shape[0]))
    d["projectors"] = max(sup_norm(sum(ms.P) - I),
                          max(sup_norm(ms.P[m] @ ms.P[n] - (ms.P[m] if m == n else 0)) for m in range(M) for n in range(M)))
    d["partial_inverse"] = max(sup_norm(ms.L_phase(m) @ ms.R[m] - (I - ms.P[m])) for m in range(M))
    d["boundary_kernel"] = max(sup_norm(model.B @ ms.e), abs(float(ms.b @ model.B @ ms.vec(ms.incoming[0]))))
    # profile operators
    K = 8
    de = []
    for _ in range(n_series):
        s = TrigSeries.random(ms, K, 10, rng)
        E = project_E(s, ms)
        de.append(project_E(E, ms).max_diff(E))
        de.append(project_E(apply_cL(s, ms), ms).max_abs())
        F = TrigSeries.random(ms, K, 6, rng, single_phase=True)
        IE = F - project_E(F, ms)
        de.append(apply_cL(partial_inverse_R(F, ms), ms).max_diff(IE))
        de.append(partial_inverse_R(apply_cL(F, ms), ms).max_diff(IE))
    d["E_cL_R_identities"] = max(de)
    tri = find_resonances(ms, 12)[0]
    dq = []
    nq = 256
    th = 2 * np.pi * np.arange(nq) / nq
    ks = np.arange(-K, K + 1)
    Ep = np.exp(1j * np.outer(th, ks))                   # (nq, 2K+1)
    for _ in range(n_series):
        sp = rng.standard_normal(2 * K + 1) + 1j * rng.standard_normal(2 * K + 1)
        sr = rng.standard_normal(2 * K + 1) + 1j * rng.standard_normal(2 * K + 1)
        got = interaction_integral(sp, sr, tri, K_out=2 * K)
        # torus quadrature of sigma_p(theta_p) sigma_r(theta_r), nq nodes per circle
        C = np.fft.fft2(np.outer(Ep @ sp, Ep @ sr)) / nq**2
        ref = np.zeros(4 * K + 1, complex)
        for k in range(-2 * K, 2 * K + 1):
            if k and abs(k * tri.n_m) <= 2 * K:
                ref[k * tri.n_m + 2 * K] = C[(k * tri.n_p) % nq, (k * tri.n_r) % nq]
        dq.append(sup_norm(got - ref))
    d["interaction_quadrature"] = max(dq)
    # corrector
    dr = []
    for _ in range(n_series):
        F = TrigSeries.random(ms, 4, 8, rng)
        F = F - project_E(F, ms)
        try:
            dr.append(solve_fast_system(F, ms).residual)
        except ProfileError:
            dr.append(np.inf)
    d["fast_system_residual"] = max(dr)
    tol = {"biorthogonality": 1e-10, "projectors": 1e-10, "partial_inverse": 1e-10, "boundary_kernel": 1e-10,
           "E_cL_R_identities": 1e-11, "interaction_quadrature": 1e-11, "fast_system_residual": 1e-10}
    rows = [{"identity": k, "max_defect": v, "tolerance": tol[k], "passed": v < tol[k]} for k, v in d.items()]
    ver = {r["identity"]: bool(r["passed"]) for r in rows}
    units = {"identity": "label", "max_defect": "1", "tolerance": "1", "passed": "bool"}
    return _finish(Study("identities", rows, ver, units), None, t0)
