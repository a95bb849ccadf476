"""Command-line front end: ``oscamp <subcommand> [options]``."""
from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, defaults, harness
from .amplitude import solve_key_subsystem
from .corrector import build_corrected_approx
from .model import ConfigError, RunConfig, euler_model, load_config, save_config
from .spectral import SpectralError, euler_resonance, find_resonances, mode_package
from .solver import solve_direct

log = logging.getLogger("oscamp")


# ---------------------------------------------------------------------------
# helpers

def _setup(args):
    """(model, source, run) from --config, or the built-in demonstration problem."""
    if args.config:
        model, source, run = load_config(args.config)
    else:
        model, source, run = defaults.default_model(), defaults.default_source(), RunConfig()
    if args.seed is not None:
        run.seed = args.seed
    return model, source, run


def _out(args, default: str) -> Path:
    return Path(args.out if args.out else default)


def _complex_cols(prefix: str, vec) -> dict:
    vec = np.ravel(vec)
    out = {}
    for i, x in enumerate(vec):
        out[f"{prefix}{i + 1}"] = float(np.real(x))
        if np.iscomplexobj(vec) and abs(np.imag(x)) > 0:
            out[f"{prefix}{i + 1}_im"] = float(np.imag(x))
    return out


def _verdict(ok: bool, label: str) -> int:
    print(f"{label}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# subcommands

def cmd_spectral(args) -> int:
    model, _, _ = _setup(args)
    ms = mode_package(model)
    rows = []
    for m in range(ms.M):
        row = {"mode": m + 1, "omega": float(ms.omega[m]), "multiplicity": ms.mult[m],
               "class": ms.direction[m]}
        row.update(_complex_cols("v", ms.velocity[m]))
        row.update(_complex_cols("r", ms.vec(m)))
        row.update(_complex_cols("l", ms.lvec(m)))
        rows.append(row)
    ids = harness.run_identity_suite(seed=args.seed or 0, n_series=5)
    path = harness.write_csv(_out(args, "spectral.csv"), rows,
                             {"mode": "index", "omega": "1", "multiplicity": "count", "class": "label"})
    for r in rows:
        print("  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    print(f"kappa={ms.kappa:.10g}  e={np.round(ms.e, 12).tolist()}  b={np.round(ms.b, 12).tolist()}")
    for r in ids.rows[:4]:
        print(f"checksum {r['identity']}: {r['max_defect']:.3e}")
    print(f"wrote {path}")
    return 0


def cmd_resonances(args) -> int:
    model, _, _ = _setup(args)
    if args.mach is not None:
        c = model.params.get("c", 1.0)
        model = euler_model(model.params.get("v", 1.0), args.mach * c, c, model.params.get("eta", 1.0),
                            D=model.D, Psi=model.Psi)
    ms = mode_package(model)
    tri = find_resonances(ms, args.nmax)
    rows = [{"m": t.m + 1, "p": t.p + 1, "r": t.r + 1, "n_m": t.n_m, "n_p": t.n_p, "n_r": t.n_r} for t in tri]
    if model.params.get("family") == "euler":
        exact = euler_resonance(model.params["u"], model.params["c"])
        print(f"closed-form test: {exact if exact else 'irrational ratio, no resonance'}")
    for r in rows:
        print(f"({r['n_m']}, {r['n_p']}, {r['n_r']})  phases ({r['m']}, {r['p']}, {r['r']})")
    print(f"{len(rows)} primitive triple(s) with |n| <= {args.nmax}")
    if args.out:
        harness.write_csv(args.out, rows, {k: "index" for k in ("m", "p", "r", "n_m", "n_p", "n_r")})
    return 0


def _identity_table(args) -> int:
    st = harness.run_identity_suite(seed=args.seed or 0, corrupt=getattr(args, "corrupt", False))
    for r in st.rows:
        print(f"{r['identity']:<26s} {r['max_defect']:.3e}  < {r['tolerance']:.0e}  "
              f"{'pass' if r['passed'] else 'FAIL'}")
    if args.out:
        st.save(args.out)
    return _verdict(st.passed, "identities")


def cmd_profiles(args) -> int:
    if args.selftest:
        return _identity_table(args)
    model, source, run = _setup(args)
    T = args.T if args.T is not None else run.T
    out = _out(args, "prof")
    out.mkdir(parents=True, exist_ok=True)
    sol = solve_key_subsystem(model, source, T=T, K=run.K, n_x1=run.n_x1, dt=run.dt_amp,
                              mode=args.mode, keep_traces=args.mode == "grid")
    lv = sol.levels()
    every = max(1, len(lv) // 40)
    rows = []
    for n in range(0, len(lv), every):
        for k in range(1, lv.shape[1]):
            for i, x in enumerate(sol.sys.x1):
                rows.append({"t": n * sol.hist.dt, "x1": float(x), "k": k,
                             "re_a": float(lv[n, k, i].real), "im_a": float(lv[n, k, i].imag)})
    harness.write_csv(out / "amplitude.csv", rows, {"t": "time", "x1": "length", "k": "index"})
    if sol.J_traces:
        trows = []
        for n in range(0, len(sol.J_traces), every):
            J = sol.J_traces[n][0]
            for k in range(1, J.shape[0]):
                trows.append({"t": (n + 1) * sol.hist.dt, "k": k, "re_J": float(J[k, 0].real),
                              "im_J": float(J[k, 0].imag)})
        harness.write_csv(out / "memory_trace.csv", trows, {"t": "time", "k": "index"})
    c = sol.consts
    bundle = {"kappa": c.kappa, "w": c.w.tolist(), "f1": c.f1, "f2": c.f2, "mu": list(c.mu),
              "triples": [t.n for t in c.triples], "eps": [float(x) for x in np.nan_to_num(c.eps)]}
    diag = {"T": T, "dt": sol.hist.dt, "K": sol.hist.K, "n_x1": sol.hist.n_x1, "mode": args.mode,
            "max_theta0_mean": sol.diagnostics["max_mean"], "sup_bound": float(sol.diagnostics["sup_bound"][-1]),
            "equation_residual": sol.residual()}
    (out / "constants.json").write_text(json.dumps(bundle, indent=2))
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2))
    save_config(out / "problem.cfg", model, source, RunConfig(**{**run.__dict__, "T": T}))
    print(json.dumps(diag))
    print(f"wrote {out}")
    return 0


def _load_profile(prof: Path):
    model, source, run = load_config(prof / "problem.cfg")
    diag = json.loads((prof / "diagnostics.json").read_text())
    sol = solve_key_subsystem(model, source, T=diag["T"], K=diag["K"], n_x1=diag["n_x1"], dt=diag["dt"])
    return model, source, run, sol


def cmd_corrector(args) -> int:
    prof = Path(args.source_dir)
    model, source, run, sol = _load_profile(prof)
    eps = args.eps if args.eps is not None else run.eps
    ap = build_corrected_approx(sol, eps)
    out = _out(args, "approx")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for (k0, kd), U in sorted(ap.fast.coeffs.items()):
        row = {"k0": k0, "kd": kd}
        row.update(_complex_cols("U", np.asarray(U, complex) + 0j))
        rows.append(row)
    harness.write_csv(out / "fast_coefficients.csv", rows, {"k0": "index", "kd": "1"})
    t = sol.times[-1]
    x1 = np.linspace(0, source.L1, 65)[:-1]
    x2 = np.linspace(0, run.height(model), 129)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    lead, corr = ap.leading(t, X1, X2), ap.corrected(t, X1, X2)
    frows = []
    for i in range(0, len(x1), 4):
        for j in range(len(x2)):
            r = {"t": t, "x1": x1[i], "x2": x2[j]}
            r.update({f"u_app{n + 1}": lead[n, i, j] for n in range(lead.shape[0])})
            r.update({f"u_c{n + 1}": corr[n, i, j] for n in range(corr.shape[0])})
            frows.append(r)
    harness.write_csv(out / "fields.csv", frows, {"t": "time", "x1": "length", "x2": "length"})
    (out / "manifest.txt").write_text("\n".join([f"eps = {eps}", f"profile = {prof}"] + ap.manifest) + "\n")
    print(f"fast residual {ap.parts.get('fast_residual', 0.0):.3e}; wrote {out}")
    return 0


def cmd_simulate(args) -> int:
    model, source, run = _setup(args)
    eps = args.eps if args.eps is not None else run.eps
    run.eps = eps
    out = _out(args, f"run_{eps:g}")
    out.mkdir(parents=True, exist_ok=True)
    tr = solve_direct(model, eps, source, run)
    harness.write_csv(out / "norms.csv", [{"t": float(t), "sup_v": float(s)} for t, s in zip(tr.times, tr.sup)],
                      {"t": "time", "sup_v": "state"})
    snap = tr.snapshots[-1]
    g = snap.grid
    rows = []
    for j in range(0, g.n2, max(1, g.n2 // 64)):
        r = {"t": snap.t, "x2": float(g.x2[j])}
        r.update({f"v{n + 1}": float(snap.v[n, 0, j]) for n in range(snap.v.shape[0])})
        rows.append(r)
    harness.write_csv(out / "slice_x1_0.csv", rows, {"t": "time", "x2": "length"})
    np.savez_compressed(out / "final.npz", v=snap.v, t=snap.t, eps=eps, L1=g.L1, L2=g.L2)
    save_config(out / "problem.cfg", model, source, run)
    print(f"eps={eps:g}  sup|v|={float(np.max(tr.sup)):.6g}  steps={len(tr.times) - 1}; wrote {out}")
    return 0


def cmd_verify(args) -> int:
    runs = sorted({p for pat in args.runs for p in glob.glob(pat)})
    if not runs:
        print("no run directories matched", file=sys.stderr)
        return 2
    data = []
    for d in runs:
        z = np.load(Path(d) / "final.npz")
        data.append((float(z["eps"]), z["v"], float(z["t"]), float(z["L1"]), float(z["L2"])))
    data.sort(key=lambda x: -x[0])
    _, _, _, sol = _load_profile(Path(args.approx))
    rows = []
    for eps, v, t, L1, L2 in data:
        ap = build_corrected_approx(sol, eps)
        n1, n2 = v.shape[1:]
        X1, X2 = np.meshgrid(np.arange(n1) * L1 / n1, np.linspace(0, L2, n2), indexing="ij")
        u = v / eps
        rows.append({"eps": eps, "t": t, "err_leading": harness.sup_norm(u - ap.leading(t, X1, X2)),
                     "err_corrected": harness.sup_norm(u - ap.corrected(t, X1, X2))})
    el = [r["err_leading"] for r in rows]
    ec = [r["err_corrected"] for r in rows]
    ver = harness.convergence_verdicts(el, ec, defaults.TOL) if len(rows) > 1 else {}
    out = _out(args, "report.csv")
    harness.write_csv(out, rows, {"eps": "1", "t": "time", "err_leading": "state/eps",
                                  "err_corrected": "state/eps"})
    for r in rows:
        print(f"eps={r['eps']:<8g} leading={r['err_leading']:.4e}  corrected={r['err_corrected']:.4e}")
    for k, v in ver.items():
        print(f"  {k}: {'ok' if v else 'FAILED'}")
    return _verdict(all(ver.values()), "convergence")


def cmd_nashmoser(args) -> int:
    model, source, run = _setup(args)
    theta0 = args.theta0 if args.theta0 is not None else 2.0
    delta = args.delta if args.delta is not None else run.delta
    st = harness.run_nash_moser_study(T=args.T, dt=args.dt, theta0=theta0, model=model, source=source,
                                      with_picard=args.picard)
    out = _out(args, "nm")
    out.mkdir(parents=True, exist_ok=True)
    st.save(out)
    for r in st.rows:
        print(f"n={r['n']:2d} theta={r['theta']:.4f} residual={r['residual']:.3e} "
              f"bookkeeping={r['bookkeeping_defect']:.1e}")
    dmin = st.extra["induction_delta"]
    print(f"match with time marching {st.extra['match']:.3e}; smoothing constants {st.extra['smoothing']}")
    print(f"induction bound holds for delta >= {dmin:.3e} (configured {delta:g}: "
          f"{'holds' if dmin <= delta else 'does not hold'})")
    if args.picard:
        p = st.extra["picard"]
        print("picard residuals: " + " ".join(f"{x:.2e}" for x in p["residual"]))
    return _verdict(st.passed, "nash-moser")


def cmd_selftest(args) -> int:
    """Fast checks by default; --full runs every acceptance study."""
    out = Path(args.out) if args.out else None
    studies = [harness.run_identity_suite(seed=args.seed or 0), harness.run_amplitude_oracles(),
               harness.run_nash_moser_study()]
    if args.full:
        plan = lambda name, **kw: harness.ExperimentPlan(name, out_dir=out, threads=args.threads, **kw)
        studies += [harness.run_oracle_study(),
                    harness.run_amplification_study(plan("amplification", T=1.6)),
                    harness.run_convergence_study(plan("convergence"))]
    ok = True
    for st in studies:
        print(st.summary())
        ok = ok and st.passed
        if out is not None:
            st.save(out)
    return _verdict(ok, "selftest")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="problem configuration file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="concurrent eps points")
    ap = argparse.ArgumentParser(prog="oscamp", parents=[common],
                                 description="Weakly nonlinear geometric optics for WR boundary problems.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("spectral", parents=[common], help="mode table at the boundary frequency")
    p = sub.add_parser("resonances", parents=[common], help="primitive resonance triples")
    p.add_argument("--nmax", type=int, default=50)
    p.add_argument("--mach", type=float, default=None, help="override u = mach * c (Euler family)")
    p = sub.add_parser("profiles", parents=[common], help="march the amplitude equation")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--mode", choices=("exact", "grid"), default="exact")
    p.add_argument("--selftest", action="store_true", help="run the identity suite instead")
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p = sub.add_parser("corrector", parents=[common], help="corrected approximation from a profile run")
    p.add_argument("--from", dest="source_dir", required=True)
    p.add_argument("--eps", type=float, default=None)
    p = sub.add_parser("simulate", parents=[common], help="direct solve at one eps")
    p.add_argument("--eps", type=float, default=None)
    p = sub.add_parser("verify", parents=[common], help="compare direct runs with an approximation")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--approx", required=True, help="profile directory used for the approximation")
    p = sub.add_parser("nashmoser", parents=[common], help="Nash-Moser solve of the discretized subsystem")
    p.add_argument("--theta0", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--T", type=float, default=0.5)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--picard", action="store_true", help="also run the unsmoothed fixed point")
    p = sub.add_parser("selftest", parents=[common], help="identity suite and fast oracles")
    p.add_argument("--full", action="store_true", help="run all acceptance studies")
    return ap


COMMANDS = {"spectral": cmd_spectral, "resonances": cmd_resonances, "profiles": cmd_profiles,
            "corrector": cmd_corrector, "simulate": cmd_simulate, "verify": cmd_verify,
            "nashmoser": cmd_nashmoser, "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for k, v in (("config", None), ("out", None), ("seed", None), ("threads", 1)):
        if not hasattr(args, k):
            setattr(args, k, v)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SpectralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
