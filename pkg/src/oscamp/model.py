"""Problem datum: hyperbolic system, boundary operator, quadratic terms and sources.

The interior equation is

    dv/dt + sum_j B_j dv/dx_j + D0 v + D(v, v) = 0,       x_d > 0,

with boundary condition ``B v + Psi(v, v) = eps^2 G(t, x1, phi0/eps)`` on
``x_d = 0``.  Quadratic maps are stored as dense tensors: ``D(u, w)_i =
D[i, j, k] u_j w_k`` and likewise for ``Psi``.
"""
from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "HyperbolicModel",
    "BoundarySource",
    "RunConfig",
    "ValidationReport",
    "ConfigError",
    "euler_model",
    "validate",
    "load_config",
    "save_config",
    "parse_config",
    "compile_expression",
    "chi",
]


class ConfigError(ValueError):
    """Raised for malformed or incomplete configuration input."""


def _as_matrix(x, shape, name):
    a = np.array(x, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class HyperbolicModel:
    """Constant-coefficient semilinear hyperbolic boundary problem.

    ``B_list`` holds the spatial coefficients B_1..B_d, the time coefficient is
    the identity.  ``beta`` is the boundary frequency (tau, eta_1..eta_{d-1}).
    """

    B_list: tuple[np.ndarray, ...]
    B: np.ndarray
    beta: np.ndarray
    D: np.ndarray | None = None
    Psi: np.ndarray | None = None
    D0: np.ndarray | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        Bl = tuple(np.array(b, dtype=float) for b in self.B_list)
        if not Bl:
            raise ValueError("need at least one spatial coefficient")
        N = Bl[0].shape[0]
        for j, b in enumerate(Bl):
            _as_matrix(b, (N, N), f"B_{j + 1}")
        Bm = np.atleast_2d(np.array(self.B, dtype=float))
        if Bm.shape[1] != N:
            raise ValueError("boundary matrix has wrong column count")
        p = Bm.shape[0]
        beta = np.array(self.beta, dtype=float).ravel()
        if beta.shape != (len(Bl),):
            raise ValueError(f"beta must have {len(Bl)} components")
        D = np.zeros((N, N, N)) if self.D is None else _as_matrix(self.D, (N, N, N), "D")
        Psi = np.zeros((p, N, N)) if self.Psi is None else _as_matrix(self.Psi, (p, N, N), "Psi")
        D0 = np.zeros((N, N)) if self.D0 is None else _as_matrix(self.D0, (N, N), "D0")
        for name, val in (("B_list", Bl), ("B", Bm), ("beta", beta), ("D", D), ("Psi", Psi), ("D0", D0)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def d(self) -> int:
        return len(self.B_list)

    @property
    def N(self) -> int:
        return self.B_list[0].shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def Bd(self) -> np.ndarray:
        return self.B_list[-1]

    @property
    def A0(self) -> np.ndarray:
        """Normalized time coefficient inv(B_d)."""
        return np.linalg.inv(self.Bd)

    def A(self, j: int) -> np.ndarray:
        """Normalized coefficient inv(B_d) B_j for j = 1..d (A_d = I)."""
        return np.linalg.solve(self.Bd, self.B_list[j - 1])

    @property
    def is_linear(self) -> bool:
        return not (np.any(self.D) or np.any(self.Psi))

    def quad(self, u, w) -> np.ndarray:
        """Interior bilinear map D(u, w), vectorized over leading axes."""
        return np.einsum("ijk,...j,...k->...i", self.D, u, w)

    def quad_boundary(self, u, w) -> np.ndarray:
        return np.einsum("ijk,...j,...k->...i", self.Psi, u, w)

    def with_nonlinearity(self, D=None, Psi=None, D0=None) -> "HyperbolicModel":
        return HyperbolicModel(
            self.B_list, self.B, self.beta,
            D=self.D if D is None else D,
            Psi=self.Psi if Psi is None else Psi,
            D0=self.D0 if D0 is None else D0,
            params=self.params,
        )

    def with_boundary(self, B) -> "HyperbolicModel":
        B = np.atleast_2d(np.array(B, dtype=float))
        Psi = self.Psi if B.shape[0] == self.p else None
        return HyperbolicModel(self.B_list, B, self.beta, D=self.D, Psi=Psi, D0=self.D0, params=self.params)

    def linearized(self) -> "HyperbolicModel":
        return HyperbolicModel(self.B_list, self.B, self.beta, D0=self.D0, params=self.params)

    def same_as(self, other: "HyperbolicModel", tol: float = 0.0) -> bool:
        pairs = [(self.B, other.B), (self.beta, other.beta), (self.D, other.D),
                 (self.Psi, other.Psi), (self.D0, other.D0)]
        if self.d != other.d or self.N != other.N or self.p != other.p:
            return False
        pairs += list(zip(self.B_list, other.B_list))
        return all(np.allclose(a, b, rtol=0, atol=tol) for a, b in pairs)


def euler_model(v: float, u: float, c: float, eta: float, D=None, Psi=None) -> HyperbolicModel:
    """Linearized 2-D isentropic Euler system with subsonic incoming flow."""
    if not (v > 0 and eta > 0 and c > 0 and u > 0):
        raise ValueError("v, u, c, eta must be positive")
    if not u < c:
        raise ValueError(f"flow is not subsonic: u={u} >= c={c}")
    A1 = np.array([[0.0, -v, 0.0], [-c**2 / v, 0.0, 0.0], [0.0, 0.0, 0.0]])
    A2 = np.array([[u, 0.0, -v], [0.0, u, 0.0], [-c**2 / v, 0.0, u]])
    B = np.array([[0.0, v, 0.0], [u, 0.0, v]])
    return HyperbolicModel(
        (A1, A2), B, (c * eta, eta), D=D, Psi=Psi,
        params={"family": "euler", "v": v, "u": u, "c": c, "eta": eta},
    )


@dataclass
class ValidationReport:
    passed: bool
    checks: dict[str, tuple[bool, float]]
    reasons: list[str]

    def __str__(self) -> str:
        lines = [f"{'PASS' if ok else 'FAIL'}  {k}: {v:.3e}" for k, (ok, v) in self.checks.items()]
        return "\n".join(lines + [f"reason: {r}" for r in self.reasons])


def validate(model: HyperbolicModel, n_samples: int = 64, seed: int = 0,
             imag_tol: float = 1e-9, cond_max: float = 1e8) -> ValidationReport:
    """Check invertibility of B_d, the rank/p match, symmetry of D and hyperbolicity."""
    checks: dict[str, tuple[bool, float]] = {}
    reasons: list[str] = []
    Bd = model.Bd
    s = np.linalg.svd(Bd, compute_uv=False)
    inv_ok = bool(s[-1] > 1e-12 * max(s[0], 1.0))
    checks["B_d invertible (min singular value)"] = (inv_ok, float(s[-1]))
    if not inv_ok:
        reasons.append("B_d singular")
    ev = np.linalg.eigvals(Bd)
    npos = int(np.sum(ev.real > 1e-12))
    rank = int(np.linalg.matrix_rank(model.B))
    ok = rank == model.p == npos and 1 <= model.p <= model.N - 1
    checks["rank B == p == #positive eigenvalues of B_d"] = (ok, float(npos))
    if not ok:
        reasons.append(f"rank B={rank}, p={model.p}, positive eigenvalues of B_d={npos}")
    asym = float(np.max(np.abs(model.D - model.D.transpose(0, 2, 1)))) if model.N else 0.0
    checks["D symmetric"] = (asym <= 1e-14, asym)
    if asym > 1e-14:
        reasons.append("D not symmetric")
    rng = np.random.default_rng(seed)
    max_im, max_cond = 0.0, 1.0
    for _ in range(n_samples):
        xi = rng.standard_normal(model.d)
        xi /= np.linalg.norm(xi)
        M = sum(x * b for x, b in zip(xi, model.B_list))
        w, V = np.linalg.eig(M)
        max_im = max(max_im, float(np.max(np.abs(w.imag))))
        max_cond = max(max_cond, float(np.linalg.cond(V)))
    checks["max |Im eig(sum xi_j B_j)|"] = (max_im <= imag_tol, max_im)
    checks["max eigenvector-basis condition"] = (max_cond <= cond_max, max_cond)
    if max_im > imag_tol:
        reasons.append("complex characteristic speeds")
    if max_cond > cond_max:
        reasons.append("eigenvector basis degenerate")
    return ValidationReport(all(v[0] for v in checks.values()), checks, reasons)


# ---------------------------------------------------------------------------
# expression grammar for source modes

def chi(t, width: float = 0.6):
    """C^3 ramp: 0 for t <= 0, 1 for t >= width."""
    s = np.clip(np.asarray(t, dtype=float) / width, 0.0, 1.0)
    return s**4 * (35.0 - 84.0 * s + 70.0 * s**2 - 20.0 * s**3)


_FUNCS: dict[str, Callable] = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "chi": chi, "sqrt": np.sqrt}
_CONSTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


def compile_expression(text: str, variables: tuple[str, ...] = ("t", "x1")) -> Callable[..., np.ndarray]:
    """Compile an expression of the closed grammar into a vectorized function."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id not in variables and node.id not in _CONSTS:
                raise ConfigError(f"unknown symbol {node.id!r} in {text!r}")
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return check(node.operand)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"{node.func.id} takes exactly one argument")
            return check(node.args[0])
        raise ConfigError(f"unsupported construct in {text!r}")

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = ev(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        return _FUNCS[node.func.id](ev(node.args[0], env))

    def fn(*args):
        env = dict(zip(variables, (np.asarray(a, dtype=float) for a in args)))
        shape = np.broadcast(*env.values()).shape if env else ()
        return np.broadcast_to(ev(tree, env), shape).astype(float)

    fn.source = text.strip()
    fn.uses = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    return fn


def _split_top(text: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return [p.strip() for p in parts]


class BoundarySource:
    """Mean-zero oscillatory boundary source sum_k G_k(t, x1) exp(i k theta0).

    Only k > 0 is stored; ``G_{-k} = conj(G_k)``.  Each mode is given by real
    and imaginary component expressions (strings of the closed grammar) or by a
    callable returning a complex array of shape ``(..., p)``.
    """

    def __init__(self, p: int, modes: Mapping[int, object] | None = None, L1: float = 2 * math.pi,
                 x1_dependent: bool | None = None):
        self.p = p
        self.L1 = float(L1)
        self._exprs: dict[int, tuple[list[str], list[str]]] = {}
        self._funcs: dict[int, Callable] = {}
        uses_x1 = False
        for k, spec in (modes or {}).items():
            k = int(k)
            if k == 0:
                raise ValueError("source must have zero theta0-mean (k=0 given)")
            if k < 0:
                raise ValueError("give only k > 0; negative modes follow by conjugation")
            if callable(spec):
                self._funcs[k] = spec
                uses_x1 = True if x1_dependent is None else x1_dependent
            else:
                re, im = spec
                re = list(re) + ["0"] * (p - len(re))
                im = list(im) + ["0"] * (p - len(im))
                if len(re) != p or len(im) != p:
                    raise ConfigError(f"mode {k} needs {p} components")
                cre = [compile_expression(s) for s in re]
                cim = [compile_expression(s) for s in im]
                uses_x1 = uses_x1 or any("x1" in f.uses for f in cre + cim)
                self._exprs[k] = (re, im)

                def f(t, x1, cre=cre, cim=cim):
                    return np.stack([a(t, x1) + 1j * b(t, x1) for a, b in zip(cre, cim)], axis=-1)

                self._funcs[k] = f
        self.x1_dependent = uses_x1 if x1_dependent is None else bool(x1_dependent)

    @property
    def modes(self) -> list[int]:
        return sorted(self._funcs)

    @property
    def expressions(self) -> dict[int, tuple[list[str], list[str]]]:
        return dict(self._exprs)

    def mode(self, k: int, t, x1) -> np.ndarray:
        """G_k(t, x1) as complex array (..., p); zero for t < 0 and absent k."""
        t = np.asarray(t, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        shape = np.broadcast(t, x1).shape + (self.p,)
        if k == 0:
            return np.zeros(shape, complex)
        if k < 0:
            return np.conj(self.mode(-k, t, x1))
        if k not in self._funcs:
            return np.zeros(shape, complex)
        val = np.broadcast_to(np.asarray(self._funcs[k](t, x1), dtype=complex), shape).copy()
        val[t < 0] = 0.0
        return val

    def evaluate(self, t, x1, theta0) -> np.ndarray:
        """Real source value G(t, x1, theta0), shape (..., p)."""
        theta0 = np.asarray(theta0, dtype=float)
        out = 0.0
        for k in self.modes:
            out = out + 2.0 * np.real(self.mode(k, t, x1) * np.exp(1j * k * theta0)[..., None])
        shape = np.broadcast(np.asarray(t), np.asarray(x1), theta0).shape + (self.p,)
        return np.broadcast_to(out, shape).astype(float)

    def scaled(self, s: float) -> "BoundarySource":
        funcs = {k: (lambda t, x1, f=f: s * f(t, x1)) for k, f in self._funcs.items()}
        return BoundarySource(self.p, funcs, self.L1, x1_dependent=self.x1_dependent)

    @classmethod
    def single_mode(cls, g, k: int = 1, L1: float = 2 * math.pi, ramp: bool = True) -> "BoundarySource":
        """Source chi(t) g exp(i k theta0) + c.c. with a constant vector g."""
        g = np.asarray(g, dtype=complex)
        env = "chi(t)*" if ramp else ""
        re = [f"{env}{float(x.real)!r}" if x.real else "0" for x in g]
        im = [f"{env}{float(x.imag)!r}" if x.imag else "0" for x in g]
        return cls(len(g), {k: (re, im)}, L1, x1_dependent=False)


@dataclass
class RunConfig:
    eps: float = 0.125
    n_x1: int = 16          # amplitude / profile grid in x1
    K: int = 8              # theta0 modes retained in the amplitude solver
    ppw: int = 48           # points per wavelength in the direct solver
    cfl: float = 0.4
    T: float = 0.8
    L2: float | None = None
    dt_amp: float = 0.0025
    theta0: float = 8.0
    delta: float = 1e-3
    tol: float = 1e-10
    out: str = "out"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ConfigError("eps must lie in (0, 1]")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if self.T <= 0:
            raise ConfigError("T must be positive")

    def height(self, model: HyperbolicModel) -> float:
        """Domain height; default 1.1 times the fastest normal speed times T."""
        if self.L2 is not None:
            return self.L2
        speed = float(np.max(np.abs(np.linalg.eigvals(model.Bd).real)))
        return 1.1 * speed * self.T


_RUN_KEYS = {f for f in RunConfig.__dataclass_fields__}


def _num(text: str) -> float:
    return float(compile_expression(text, ())())


def _nums(text: str) -> np.ndarray:
    return np.array([_num(s) for s in _split_top(text) if s])


def parse_config(text: str, source_name: str = "<config>"):
    """Parse configuration text into (model, source, run)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source_name)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"{source_name}: parse error at line {line}: {exc.message.splitlines()[0]}") from None
    allowed = {"system", "boundary", "source", "run"}
    for sec in cp.sections():
        if sec not in allowed:
            raise ConfigError(f"unknown section [{sec}]")
    if "system" not in cp:
        raise ConfigError("missing section [system]")
    sysd = dict(cp["system"])
    bnd = dict(cp["boundary"]) if "boundary" in cp else {}
    family = sysd.pop("family", "euler")

    def need(d, key, sec):
        if key not in d:
            raise ConfigError(f"missing key {key!r} in [{sec}]")
        return d.pop(key)

    if family == "euler":
        vals = {k: _num(need(sysd, k, "system")) for k in ("v", "u", "c", "eta")}
        model = euler_model(**vals)
        N, p = 3, 2
        D = _nums(sysd.pop("D")).reshape(N, N, N) if "D" in sysd else None
        Psi = _nums(bnd.pop("Psi")).reshape(p, N, N) if "Psi" in bnd else None
        if "B" in bnd:
            model = model.with_boundary(_nums(bnd.pop("B")).reshape(p, N))
        model = model.with_nonlinearity(D=D, Psi=Psi)
    elif family == "general":
        dim = int(_num(need(sysd, "dim", "system")))
        N = int(_num(need(sysd, "N", "system")))
        Bl = [_nums(need(sysd, f"B{j}", "system")).reshape(N, N) for j in range(1, dim + 1)]
        Bm = _nums(need(bnd, "B", "boundary"))
        p = Bm.size // N
        beta = _nums(need(bnd, "beta", "boundary"))
        D = _nums(sysd.pop("D")).reshape(N, N, N) if "D" in sysd else None
        D0 = _nums(sysd.pop("D0")).reshape(N, N) if "D0" in sysd else None
        Psi = _nums(bnd.pop("Psi")).reshape(p, N, N) if "Psi" in bnd else None
        model = HyperbolicModel(tuple(Bl), Bm.reshape(p, N), beta, D=D, Psi=Psi, D0=D0,
                                params={"family": "general"})
    else:
        raise ConfigError(f"unknown family {family!r}")
    for d, sec in ((sysd, "system"), (bnd, "boundary")):
        if d:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(d))}")

    src = dict(cp["source"]) if "source" in cp else {}
    L1 = _num(src.pop("L1")) if "L1" in src else 2 * math.pi / model.beta[-1]
    modes: dict[int, tuple[list[str], list[str]]] = {}
    for key in list(src):
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "G" or parts[2] not in ("re", "im"):
            raise ConfigError(f"unknown key {key!r} in [source]")
        try:
            k = int(parts[1])
        except ValueError:
            raise ConfigError(f"bad mode index in {key!r}") from None
        re, im = modes.get(k, ([], []))
        (re if parts[2] == "re" else im).extend(_split_top(src.pop(key)))
        modes[k] = (re, im)
    source = BoundarySource(model.p, modes, L1)

    runkw = {}
    if "run" in cp:
        for key, val in cp["run"].items():
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown key {key!r} in [run]")
            typ = RunConfig.__dataclass_fields__[key].type
            if key in ("out",):
                runkw[key] = val.strip()
            elif "int" in str(typ):
                runkw[key] = int(_num(val))
            else:
                runkw[key] = _num(val)
    run = RunConfig(**runkw)
    if model.params.get("family") == "euler":
        u, c = model.params["u"], model.params["c"]
        if run.height(model) <= (u + c) * run.T:
            raise ConfigError("L2 must exceed (u+c)*T so no wave reaches the top boundary")
    rep = validate(model)
    if not rep.passed:
        raise ConfigError("model failed validation: " + "; ".join(rep.reasons))
    return model, source, run


def load_config(path) -> tuple[HyperbolicModel, BoundarySource, RunConfig]:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def _fmt(a) -> str:
    return ", ".join(repr(float(x)) for x in np.ravel(a))


def save_config(path, model: HyperbolicModel, source: BoundarySource, run: RunConfig) -> None:
    lines = ["[system]"]
    P = model.params
    euler = P.get("family") == "euler"
    if euler:
        lines += ["family = euler"] + [f"{k} = {P[k]!r}" for k in ("v", "u", "c", "eta")]
    else:
        lines += ["family = general", f"dim = {model.d}", f"N = {model.N}"]
        lines += [f"B{j + 1} = {_fmt(b)}" for j, b in enumerate(model.B_list)]
        if np.any(model.D0):
            lines.append(f"D0 = {_fmt(model.D0)}")
    if np.any(model.D):
        lines.append(f"D = {_fmt(model.D)}")
    lines.append("[boundary]")
    if not euler or not np.array_equal(model.B, euler_model(P["v"], P["u"], P["c"], P["eta"]).B):
        lines.append(f"B = {_fmt(model.B)}")
    if not euler:
        lines.append(f"beta = {_fmt(model.beta)}")
    if np.any(model.Psi):
        lines.append(f"Psi = {_fmt(model.Psi)}")
    if set(source.modes) != set(source.expressions):
        raise ConfigError("source modes given as callables cannot be written to a config file")
    lines += ["[source]", f"L1 = {source.L1!r}"]
    for k, (re, im) in sorted(source.expressions.items()):
        lines.append(f"G.{k}.re = {', '.join(re)}")
        lines.append(f"G.{k}.im = {', '.join(im)}")
    lines.append("[run]")
    for key in RunConfig.__dataclass_fields__:
        val = getattr(run, key)
        if val is not None:
            lines.append(f"{key} = {val}")
    Path(path).write_text("\n".join(lines) + "\n")
