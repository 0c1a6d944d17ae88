"""Command line front end: TOML config in, CSV tables, snapshot files, a gnuplot script and
a key=value manifest out.

    freefront <subcommand> --config run.toml --out results/
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import logging
import math
import random
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w
from scipy.interpolate import CubicSpline

from . import __version__, classify, eigen, fbsolver, steady
from .errors import ContractError, DomainError, ExpressionError, InconclusiveError, SolverError
from .fbsolver import FrontState, InitialData, Numerics, ProblemSpec, build_approximants, make_initial
from .model import Coefficient, MediumModel, parse_coefficient, serialize_coefficient

log = logging.getLogger("freefront")

SUBCOMMANDS = (
    "solve", "eigen", "rstar", "lambda-inf", "steady", "classify",
    "mu-star", "speed", "semiwave", "approx-check", "sweep",
)
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_UNDECIDED = 0, 2, 3, 4

DEFAULTS = {
    "medium": {"a": "1.0", "b": "1.0", "omega": 1.0, "L": 1.0},
    "problem": {"d": 1.0, "mu": 1.0, "mode": "two_front", "g0": -1.0, "h0": 1.0, "u0": "cosine_bump", "u0_params": {}},
    "numerics": {"N": 256, "dt": 1e-3, "T": 10.0, "output_times": 51, "grid": 200, "tol": 1e-10, "bc_far": "neumann_zero"},
}
OPTIONAL = {"numerics": {"truncation"}}


class ConfigError(ContractError):
    """Invalid configuration; ``path`` names the offending field (``section.key``)."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------- config
def _num(sec, key, value, *, positive=False, integer=False, minimum=None):
    path = f"{sec}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value!r}")
    return value


def _coef(sec, key, value):
    path = f"{sec}.{key}"
    if isinstance(value, bool):
        raise ConfigError(path, "expected a coefficient expression")
    if isinstance(value, (int, float)):
        return serialize_coefficient(Coefficient(float(value)))
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a coefficient expression, got {value!r}")
    try:
        return serialize_coefficient(parse_coefficient(value))
    except ExpressionError as exc:
        raise ConfigError(path, str(exc)) from None


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_sorted(v) for v in obj]
    return obj


def normalize(cfg: dict) -> dict:
    """Validated config with defaults filled in and canonical values (idempotent)."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a table")
    for sec in cfg:
        if sec not in DEFAULTS and sec != "experiment":
            raise ConfigError(sec, "unknown section")
    out = {}
    for sec, defaults in DEFAULTS.items():
        given = cfg.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(sec, "must be a table")
        for key in given:
            if key not in defaults and key not in OPTIONAL.get(sec, ()):
                raise ConfigError(f"{sec}.{key}", "unknown field")
        out[sec] = {**defaults, **given}

    med = out["medium"]
    med["a"] = _coef("medium", "a", med["a"])
    med["b"] = _coef("medium", "b", med["b"])
    med["omega"] = _num("medium", "omega", med["omega"], positive=True)
    med["L"] = _num("medium", "L", med["L"], positive=True)

    pb = out["problem"]
    pb["d"] = _num("problem", "d", pb["d"], positive=True)
    pb["mu"] = _num("problem", "mu", pb["mu"], positive=True)
    pb["g0"] = _num("problem", "g0", pb["g0"])
    pb["h0"] = _num("problem", "h0", pb["h0"])
    if not pb["g0"] < pb["h0"]:
        raise ConfigError("problem.h0", "must exceed problem.g0")
    if pb["mode"] not in fbsolver.MODES:
        raise ConfigError("problem.mode", f"unknown mode {pb['mode']!r}; choose from {list(fbsolver.MODES)}")
    if pb["u0"] not in fbsolver.PRESETS:
        raise ConfigError("problem.u0", f"unknown preset {pb['u0']!r}; choose from {sorted(fbsolver.PRESETS)}")
    params = pb["u0_params"]
    if not isinstance(params, dict):
        raise ConfigError("problem.u0_params", "must be a table")
    pb["u0_params"] = {k: (v if isinstance(v, bool) else _num("problem.u0_params", k, v)) for k, v in params.items()}

    nm = out["numerics"]
    nm["N"] = _num("numerics", "N", nm["N"], integer=True, minimum=16)
    nm["dt"] = _num("numerics", "dt", nm["dt"], positive=True)
    nm["T"] = _num("numerics", "T", nm["T"], positive=True)
    nm["grid"] = _num("numerics", "grid", nm["grid"], integer=True, minimum=32)
    nm["tol"] = _num("numerics", "tol", nm["tol"], positive=True)
    if nm["bc_far"] not in fbsolver.BC_FAR:
        raise ConfigError("numerics.bc_far", f"unknown far-wall condition {nm['bc_far']!r}")
    ot = nm["output_times"]
    if isinstance(ot, list):
        vals = [_num("numerics", "output_times", v) for v in ot]
        if any(v < 0 or v > nm["T"] for v in vals) or vals != sorted(vals):
            raise ConfigError("numerics.output_times", "times must be sorted and lie in [0, T]")
        nm["output_times"] = vals
    else:
        nm["output_times"] = _num("numerics", "output_times", ot, integer=True, minimum=2)
    if "truncation" in nm:
        nm["truncation"] = _num("numerics", "truncation", nm["truncation"])
    if pb["mode"].startswith("half_line") and "truncation" not in nm:
        raise ConfigError("numerics.truncation", "required for half-line modes")

    exp = cfg.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "must be a table")
    out["experiment"] = dict(exp)
    # build the objects once so preset parameters are checked here, not mid-run
    build_spec(out)
    return _sorted(out)


def parse_config(text: str) -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<toml>", str(exc)) from None


def serialize_config(cfg: dict) -> str:
    return tomli_w.dumps(_sorted(cfg))


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(serialize_config(normalize(cfg)).encode()).hexdigest()


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return normalize(parse_config(text))


def build_model(cfg) -> MediumModel:
    med = cfg["medium"]
    return MediumModel.logistic(med["a"], med["b"], med["omega"], med["L"])


def _output_times(nm):
    ot = nm["output_times"]
    return np.asarray(ot, dtype=float) if isinstance(ot, list) else np.linspace(0.0, nm["T"], ot)


def build_spec(cfg) -> ProblemSpec:
    pb, nm = cfg["problem"], cfg["numerics"]
    params = dict(pb["u0_params"])
    if pb["mode"] == "half_line_right_front" and pb["u0"] == "plateau":
        params.setdefault("left_open", True)
    if pb["mode"] == "half_line_left_front" and pb["u0"] == "plateau":
        params.setdefault("right_open", True)
    try:
        init = make_initial(pb["u0"], pb["g0"], pb["h0"], **params)
    except ContractError as exc:
        raise ConfigError("problem.u0_params", str(exc)) from None
    numerics = Numerics(nm["N"], nm["dt"], nm.get("truncation"), nm["bc_far"])
    try:
        return ProblemSpec(build_model(cfg), pb["d"], pb["mu"], init, pb["mode"], numerics)
    except (ContractError, DomainError) as exc:
        raise ConfigError("problem", str(exc)) from None


def _exp(cfg, key, default=None, kind="number", **kw):
    exp = cfg["experiment"]
    if key not in exp:
        if default is None and kind != "optional":
            raise ConfigError(f"experiment.{key}", "required for this subcommand")
        return default
    v = exp[key]
    if kind in ("number", "optional"):
        return _num("experiment", key, v, **kw)
    if kind == "list":
        vals = v if isinstance(v, list) else [v]
        if not vals:
            raise ConfigError(f"experiment.{key}", "must not be empty")
        return [_num("experiment", key, x, **kw) for x in vals]
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"experiment.{key}", f"expected a string, got {v!r}")
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(f"experiment.{key}", f"expected true/false, got {v!r}")
        return v
    raise AssertionError(kind)


# ---------------------------------------------------------------- outputs
def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def plot_script(csv_name, columns, title):
    """gnuplot script plotting every column against the first."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{columns[0]}'",
        "plot " + ", \\\n     ".join(f"'{csv_name}' using 1:{i + 1} with lines" for i in range(1, len(columns))),
    ]
    return "\n".join(lines) + "\n"


@dataclass
class RunRecord:
    subcommand: str
    config_digest: str = ""
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    version: str = __version__
    exit_code: int = EXIT_OK
    error: str = ""

    def manifest(self) -> str:
        lines = [
            f"subcommand={self.subcommand}",
            f"config_digest={self.config_digest}",
            f"version={self.version}",
            f"exit_code={self.exit_code}",
            f"error={self.error}",
        ]
        lines += [f"result.{k}={_fmt(v)}" for k, v in self.results.items()]
        lines += [f"timing.{k}={v:.6f}" for k, v in self.timings.items()]
        lines += [f"artifact.{i}={a}" for i, a in enumerate(self.artifacts)]
        return "\n".join(lines) + "\n"


class _Out:
    def __init__(self, out_dir: Path, record: RunRecord):
        self.dir, self.record = out_dir, record

    def csv(self, name, header, rows):
        write_csv(self.dir / name, header, rows)
        self.record.artifacts.append(name)
        return name

    def text(self, name, content):
        (self.dir / name).write_text(content)
        self.record.artifacts.append(name)
        return name

    def snapshot(self, name, state):
        fbsolver.write_snapshot(self.dir / name, state)
        self.record.artifacts.append(name)

    def plot(self, csv_name, columns, title):
        self.text(Path(csv_name).stem + ".gp", plot_script(csv_name, columns, title))


# ---------------------------------------------------------------- approximation check
@dataclass
class ApproxReport:
    labels: list
    status: list
    violations: list  # against the next entry
    sup_diff: list  # against the next entry
    holder: list
    fronts_nested: list  # against the next entry

    HEADER = ("level", "status", "violations_vs_next", "sup_diff_vs_next", "holder", "fronts_nested_vs_next")

    def rows(self):
        return zip(self.labels, self.status, self.violations, self.sup_diff, self.holder, self.fronts_nested)

    @property
    def ok(self):
        done = [s == "ok" for s in self.status]
        return all(done) and sum(v for v in self.violations if v is not None) == 0 and all(
            f for f in self.fronts_nested if f is not None
        )


def _eval_frame(state: FrontState, x, init: InitialData | None = None):
    """u at points ``x`` (zero outside the support). At t = 0 the exact initial data is used."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x >= state.g) & (x <= state.h)
    if init is not None and state.t == 0.0:
        out[inside] = init.u0(x[inside])
    else:
        out[inside] = CubicSpline(state.x, state.w)(x[inside])
    return np.maximum(out, 0.0)


def approx_check(spec: ProblemSpec, levels, T: float, output_times=None, tol: float = 1e-10) -> ApproxReport:
    """Solve for the approximants u0n at each level and for u0 itself, then compare.

    For each consecutive pair (level, next level or raw) it counts points where the
    lower solution exceeds the upper by more than ``tol``, records the sup-difference
    on the union of both node sets, and checks that the fronts are nested.
    Continuation between frames uses cubic splines; the t = 0 comparison uses the
    exact initial functions.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ContractError("levels must be increasing with at least 2 entries")
    if output_times is None:
        output_times = np.linspace(0.0, T, 51)
    inits = [build_approximants(spec.init, n) for n in levels] + [spec.init]
    labels = [str(n) for n in levels] + ["raw"]
    trajs, status = [], []
    for init in inits:
        try:
            trajs.append(fbsolver.solve(ProblemSpec(spec.model, spec.d, spec.mu, init, spec.mode, spec.numerics), T, output_times))
            status.append("ok")
        except SolverError as exc:
            trajs.append(None)
            status.append(f"failed: {exc}")
    viol, sup, nested = [], [], []
    for i in range(len(inits) - 1):
        A, B = trajs[i], trajs[i + 1]
        if A is None or B is None:
            viol.append(None), sup.append(None), nested.append(None)
            continue
        count, worst = 0, 0.0
        for sa, sb in zip(A.frames, B.frames):
            count += int(np.sum(sa.w - _eval_frame(sb, sa.x, inits[i + 1]) > tol))
            xs = np.union1d(sa.x, sb.x)
            worst = max(worst, float(np.max(np.abs(_eval_frame(sb, xs, inits[i + 1]) - _eval_frame(sa, xs, inits[i])))))
        viol.append(count)
        sup.append(worst)
        nested.append(bool(np.all(A.h <= B.h + 1e-12) and np.all(A.g >= B.g - 1e-12)))
    viol.append(None), sup.append(None), nested.append(None)
    holder = [t.holder if t is not None else None for t in trajs]
    return ApproxReport(labels, status, viol, sup, holder, nested)


# ---------------------------------------------------------------- subcommands
def _solve(cfg, out, rec, threads):
    spec = build_spec(cfg)
    nm = cfg["numerics"]
    if spec.mode.startswith("half_line"):
        traj = fbsolver.solve_halfline(spec, nm["T"], _output_times(nm))
    else:
        traj = fbsolver.solve(spec, nm["T"], _output_times(nm))
    name = out.csv("trajectory.csv", fbsolver.Trajectory.CSV_HEADER.split(","), traj.rows())
    out.snapshot("final_snapshot.txt", traj.frames[-1])
    out.plot(name, fbsolver.Trajectory.CSV_HEADER.split(","), "fronts and norms")
    rec.results.update(h_final=traj.h[-1], g_final=traj.g[-1], clip_count=traj.clip_count, holder=traj.holder)
    return EXIT_OK


def _eigen(cfg, out, rec, threads):
    model, d, grid, tol = build_model(cfg), cfg["problem"]["d"], cfg["numerics"]["grid"], cfg["numerics"]["tol"]
    ys = _exp(cfg, "y", [0.0], "list")
    Rs = _exp(cfg, "R", [1.0], "list", positive=True)
    rows = []
    for y in ys:
        for R in Rs:
            r = eigen.monodromy_eigen(model, d, y, R, eigen.effective_grid(model, R, grid), tol)
            rows.append((y, R, r.lam, r.rho, r.iters, r.residual))
    header = ["y", "R", "lambda", "rho", "iters", "residual"]
    out.csv("eigen.csv", header, rows)
    return EXIT_OK


def _rstar(cfg, out, rec, threads):
    model, d = build_model(cfg), cfg["problem"]["d"]
    ys = _exp(cfg, "y", [0.0], "list")
    tol = _exp(cfg, "tol", 1e-6, positive=True)
    radii = eigen.rstar_sweep(model, d, ys, tol, grid=min(cfg["numerics"]["grid"], 128), workers=threads)
    name = out.csv("rstar.csv", ["y", "Rstar"], zip(ys, radii))
    out.plot(name, ["y", "Rstar"], "critical radius")
    rec.results["rstar_max"] = max(radii)
    return EXIT_OK


def _lambda_inf(cfg, out, rec, threads):
    model, d = build_model(cfg), cfg["problem"]["d"]
    li = eigen.lambda_infinity(model, d, _exp(cfg, "tol", 1e-3, positive=True))
    out.csv("lambda_inf.csv", ["R", "lambda"], li.history)
    rec.results.update(lambda_inf=li.value, R_final=li.R)
    return EXIT_OK


def _steady(cfg, out, rec, threads):
    model, d = build_model(cfg), cfg["problem"]["d"]
    kind = _exp(cfg, "kind", "cell", "str")
    tol = _exp(cfg, "tol", 1e-8, positive=True)
    n_frames = _exp(cfg, "frames", 9, integer=True, minimum=1)
    if kind == "cell":
        st = steady.periodic_state_cell(model, d, tol=tol)
        tag = "cell"
    elif kind == "dirichlet":
        y = _exp(cfg, "y", 0.0)
        R = _exp(cfg, "R", None, positive=True)
        st = steady.periodic_state_dirichlet(model, d, y, R, grid=cfg["numerics"]["grid"], tol=tol)
        tag = f"dirichlet(y={_fmt(y)};R={_fmt(R)})"
    elif kind == "half_line":
        X_L = _exp(cfg, "X_L", None)
        st = steady.periodic_state_halfline(model, d, X_L, tol=tol)
        tag = f"half_line(X_L={_fmt(X_L)})"
    else:
        raise ConfigError("experiment.kind", f"unknown steady kind {kind!r}; choose cell, dirichlet or half_line")
    picks = np.unique(np.linspace(0, len(st.t) - 1, n_frames).round().astype(int))
    for i, k in enumerate(picks):
        out.snapshot(f"frame_{i:03d}.txt", FrontState(float(st.t[k]), float(st.x[0]), float(st.x[-1]), st.frames[k]))
    out.csv("steady.csv", ["tag", "sup", "inf_interior", "residual", "periods_used"], [(tag, st.sup, st.inf_interior, st.residual, st.periods_used)])
    return EXIT_OK


def _classify_kw(cfg):
    kw = dict(eps_v=_exp(cfg, "eps_v", 1e-4, positive=True), margin=_exp(cfg, "margin", 0.5, minimum=0.0))
    rb = _exp(cfg, "rbar", None, "optional", positive=True)
    if rb is not None:
        kw["rbar"] = rb
    return kw


def _classify(cfg, out, rec, threads):
    spec = build_spec(cfg)
    T_max = _exp(cfg, "T_max", cfg["numerics"]["T"], positive=True)
    v = classify.classify(spec, T_max, **_classify_kw(cfg))
    out.csv("verdict.csv", ["kind", "trigger_time", "front_length", "umax"], [(v.kind, v.trigger_time, v.front_length, v.umax_at_decision)])
    v.evidence_csv(out.dir / "evidence.csv")
    out.record.artifacts.append("evidence.csv")
    out.plot("evidence.csv", v.EVIDENCE_HEADER.split(","), "classification evidence")
    rec.results.update(kind=v.kind, rbar=v.rbar, reason=v.reason)
    return EXIT_UNDECIDED if v.kind == classify.UNDECIDED else EXIT_OK


def _mu_star(cfg, out, rec, threads):
    spec = build_spec(cfg)
    bracket = _exp(cfg, "bracket", [0.01, 10.0], "list", positive=True)
    if len(bracket) != 2:
        raise ConfigError("experiment.bracket", "expected [mu_lo, mu_hi]")
    T_max = _exp(cfg, "T_max", cfg["numerics"]["T"], positive=True)
    ms = classify.mu_star(spec, tuple(bracket), _exp(cfg, "tol", 0.05, positive=True), T_max, **_classify_kw(cfg))
    ms.history_csv(out.dir / "mu_star_history.csv")
    out.record.artifacts.append("mu_star_history.csv")
    rec.results.update(mu_star=ms.value, mu_lo=ms.lo, mu_hi=ms.hi)
    return EXIT_OK


def _speed(cfg, out, rec, threads):
    spec = build_spec(cfg)
    kw = {}
    rb = _exp(cfg, "rbar", None, "optional", positive=True)
    if rb is not None:
        kw["rbar"] = rb
    s = classify.spreading_speed(spec, cfg["numerics"]["T"], _exp(cfg, "window_fraction", 0.5, positive=True), **kw)
    out.csv("speed.csv", ["c_left", "c_right", "fit_residual"], [(s.c_left, s.c_right, s.fit_residual)])
    return EXIT_OK


def _semiwave(cfg, out, rec, threads):
    model = build_model(cfg)
    if model.depends_on_t or model.depends_on_x or model.b.depends_on_t or model.b.depends_on_x:
        raise ConfigError("medium", "semiwave needs constant coefficients a and b")
    pb = cfg["problem"]
    w = classify.semiwave(model.a.constant, model.b.constant, pb["d"], pb["mu"], _exp(cfg, "tol", 1e-8, positive=True))
    out.csv("semiwave.csv", ["c", "q_slope_origin"], [(w.c, w.q_slope)])
    return EXIT_OK


def _approx_check(cfg, out, rec, threads):
    spec = build_spec(cfg)
    levels = _exp(cfg, "levels", [2, 4, 8], "list", integer=True, minimum=1)
    nm = cfg["numerics"]
    rep = approx_check(spec, levels, nm["T"], _output_times(nm))
    out.csv("approx_check.csv", list(ApproxReport.HEADER), rep.rows())
    rec.results["ok"] = str(rep.ok).lower()
    return EXIT_OK if all(s == "ok" for s in rep.status) else EXIT_NUMERICAL


def _sweep_point(args):
    cfg, mu, T_max, kw = args
    spec = build_spec(cfg).with_mu(mu)
    try:
        v = classify.classify(spec, T_max, **kw)
    except SolverError as exc:
        return mu, None, str(exc)
    return mu, v, ""


def _sweep(cfg, out, rec, threads):
    mus = _exp(cfg, "mu_values", None, "list", positive=True)
    T_max = _exp(cfg, "T_max", cfg["numerics"]["T"], positive=True)
    kw = _classify_kw(cfg)
    if "rbar" not in kw:
        kw["rbar"] = eigen.rbar(build_model(cfg), cfg["problem"]["d"], workers=threads).value
    jobs = [(cfg, mu, T_max, kw) for mu in mus]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    rows = []
    code = EXIT_OK
    for i, (mu, v, err) in enumerate(results):
        if v is None:
            rows.append((i, mu, "Error", None, None, None))
            code = EXIT_NUMERICAL
            continue
        name = f"evidence_{i:03d}.csv"
        v.evidence_csv(out.dir / name)
        out.record.artifacts.append(name)
        rows.append((i, mu, v.kind, v.trigger_time, v.front_length, v.umax_at_decision))
        if v.kind == classify.UNDECIDED and code == EXIT_OK:
            code = EXIT_UNDECIDED
    out.csv("sweep.csv", ["index", "mu", "kind", "trigger_time", "front_length", "umax"], rows)
    kinds = [r[2] for r in rows]
    rec.results["switches"] = sum(1 for a, b in zip(kinds, kinds[1:]) if a != b)
    return code


HANDLERS = {
    "solve": _solve, "eigen": _eigen, "rstar": _rstar, "lambda-inf": _lambda_inf, "steady": _steady,
    "classify": _classify, "mu-star": _mu_star, "speed": _speed, "semiwave": _semiwave,
    "approx-check": _approx_check, "sweep": _sweep,
}


@contextlib.contextmanager
def _no_randomness():
    """Make any use of the global random generators fail loudly."""

    def refuse(*_a, **_k):
        raise AssertionError("randomness used in a --seedless run")

    targets = [(np.random, n) for n in ("default_rng", "random", "rand", "randn", "normal", "uniform", "seed")]
    targets += [(random, n) for n in ("random", "uniform", "gauss", "seed", "randint", "choice", "shuffle")]
    saved = [(mod, n, getattr(mod, n)) for mod, n in targets]
    try:
        for mod, n, _ in saved:
            setattr(mod, n, refuse)
        yield
    finally:
        for mod, n, fn in saved:
            setattr(mod, n, fn)


def run(subcommand: str, config_path, out_dir, threads: int = 1, seedless: bool = False) -> RunRecord:
    """Execute one subcommand; outputs and ``manifest.txt`` land in ``out_dir``."""
    if subcommand not in HANDLERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(subcommand)
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path)
        rec.config_digest = hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
        rec.timings["config"] = time.perf_counter() - t0
        ctx = _no_randomness() if seedless else contextlib.nullcontext()
        with ctx:
            rec.exit_code = HANDLERS[subcommand](cfg, _Out(out_dir, rec), rec, max(1, int(threads)))
    except (ContractError, DomainError) as exc:
        rec.exit_code, rec.error = EXIT_VALIDATION, str(exc)
    except InconclusiveError as exc:
        rec.exit_code, rec.error = EXIT_UNDECIDED, str(exc)
    except SolverError as exc:
        rec.exit_code, rec.error = EXIT_NUMERICAL, str(exc)
    rec.timings["total"] = time.perf_counter() - t0
    rec.artifacts.append("manifest.txt")
    (out_dir / "manifest.txt").write_text(rec.manifest())
    return rec


def build_parser():
    p = argparse.ArgumentParser(prog="freefront", description="Free boundary problems in periodic media.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--seedless", action="store_true", help="fail if any random generator is touched")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    rec = run(args.subcommand, args.config, args.out, args.threads, args.seedless)
    if rec.error:
        print(f"error: {rec.error}", file=sys.stderr)
    elif args.verbose:
        for k, v in rec.results.items():
            print(f"{k} = {_fmt(v)}")
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
