"""Command-line experiment runner.

    catdyn run <config.json>
    catdyn suite <dir>
    catdyn validate <config.json>

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 numerical precondition failure.  ``CATDYN_OUT`` overrides the output root.
"""

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .contour import (DecayError, PolyFunction, contour_integrate, delta_angle_window, delta_path,
                      delta_scaling_check, sifting_error, smeared_delta, tilted_line_angle)
from .dynamics import (ModelConfig, NormOverflowError, build_hamiltonian, evolve,
                       evolve_trajectory)
from .expectations import (IllConditionedError, breakdown_time, classical_path,
                           ddt_decomposition_aa, ddt_identity_ba, effective_quantities, exp_aa,
                           exp_ba, richardson_ratio, trajectory_compare)
from .fockspace import (TrustRegionError, build_space, coherent_state, required_ncut,
                        theorem1_residual)
from .pathintegral import (GaussianWave, averaged_momentum_check, formal_trajectory,
                           gaussian_p_integral, lattice_amplitude, make_lattice,
                           operator_amplitude, slice_kernel, window_identity)
from .rechoose import ConditioningError, bt_anchor_derivative_check, decomposition_check
from .series import TimeSeries

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

EXPERIMENTS = ("identities-ba", "identities-aa", "rechoose", "ehrenfest-fi", "ehrenfest-fni",
               "delta-suite", "fpi-convergence", "momentum-window", "theorem1-sweep")

_SCHEMA = {
    "model": {"m_re": 1.0, "m_im": 0.5, "potential": {"2": [0.5, 0.1], "4": [0.0, -0.02]},
              "hbar": 1.0},
    "space": {"n_cut": 60, "eps": 1.0, "eps_prime": 0.01},
    "run": {"experiment": None, "horizon": 1.0, "dt": 0.02, "window": 0.1, "alpha": [1.0, 0.5],
            "b_alpha": [0.8, -0.3], "t_eval": 0.3, "t_other": 0.1, "n_slices": [26, 51, 101],
            "eps_values": None},
    "output": {"directory": "catdyn_out", "format": "csv"},
}

NUMERIC_ERRORS = (TrustRegionError, DecayError, NormOverflowError, ConditioningError,
                  IllConditionedError, ArithmeticError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: ModelConfig
    space: dict
    run: dict
    output: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def hash(self):
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _merge(section, given):
    defaults = _SCHEMA[section]
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {', '.join(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    sections = {k: _merge(k, doc.get(k, {})) for k in _SCHEMA}
    model, space, run, output = (sections[k] for k in ("model", "space", "run", "output"))
    if run["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"run.experiment must be one of {', '.join(EXPERIMENTS)}")
    if output["format"] not in ("csv", "json"):
        raise ConfigError("output.format must be csv or json")
    try:
        m_re, m_im = float(model["m_re"]), float(model["m_im"])
        hbar = float(model["hbar"])
        powers = {int(k): complex(v[0], v[1]) for k, v in model["potential"].items()}
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed model section: {exc}") from exc
    if m_im < 0:
        raise ConfigError(f"m_im = {m_im} violates the precondition m_I ≥ 0")
    if m_re == 0:
        raise ConfigError("m_re = 0 makes the effective mass singular")
    if hbar <= 0:
        raise ConfigError("hbar must be positive")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = ModelConfig(complex(m_re, m_im), PolyFunction.from_powers(powers), hbar)
        build_space(space["n_cut"], hbar, space["eps"], space["eps_prime"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key in ("horizon", "dt", "window"):
        if not float(run[key]) > 0:
            raise ConfigError(f"run.{key} must be positive")
    return ExperimentConfig(cfg, space, run, output, raw=sections)


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


@dataclass
class Check:
    name: str
    value: float
    passed: bool
    criterion: str


def _cx(v):
    v = complex(v)
    return v.real, v.imag


def _space(ec):
    s = ec.space
    return build_space(s["n_cut"], ec.model.hbar, s["eps"], s["eps_prime"])


def _alpha(v):
    return complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)


def _times(ec):
    dt = float(ec.run["dt"])
    horizon = float(ec.run["horizon"])
    n = int(round(horizon / dt))
    return dt * np.arange(n + 1)


def _within(x, lo, hi):
    return bool(lo <= x <= hi)


def exp_identities_ba(ec):
    cfg = ec.model
    sp = _space(ec)
    H = build_hamiltonian(cfg, sp)
    a0 = coherent_state(sp, _alpha(ec.run["alpha"]))
    bT = coherent_state(sp, _alpha(ec.run["b_alpha"]))
    horizon = float(ec.run["horizon"])
    dt = float(ec.run["dt"])
    ops = {"q": sp.q_op, "p": sp.p_op, "q2": sp.q_op @ sp.q_op}
    ts = np.linspace(dt, horizon - dt, 9)
    cols = {"t": ts}
    for name, O in ops.items():
        reps = [ddt_identity_ba(O, H, a0, bT, t, dt, t_final=horizon, hbar=cfg.hbar) for t in ts]
        cols[f"{name}_fd_re"], cols[f"{name}_fd_im"] = zip(*[_cx(r.total_fd) for r in reps])
        cols[f"{name}_comm_re"], cols[f"{name}_comm_im"] = zip(*[_cx(r.commutator_term) for r in reps])
        cols[f"{name}_resid"] = [abs(r.residual) for r in reps]
    checks = []
    t = float(ec.run["t_eval"])
    for name, O in ops.items():
        ratio, _, _ = richardson_ratio(
            lambda d: ddt_identity_ba(O, H, a0, bT, t, d, t_final=horizon, hbar=cfg.hbar), dt)
        checks.append(Check(f"richardson_{name}", ratio, _within(ratio, 3.5, 4.5), "[3.5, 4.5]"))
    a_t = evolve(a0, H, t, "A", cfg.hbar)
    b_t = evolve(bT, H, t - horizon, "B", cfg.hbar)
    rep = ddt_identity_ba(sp.q_op, H, a0, bT, t, dt, t_final=horizon, hbar=cfg.hbar)
    gap = abs(rep.commutator_term - exp_ba(sp.p_op, b_t, a_t) / cfg.m)
    checks.append(Check("dq_dt_equals_p_over_m", gap, gap < 1e-10, "< 1e-10"))
    return cols, checks, {}


def exp_identities_aa(ec):
    cfg = ec.model
    sp = _space(ec)
    H = build_hamiltonian(cfg, sp)
    a0 = coherent_state(sp, _alpha(ec.run["alpha"]))
    dt = float(ec.run["dt"])
    horizon = float(ec.run["horizon"])
    ops = {"q": sp.q_op, "p": sp.p_op, "q2": sp.q_op @ sp.q_op}
    ts = np.linspace(dt, horizon - dt, 9)
    cols = {"t": ts}
    for name, O in ops.items():
        reps = [ddt_decomposition_aa(O, H, a0, t, dt, hbar=cfg.hbar) for t in ts]
        cols[f"{name}_fd_re"], cols[f"{name}_fd_im"] = zip(*[_cx(r.total_fd) for r in reps])
        cols[f"{name}_comm_re"], cols[f"{name}_comm_im"] = zip(*[_cx(r.commutator_term) for r in reps])
        cols[f"{name}_fluct_re"], cols[f"{name}_fluct_im"] = zip(*[_cx(r.fluctuation_term) for r in reps])
        cols[f"{name}_resid"] = [abs(r.residual) for r in reps]
    checks = []
    t = float(ec.run["t_eval"])
    for name, O in ops.items():
        ratio, _, _ = richardson_ratio(lambda d: ddt_decomposition_aa(O, H, a0, t, d, hbar=cfg.hbar), dt)
        checks.append(Check(f"richardson_{name}", ratio, _within(ratio, 3.5, 4.5), "[3.5, 4.5]"))
    a_t = evolve(a0, H, t, "A", cfg.hbar)
    rep = ddt_decomposition_aa(sp.q_op, H, a0, t, dt, hbar=cfg.hbar)
    gap = abs(rep.commutator_term - exp_aa(sp.p_op, a_t) / cfg.m_eff)
    checks.append(Check("comm_q_equals_p_over_m_eff", gap, gap < 1e-10, "< 1e-10"))
    eff = effective_quantities(cfg, sp)
    d = float(np.max(np.abs(eff.H_eff_matrix - eff.H_h_matrix)))
    checks.append(Check("H_eff_minus_H_h", d, d < 1e-13, "< 1e-13"))
    return cols, checks, {"m_eff": eff.m_eff}


def exp_rechoose(ec):
    cfg = ec.model
    sp = _space(ec)
    H = build_hamiltonian(cfg, sp)
    a0 = coherent_state(sp, _alpha(ec.run["alpha"]))
    dt = float(ec.run["dt"])
    horizon = float(ec.run["horizon"])
    times = _times(ec)
    traj = evolve_trajectory(H, a0, times, None, cfg.hbar)
    ts = np.linspace(2 * dt, horizon - 2 * dt, 9)
    O = sp.q_op
    cols = {"t": ts}
    reps = [decomposition_check(O, traj, t, dt) for t in ts]
    aas = [ddt_decomposition_aa(O, H, traj.a_at(t), 0.0, dt, hbar=cfg.hbar) for t in ts]
    cols["term_tprime_re"], cols["term_tprime_im"] = zip(*[_cx(r.commutator_term) for r in reps])
    cols["term_t_re"], cols["term_t_im"] = zip(*[_cx(r.fluctuation_term) for r in reps])
    cols["fd_re"], cols["fd_im"] = zip(*[_cx(r.total_fd) for r in reps])
    route = [abs(r.commutator_term + r.fluctuation_term - a.commutator_term - a.fluctuation_term)
             for r, a in zip(reps, aas)]
    cols["route_gap"] = route
    cols["resid"] = [abs(r.residual) for r in reps]
    checks = [Check("route_equivalence", max(route), max(route) < 1e-10, "< 1e-10")]
    t = float(ec.run["t_eval"])
    t2 = float(ec.run["t_other"])
    ratio, _, _ = richardson_ratio(lambda d: bt_anchor_derivative_check(traj, t, t2, d), dt)
    checks.append(Check("anchor_derivative_richardson", ratio, _within(ratio, 3.5, 4.5), "[3.5, 4.5]"))
    return cols, checks, {}


def _classical_endpoint_state(ec, sp, a0):
    """Coherent state at the endpoint of the effective classical path from <q>, <p> of a0."""
    cfg = ec.model
    q0 = exp_aa(sp.q_op, a0).real
    p0 = exp_aa(sp.p_op, a0).real
    horizon = float(ec.run["horizon"])
    qc, pc = classical_path(cfg.m_eff, lambda x: -cfg.V_R.deriv()(x), q0, p0,
                            np.array([0.0, horizon]), 400)
    hb, e = sp.hbar, sp.eps
    alpha = qc[-1].real / np.sqrt(2 * hb * e) + 1j * pc[-1].real * np.sqrt(e / (2 * hb))
    return coherent_state(sp, alpha)


def exp_ehrenfest(ec, mode):
    cfg = ec.model
    sp = _space(ec)
    a0 = coherent_state(sp, _alpha(ec.run["alpha"]))
    dt = float(ec.run["dt"])
    horizon = float(ec.run["horizon"])
    b_final = _classical_endpoint_state(ec, sp, a0) if mode == "fi" else None
    ts = trajectory_compare(cfg, sp, a0, horizon, dt, mode, b_final)
    c = ts.columns
    inner = slice(1, -1)
    resid = c["ehrenfest_resid"][inner]
    bound = c["resid_bound"][inner]
    excess = float(np.max(resid - bound))
    checks = [Check("ehrenfest_resid_within_bound", excess, excess <= 0, "resid - bound <= 0")]
    extra = {"max_ehrenfest_resid": float(np.max(resid))}
    q_quant = c["q_re"] + 1j * c["q_im"]
    q_cl = c["q_cl_re"] + 1j * c["q_cl_im"]
    t_break, dev = breakdown_time(c["t"], q_quant, q_cl)
    extra["breakdown_time"] = t_break
    before = dev[c["t"] < t_break]
    ok = bool(before.size and np.all(before <= 0.05))
    checks.append(Check("classical_within_5pct_before_breakdown", float(np.max(before)) if before.size else float("nan"),
                        ok, "<= 0.05"))
    if mode == "fni":
        cols = {"t": c["t"], "q_aa_re": c["q_re"], "q_aa_im": c["q_im"], "p_aa_re": c["p_re"],
                "fluct_ratio": c["fluct_ratio"], "ehrenfest_resid": c["ehrenfest_resid"],
                "resid_bound": c["resid_bound"], "q_cl_re": c["q_cl_re"]}
    else:
        cols = dict(c)
    return cols, checks, extra


def exp_delta_suite(ec):
    eps_values = ec.run["eps_values"] or [1e-2, 1e-3, 1e-4]
    f = lambda q: np.exp(-q ** 2 / 4)
    q0 = 0.5
    errs = [sifting_error(f, q0, e, angle=0.3)[0] for e in eps_values]
    x = np.asarray(eps_values)
    y = np.asarray(errs)
    C = float(x @ y / (x @ x))
    r2 = 1 - np.sum((y - C * x) ** 2) / np.sum((y - y.mean()) ** 2)
    checks = [Check("sifting_linear_fit_r2", float(r2), r2 > 0.99, "> 0.99"),
              Check("sifting_error_below_fit", float(np.max(y - C * x * 1.0001)),
                    bool(np.all(y <= C * x * 1.05)), "err <= 1.05*C*eps")]
    a = 2 * np.exp(1j * np.pi / 8)
    lo, hi = delta_angle_window(a, 0.01)
    path = delta_path(0.0, abs(0.01 / a ** 2), angle=tilted_line_angle(lo, hi))
    sc = delta_scaling_check(a, 0.01, path, f)
    checks.append(Check("scaling_residual", sc, sc < 1e-10, "< 1e-10"))
    g = lambda q: smeared_delta(q - 0.3, 0.01)
    v1 = contour_integrate(g, delta_path(0.3, 0.01, 10.0, 0.0))
    v2 = contour_integrate(g, delta_path(0.3, 0.01, 10.0, 0.4))
    checks.append(Check("two_path_agreement", abs(v1 - v2), abs(v1 - v2) < 1e-9, "< 1e-9"))
    return {"eps": x, "sifting_error": y}, checks, {"fit_C": C}


def exp_fpi(ec):
    cfg = ec.model
    horizon = float(ec.run["horizon"])
    sp = _space(ec)
    psi_i = GaussianWave.packet(0.5, 0.0, 1.0, cfg.hbar)
    psi_f = GaussianWave.packet(0.2, 0.0, 0.8, cfg.hbar)
    ref = operator_amplitude(psi_i, psi_f, cfg, sp, horizon)
    ns = [int(n) for n in ec.run["n_slices"]]
    amps = [lattice_amplitude(psi_i, psi_f, cfg, make_lattice(cfg, n, horizon)) for n in ns]
    errs = np.abs(np.array(amps) - ref)
    checks = []
    for i in range(len(ns) - 1):
        r = float(errs[i] / errs[i + 1])
        checks.append(Check(f"error_ratio_{ns[i]}_{ns[i + 1]}", r, _within(r, 1.7, 2.3), "[1.7, 2.3]"))
    qd = 1.0
    dt = float(ec.run["dt"])
    gap = abs(gaussian_p_integral(0.4, qd, cfg, dt) - slice_kernel(0.4 + dt * qd, 0.4, cfg, dt))
    checks.append(Check("p_integral_vs_kernel", gap, gap < 1e-6, "< 1e-6"))
    cols = {"n_slices": ns, "amp_re": np.real(amps), "amp_im": np.imag(amps), "error": errs}
    return cols, checks, {"operator_amplitude_re": ref.real, "operator_amplitude_im": ref.imag}


def exp_momentum_window(ec):
    cfg = ec.model
    W = float(ec.run["window"])
    wi = abs(window_identity(cfg, W) - 1 / cfg.m_eff)
    checks = [Check("window_identity", wi, wi < 1e-12, "< 1e-12")]
    alpha = _alpha(ec.run["alpha"])
    q0 = np.sqrt(2.0) * alpha.real
    v0 = np.sqrt(2.0) * alpha.imag / cfg.m_eff
    h = W / 64
    traj = formal_trajectory(cfg, q0, v0, 0.0, W, h)
    windows = [W / 2 ** k for k in range(4)]
    res = [averaged_momentum_check(traj, cfg, w) for w in windows]
    r = [x[2] for x in res]
    for i in range(len(r) - 1):
        ratio = r[i] / r[i + 1]
        checks.append(Check(f"halving_ratio_{i}", ratio, _within(ratio, 1.7, 2.3), "[1.7, 2.3]"))
    cols = {"window": windows,
            "lhs_re": [x[0].real for x in res], "lhs_im": [x[0].imag for x in res],
            "rhs_re": [x[1].real for x in res], "rhs_im": [x[1].imag for x in res],
            "residual": r}
    return cols, checks, {"m_eff": cfg.m_eff, "window_identity_residual": wi}


def exp_theorem1(ec):
    eps_values = ec.run["eps_values"] or [2e-3, 1e-3]
    hbar = ec.model.hbar
    q_res, p_res = [], []
    for e in eps_values:
        lam = 1.0 / np.sqrt(2 * hbar * e)
        sp = build_space(required_ncut(lam) + 8, hbar, e, e)
        q_res.append(theorem1_residual(sp, [(1.0, ["q"])]))
        p_res.append(theorem1_residual(sp, [(1.0, ["p", "p"])]))
    checks = [Check("q_new_residual_small", q_res[-1], q_res[-1] < 1e-2, "< 1e-2")]
    for name, r in (("q_new", q_res), ("p_new_sq", p_res)):
        dec = all(r[i + 1] < r[i] for i in range(len(r) - 1))
        checks.append(Check(f"{name}_decreasing", float(r[-1]), dec, "decreasing in eps"))
    return {"eps": eps_values, "residual_q_new": q_res, "residual_p_new_sq": p_res}, checks, {}


def dispatch(ec):
    name = ec.run["experiment"]
    if name == "identities-ba":
        return exp_identities_ba(ec)
    if name == "identities-aa":
        return exp_identities_aa(ec)
    if name == "rechoose":
        return exp_rechoose(ec)
    if name == "ehrenfest-fi":
        return exp_ehrenfest(ec, "fi")
    if name == "ehrenfest-fni":
        return exp_ehrenfest(ec, "fni")
    if name == "delta-suite":
        return exp_delta_suite(ec)
    if name == "fpi-convergence":
        return exp_fpi(ec)
    if name == "momentum-window":
        return exp_momentum_window(ec)
    return exp_theorem1(ec)


def output_dir(ec, config_path):
    root = Path(os.environ.get("CATDYN_OUT") or Path.cwd())
    return root / ec.output["directory"] / Path(config_path).stem


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    return x


def emit_report(series: TimeSeries, summary: dict, out: Path, fmt="csv"):
    out.mkdir(parents=True, exist_ok=True)
    name = "series.csv" if fmt == "csv" else "series.json"
    series.write(out / name, fmt)
    with open(out / "summary.json", "w", newline="\n", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, indent=1) + "\n")
    return out / name


def run_experiment(config_path, stream=None):
    stream = stream or sys.stdout
    try:
        ec = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cols, checks, extra = dispatch(ec)
    except NUMERIC_ERRORS as exc:
        print(f"numerical precondition failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"numerical precondition failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    meta = {
        "experiment": ec.run["experiment"],
        "config_hash": ec.hash,
        "versions": {"catdyn": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }
    series = TimeSeries(cols, meta)
    summary = {
        "metadata": meta,
        "checks": [{"name": c.name, "value": _jsonable(c.value), "passed": bool(c.passed),
                    "criterion": c.criterion} for c in checks],
        "results": {k: _jsonable(v) for k, v in extra.items()},
        "passed": all(c.passed for c in checks),
    }
    try:
        out = emit_report(series, summary, output_dir(ec, config_path), ec.output["format"])
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {ec.run['experiment']}:{c.name} "
              f"value={c.value:.6g} ({c.criterion})", file=stream)
    print(f"wrote {out}", file=stream)
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def validate(config_path, stream=None):
    stream = stream or sys.stdout
    try:
        ec = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok {config_path} ({ec.run['experiment']}, hash {ec.hash[:12]})", file=stream)
    return EXIT_OK


def run_suite(directory, stream=None):
    stream = stream or sys.stdout
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        print(f"config error: no *.json configs in {directory}", file=sys.stderr)
        return EXIT_CONFIG
    codes = [run_experiment(p, stream) for p in paths]
    for p, c in zip(paths, codes):
        print(f"{p.name}: exit {c}", file=stream)
    bad = [c for c in codes if c != EXIT_OK]
    # report the most severe failure class
    return max(bad) if bad else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="catdyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p = sub.add_parser("suite", help="run every *.json config in a directory")
    p.add_argument("directory")
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config)
    if args.command == "suite":
        return run_suite(args.directory)
    return validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
