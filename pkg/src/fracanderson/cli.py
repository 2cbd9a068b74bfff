"""Command-line front end.

One INI file drives one command::

    fracanderson thresholds --config run.ini --out results/ --format json

Sections and keys (all optional unless noted)::

    [run]       command, seed, format (csv|json), threads
    [model]     d, alpha, s, beta, lambda | lambda_factor, width, z, mass
    [kernel]    radius, method (bochner_bessel|fourier_grid), tol
    [resolvent] radius
    [saw]       n_max, window, gamma | gamma_factor
    [mc]        side, samples, distances, z_values, lambdas, s_values
    [eigen]     side, realizations, slack
    [dynamics]  side, realizations, beta, t_max, t_points

``lambda_factor`` sets ``lambda`` as a multiple of ``lambda_0(s)``;
``gamma_factor`` sets ``gamma * row_sum``.  Values can also be given on the
command line as ``--set section.key=value``.

Exit codes: 0 success, 1 a verification report failed (or its precondition
was unmet), 2 invalid configuration or runtime error.  Every run writes
``manifest.json`` next to its outputs.
"""

import argparse
import configparser
import datetime
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, io
from .anderson import (
    THREADS_ENV,
    DisorderSpec,
    ModelParams,
    apriori_check,
    default_threads,
    eigen_decay_analysis,
    fractional_moment_mc,
    mc_estimates_to_csv,
    moment_trajectory,
    optimize_s,
    sample_disorder,
    sample_rng,
    saw_bound_check,
    threshold_report,
    threshold_lambda0,
)
from .errors import ConfigInvalid, FracAndersonError
from .laplacian import FracLaplacianParams, QuadratureSpec, kernel_table, row_sum_residual
from .lattice import BoxGeometry
from .resolvent import ResolventParams, resolvent_cube
from .saw import SawSeries, decay_bound_check, saw_kernel_from_laplacian

COMMANDS = ("kernel", "resolvent", "saw", "thresholds", "mc", "verify-bounds", "eigen", "dynamics")
NEEDS_S = {"saw", "thresholds", "mc", "verify-bounds", "eigen", "dynamics"}

DEFAULTS = {
    "run": {"seed": "20240601", "format": "csv", "threads": "1"},
    "model": {"d": "1", "alpha": "0.5", "s": "0.9", "lambda_factor": "3", "width": "1.0", "z": "0.5+0.1j", "mass": "1.0"},
    "kernel": {"radius": "200", "method": "bochner_bessel", "tol": "1e-10"},
    "resolvent": {"radius": "50"},
    "saw": {"n_max": "4", "window": "6", "gamma_factor": "0.1"},
    "mc": {"side": "50", "samples": "1000", "distances": "2,4,8,16", "z_values": "", "lambdas": "", "s_values": ""},
    "eigen": {"side": "200", "realizations": "4", "slack": "0.3"},
    "dynamics": {"side": "200", "realizations": "4", "beta": "0.5", "t_max": "1000", "t_points": "201"},
}


@dataclass
class RunConfig:
    command: str
    params: dict
    output_dir: Path
    master_seed: int
    format: str
    threads: int = 1
    sources: list = field(default_factory=list)


# --------------------------------------------------------------------------
# parsing


def _to_complex(text):
    return complex(text.replace(" ", "").replace("i", "j"))


def _list(text, conv):
    return [conv(t) for t in text.split(",") if t.strip()]


class _Collector:
    """Converts raw strings, recording every violation instead of stopping at the first."""

    def __init__(self, raw):
        self.raw = raw
        self.errors = []

    def get(self, section, key, conv, check=None, message=None):
        text = self.raw.get(section, {}).get(key)
        if text is None or text == "":
            return None
        try:
            value = conv(text)
        except (TypeError, ValueError):
            self.errors.append((f"{section}.{key}", f"cannot parse {text!r}"))
            return None
        if check is not None and not check(value):
            self.errors.append((f"{section}.{key}", message))
            return None
        return value

    def fail(self, path, message):
        self.errors.append((path, message))


def _merge_raw(config_path, overrides):
    raw = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    sources = []
    if config_path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(config_path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigInvalid([("config", str(exc))]) from exc
        for sec in cp.sections():
            raw.setdefault(sec, {}).update(cp[sec])
        sources.append(str(config_path))
    bad = []
    for item in overrides or []:
        key, sep, value = item.partition("=")
        sec, dot, name = key.partition(".")
        if not sep or not dot:
            bad.append(("--set", f"{item!r} is not section.key=value"))
            continue
        raw.setdefault(sec.strip(), {})[name.strip()] = value.strip()
    if bad:
        raise ConfigInvalid(bad)
    return raw, sources


def parse_config(config_path=None, command=None, overrides=None, seed=None, out=None, fmt=None, threads=None):
    """Build and validate a :class:`RunConfig`.

    Raises :class:`ConfigInvalid` listing every violation found.
    """
    raw, sources = _merge_raw(config_path, overrides)
    c = _Collector(raw)
    command = command or raw["run"].get("command")
    if command not in COMMANDS:
        c.fail("run.command", f"must be one of {', '.join(COMMANDS)}")
    p = {}
    p["d"] = c.get("model", "d", int, lambda v: 1 <= v <= 3, "d must be 1, 2 or 3")
    p["alpha"] = c.get("model", "alpha", float, lambda v: 0 < v <= 1, "alpha must lie in (0,1]")
    p["width"] = c.get("model", "width", float, lambda v: v > 0, "width must be positive")
    p["lambda"] = c.get("model", "lambda", float, lambda v: v > 0, "lambda must be positive")
    p["lambda_factor"] = c.get("model", "lambda_factor", float, lambda v: v > 0, "lambda_factor must be positive")
    p["z"] = c.get("model", "z", _to_complex, lambda v: v.imag != 0, "Im z must be nonzero")
    p["mass"] = c.get("model", "mass", float, lambda v: v > 0, "mass must be positive")
    p["s"] = c.get("model", "s", float)
    p["beta"] = c.get("model", "beta", float, lambda v: v >= 0, "beta must be nonnegative")
    if command in NEEDS_S and None not in (p["s"], p["d"], p["alpha"]):
        lo = p["d"] / (p["d"] + 2 * p["alpha"])
        if not p["s"] > lo:
            c.fail("model.s", f"s must exceed d/(d+2alpha) = {lo:.6g}")
        elif not p["s"] < 1:
            c.fail("model.s", "s must be below tau = 1")
    if p["beta"] is not None and None not in (p["s"], p["d"], p["alpha"]) and command == "thresholds":
        two_as = p["s"] * (p["d"] + 2 * p["alpha"]) - p["d"]
        if p["beta"] >= two_as:
            c.fail("model.beta", f"beta must be below 2 alpha_s = {two_as:.6g}")

    p["radius"] = c.get("kernel", "radius", int, lambda v: v >= 1, "radius must be >= 1")
    p["method"] = c.get("kernel", "method", str, lambda v: v in ("bochner_bessel", "fourier_grid"),
                        "method must be bochner_bessel or fourier_grid")
    p["tol"] = c.get("kernel", "tol", float, lambda v: v > 0, "tol must be positive")
    p["res_radius"] = c.get("resolvent", "radius", int, lambda v: v >= 1, "radius must be >= 1")
    p["n_max"] = c.get("saw", "n_max", int, lambda v: 0 <= v <= 8, "n_max must lie in [0, 8]")
    p["window"] = c.get("saw", "window", int, lambda v: v >= 1, "window must be >= 1")
    p["gamma"] = c.get("saw", "gamma", float, lambda v: v >= 0, "gamma must be nonnegative")
    p["gamma_factor"] = c.get("saw", "gamma_factor", float, lambda v: 0 <= v < 1, "gamma_factor must lie in [0, 1)")
    for sec in ("mc", "eigen", "dynamics"):
        p[f"{sec}_side"] = c.get(sec, "side", int, lambda v: v >= 1, "side must be >= 1")
    p["samples"] = c.get("mc", "samples", int, lambda v: v >= 100, "samples must be >= 100")
    p["distances"] = c.get("mc", "distances", lambda t: _list(t, int), lambda v: all(x >= 0 for x in v),
                           "distances must be nonnegative")
    p["z_values"] = c.get("mc", "z_values", lambda t: _list(t, _to_complex), lambda v: all(z.imag != 0 for z in v),
                          "every z must have nonzero imaginary part")
    p["lambdas"] = c.get("mc", "lambdas", lambda t: _list(t, float), lambda v: all(x > 0 for x in v),
                         "lambdas must be positive")
    p["s_values"] = c.get("mc", "s_values", lambda t: _list(t, float))
    p["realizations"] = c.get("eigen", "realizations", int, lambda v: v >= 1, "realizations must be >= 1")
    p["slack"] = c.get("eigen", "slack", float, lambda v: v >= 0, "slack must be nonnegative")
    p["dyn_realizations"] = c.get("dynamics", "realizations", int, lambda v: v >= 1, "realizations must be >= 1")
    p["dyn_beta"] = c.get("dynamics", "beta", float, lambda v: v > 0, "beta must be positive")
    p["t_max"] = c.get("dynamics", "t_max", float, lambda v: v > 0, "t_max must be positive")
    p["t_points"] = c.get("dynamics", "t_points", int, lambda v: v >= 2, "t_points must be >= 2")
    if command == "dynamics" and None not in (p["dyn_beta"], p["alpha"]) and p["dyn_beta"] >= 2 * p["alpha"]:
        c.fail("dynamics.beta", f"beta must be below 2 alpha = {2 * p['alpha']:g}")
    if command in ("mc", "verify-bounds") and p["distances"] and p["mc_side"] is not None:
        if max(p["distances"]) > p["mc_side"]:
            c.fail("mc.distances", f"distances must not exceed the box side {p['mc_side']}")
    if command in ("mc", "verify-bounds") and p["s_values"] and None not in (p["d"], p["alpha"]):
        lo = p["d"] / (p["d"] + 2 * p["alpha"])
        if any(not lo < s < 1 for s in p["s_values"]):
            c.fail("mc.s_values", f"every s must lie in ({lo:.6g}, 1)")

    seed_val = seed if seed is not None else c.get("run", "seed", int, lambda v: 0 <= v < 2**64, "seed must be a 64-bit unsigned integer")
    if seed is not None and not 0 <= seed < 2**64:
        c.fail("--seed", "seed must be a 64-bit unsigned integer")
    fmt = fmt or c.get("run", "format", str, lambda v: v in ("csv", "json"), "format must be csv or json")
    if fmt not in (None, "csv", "json"):
        c.fail("--format", "format must be csv or json")
    nthreads = threads
    if nthreads is None:
        env = default_threads() if THREADS_ENV in os.environ else None
        nthreads = env or c.get("run", "threads", int, lambda v: v >= 1, "threads must be >= 1")
    if c.errors:
        raise ConfigInvalid(c.errors)
    return RunConfig(command, p, Path(out or "."), int(seed_val), fmt, int(nthreads or 1), sources)


# --------------------------------------------------------------------------
# commands


def _lap(p):
    return FracLaplacianParams(p["d"], p["alpha"])


def _quad(p):
    return QuadratureSpec(method=p["method"], tol=p["tol"])


def _disorder(p):
    return DisorderSpec.uniform(p["width"])


def _table(p, radius=None):
    return kernel_table(_lap(p), radius or p["radius"], _quad(p))


def _model(p, table):
    dis = _disorder(p)
    lam = p["lambda"]
    if lam is None:
        lam = p["lambda_factor"] * threshold_lambda0(p["s"], dis, saw_kernel_from_laplacian(table, p["s"]))
    return ModelParams(_lap(p), dis, lam, p["s"], p["z"])


def _axis_pairs(d, distances):
    return [((0,) * d, (r,) + (0,) * (d - 1)) for r in distances]


def _cmd_kernel(cfg, out):
    p = cfg.params
    t = _table(p)
    summary = t.summary()
    summary["row_sum_residual"] = row_sum_residual(t)
    if cfg.format == "csv":
        out.append(t.to_csv(cfg.output_dir / "kernel.csv"))
    else:
        out.append(io.write_json(cfg.output_dir / "kernel.json", summary))
    return 0


def _cmd_resolvent(cfg, out):
    p = cfg.params
    rp = ResolventParams(_lap(p), p["mass"])
    R = p["res_radius"]
    vals, errs = resolvent_cube(rp, R)
    d = p["d"]
    coords = np.indices((2 * R + 1,) * d).reshape(d, -1).T - R
    meta = {"d": d, "alpha": p["alpha"], "mass": p["mass"], "radius": R}
    if cfg.format == "csv":
        cols = [f"x{j + 1}" for j in range(d)] + ["value", "error"]
        rows = ([*c, v, e] for c, v, e in zip(coords.tolist(), vals.ravel(), errs.ravel()))
        out.append(io.write_csv(cfg.output_dir / "resolvent.csv", meta, cols, rows))
    else:
        axis = [float(vals[(R + r,) + (R,) * (d - 1)]) for r in range(R + 1)]
        out.append(io.write_json(cfg.output_dir / "resolvent.json", {**meta, "axis": axis, "max_error": float(errs.max())}))
    return 0


def _cmd_saw(cfg, out):
    p = cfg.params
    t = _table(p)
    k = saw_kernel_from_laplacian(t, p["s"])
    gamma = p["gamma"] if p["gamma"] is not None else p["gamma_factor"] / k.row_sum
    ser = SawSeries(k, gamma, p["n_max"], p["window"])
    box = ser.window
    meta = {"d": p["d"], "alpha": p["alpha"], "s": p["s"], "gamma": gamma, "n_max": p["n_max"], "window": p["window"]}
    if cfg.format == "csv":
        cols = [f"x{j + 1}" for j in range(p["d"])] + ["lower", "upper"]
        rows = ([*x, ser.lower(tuple(x)), ser.upper(tuple(x))] for x in box.sites.tolist())
        out.append(io.write_csv(cfg.output_dir / "saw.csv", meta, cols, rows))
    else:
        payload = {**meta, "row_sum": k.row_sum, "chi_lower": ser.susceptibility_lower(),
                   "chi_upper": ser.susceptibility_upper()}
        if ser.certified:
            a = 2 * (0.5 * (p["s"] * (p["d"] + 2 * p["alpha"]) - p["d"]))
            payload["decay_report"] = decay_bound_check(k, gamma, a, n_exact=p["n_max"], window_radius=p["window"])
        out.append(io.write_json(cfg.output_dir / "saw.json", payload))
    return 0


def _cmd_thresholds(cfg, out):
    p = cfg.params
    t = _table(p)
    s = p["s"]
    beta = p["beta"] if p["beta"] is not None else 0.5 * (s * (p["d"] + 2 * p["alpha"]) - p["d"])
    rep = threshold_report(s, beta, _disorder(p), t, p["lambda"])
    payload = {**rep._asdict(), "chain_holds": rep.chain_holds}
    if cfg.format == "csv":
        out.append(io.write_csv(cfg.output_dir / "thresholds.csv", {"d": p["d"], "alpha": p["alpha"]},
                                list(payload), [list(payload.values())]))
    else:
        lo = p["d"] / (p["d"] + 2 * p["alpha"])
        grid = np.linspace(lo + 0.02 * (1 - lo), 1 - 0.02 * (1 - lo), 20)
        payload["optimize_s"] = optimize_s(_disorder(p), t, grid)
        out.append(io.write_json(cfg.output_dir / "thresholds.json", payload))
    return 0


def _cmd_mc(cfg, out):
    p = cfg.params
    box = BoxGeometry(p["mc_side"], p["d"])
    t = _table(p, max(p["radius"], 2 * box.side))
    m = _model(p, t)
    pairs = _axis_pairs(p["d"], p["distances"])
    zs = p["z_values"] or [m.z]
    ests = []
    for z in zs:
        ests += fractional_moment_mc(m.replace(z=z), box, pairs, p["samples"], cfg.master_seed, t, cfg.threads,
                                     p["s_values"] or None)
    meta = {"d": p["d"], "alpha": p["alpha"], "lambda": m.lam, "side": box.side, "seed": cfg.master_seed}
    if cfg.format == "csv":
        out.append(mc_estimates_to_csv(cfg.output_dir / "mc.csv", ests, meta))
    else:
        out.append(io.write_json(cfg.output_dir / "mc.json", {**meta, "estimates": ests}))
    return 0


def _cmd_verify(cfg, out):
    p = cfg.params
    box = BoxGeometry(p["mc_side"], p["d"])
    t = _table(p, max(p["radius"], 2 * box.side))
    m = _model(p, t)
    zs = p["z_values"] or [m.z]
    pairs = _axis_pairs(p["d"], p["distances"])
    l0 = threshold_lambda0(m.s, m.disorder, saw_kernel_from_laplacian(t, m.s))
    if m.lam <= l0:
        note = f"lambda = {m.lam:.6g} <= lambda_0(s) = {l0:.6g}: precondition of the localization theorem unmet"
        print(note, file=sys.stderr)
        out.append(io.write_json(cfg.output_dir / "verify.json",
                                 {"passes": False, "precondition_met": False, "lambda": m.lam, "lambda0": l0, "note": note}))
        return 1
    reports = []
    ok = True
    rows = []
    for z in zs:
        mz = m.replace(z=z)
        ests = fractional_moment_mc(mz, box, pairs, p["samples"], cfg.master_seed, t, cfg.threads)
        rep = saw_bound_check(mz, [e for e in ests if e.distance > 0], t)
        ok &= rep.passes
        reports.append({"z": z, "saw_bound": rep})
        rows += [[z.real, z.imag, r.pair[1][0] - r.pair[0][0], r.mean, r.stderr, r.saw_bound, int(r.passes)]
                 for r in rep.rows]
    apri = apriori_check(m, BoxGeometry(min(box.side, 10), p["d"]), p["samples"], cfg.master_seed, t,
                         lambdas=p["lambdas"] or None, s_values=p["s_values"] or None, zs=zs, threads=cfg.threads)
    ok &= apri.passes
    payload = {"passes": bool(ok), "precondition_met": True, "lambda": m.lam, "lambda0": l0, "apriori": apri, "saw": reports}
    if cfg.format == "csv":
        meta = {"d": p["d"], "alpha": p["alpha"], "lambda": m.lam, "seed": cfg.master_seed, "passes": bool(ok)}
        out.append(io.write_csv(cfg.output_dir / "verify.csv", meta,
                                ["re_z", "im_z", "distance", "mean", "stderr", "bound", "passes"], rows))
    out.append(io.write_json(cfg.output_dir / "verify.json", payload))
    return 0 if ok else 1


def _cmd_eigen(cfg, out):
    p = cfg.params
    box = BoxGeometry(p["eigen_side"], p["d"])
    t = _table(p, max(p["radius"], 2 * box.side))
    m = _model(p, t)
    rows = []
    for i in range(p["realizations"]):
        omega = sample_disorder(m.disorder, box, sample_rng(cfg.master_seed, i))
        r = eigen_decay_analysis(m, box, omega, t, p["slack"])
        rows.append([i, r.median_t, r.fraction_passing, r.threshold])
    med = float(np.median([r[1] for r in rows]))
    meta = {"d": p["d"], "alpha": p["alpha"], "lambda": m.lam, "side": box.side, "seed": cfg.master_seed}
    if cfg.format == "csv":
        out.append(io.write_csv(cfg.output_dir / "eigen.csv", meta,
                                ["realization", "median_t", "fraction_passing", "threshold"], rows))
    else:
        out.append(io.write_json(cfg.output_dir / "eigen.json", {**meta, "ensemble_median_t": med, "rows": rows}))
    return 0


def _cmd_dynamics(cfg, out):
    p = cfg.params
    box = BoxGeometry(p["dynamics_side"], p["d"])
    t = _table(p, max(p["radius"], 2 * box.side))
    m = _model(p, t)
    tg = np.linspace(0.0, p["t_max"], p["t_points"])
    trajs = [moment_trajectory(m, box, sample_disorder(m.disorder, box, sample_rng(cfg.master_seed, i)), t,
                               p["dyn_beta"], tg) for i in range(p["dyn_realizations"])]
    mom = np.mean([tr.moments for tr in trajs], axis=0)
    edge = np.mean([tr.boundary_mass for tr in trajs], axis=0)
    meta = {"d": p["d"], "alpha": p["alpha"], "lambda": m.lam, "beta": p["dyn_beta"], "seed": cfg.master_seed}
    if cfg.format == "csv":
        out.append(io.write_csv(cfg.output_dir / "dynamics.csv", meta, ["t", "moment", "boundary_mass"],
                                zip(tg, mom, edge)))
    else:
        out.append(io.write_json(cfg.output_dir / "dynamics.json",
                                 {**meta, "max_moment": float(mom.max()), "max_boundary_mass": float(edge.max())}))
    return 0


_DISPATCH = {
    "kernel": _cmd_kernel,
    "resolvent": _cmd_resolvent,
    "saw": _cmd_saw,
    "thresholds": _cmd_thresholds,
    "mc": _cmd_mc,
    "verify-bounds": _cmd_verify,
    "eigen": _cmd_eigen,
    "dynamics": _cmd_dynamics,
}


def _manifest(cfg, files, code):
    return {
        "command": cfg.command,
        "exit_code": code,
        "master_seed": cfg.master_seed,
        "format": cfg.format,
        "threads": cfg.threads,
        "config_sources": cfg.sources,
        "params": {k: v for k, v in cfg.params.items()},
        "files": sorted(Path(f).name for f in files),
        "versions": {
            "fracanderson": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def run(cfg):
    """Execute ``cfg``; returns the exit code."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    files = []
    try:
        code = _DISPATCH[cfg.command](cfg, files)
    except FracAndersonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 2
    io.write_json(cfg.output_dir / "manifest.json", _manifest(cfg, files, code))
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="fracanderson", description=__doc__.split("\n")[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides [run] command")
    ap.add_argument("--config", type=Path, help="INI configuration file")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", type=Path, help="output directory (default: current)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--threads", type=int, help="worker threads (else $FRACANDERSON_THREADS, else [run] threads)")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigInvalid([("--threads", "must be >= 1")])
        cfg = parse_config(args.config, args.command, args.set, args.seed, args.out, args.format, args.threads)
    except ConfigInvalid as exc:
        for path, msg in exc.violations:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
