"""Command-line entry point.

Every subcommand reads an optional INI config (``--config``), applies
``--seed``, runs one driver and writes ``<cmd>.csv`` tables, a
``<cmd>.json`` verdict, the canonical config ``<cmd>.config.txt`` whose
SHA-256 is the recorded digest, and ``<cmd>.timing.json`` with the wall
time.  Timing lives in its own file so every other output is byte-identical
across reruns and thread counts.

Exit codes: 0 success, 2 verdict failure, 1 usage or configuration error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, io
from ._rng import MAX_SEED
from .config import ConfigError, ExperimentConfig
from .cumulants import estimate_cumulants
from .experiments import (
    REPORT_SCOPE,
    AlphaSchedule,
    ExactPoisson,
    br_conformance,
    deviation_ratio_table,
    mdp_check,
    mdp_verdict,
    rss_conformance,
    tail_mc,
    verdict,
)
from .stabilization import ProbeConfig, collect_radii, fit_decay, pair_correlation_decay
from .statistics import ReplicationParams, _variance_ratio, estimate_Q, run_replications

OUT_ENV = "STABDEV_OUT"
DEFAULT_OUT = "stabdev-out"

EXIT_OK, EXIT_USAGE, EXIT_VERDICT = 0, 1, 2


@dataclass
class Result:
    tables: list = field(default_factory=list)  # (suffix, header, rows)
    summary: dict = field(default_factory=dict)
    passed: bool = True
    rows: int = 0


# --- shared helpers ------------------------------------------------------


def _seed(cfg: ExperimentConfig) -> int:
    s = cfg.get_int("experiment", "seed", 0, minimum=0)
    if s > MAX_SEED:
        raise ConfigError("[experiment] seed", "must fit in 64 unsigned bits")
    return s


def _params(cfg: ExperimentConfig, lam: float) -> ReplicationParams:
    return ReplicationParams(
        spec=cfg.spec(),
        window=cfg.window(),
        lam=lam,
        density=cfg.density(lam),
        f=cfg.test_function(),
        seed=_seed(cfg),
        r_max=cfg.r_max(),
    )


def _lam(cfg) -> float:
    return cfg.get_float("experiment", "lam", "50", positive=True)


def _lams(cfg, default) -> list:
    lams = cfg.get_floats("experiment", "lams", default, positive=True)
    return lams


def _batch(cfg, threads):
    n = cfg.get_int("experiment", "n", 1000, minimum=2)
    return run_replications(_params(cfg, _lam(cfg)), n, threads)


BATCH_HEADER = ["replication_id", "Y", "N_points"]

BASE = {
    "functional": {"family": "constant", "c": "1"},
    "window": {"d": "2", "topology": "torus", "sides": "1"},
    "intensity": {"kind": "uniform"},
    "test_function": {"kind": "constant", "value": "1"},
}


def _defaults(**experiment) -> dict:
    out = {k: dict(v) for k, v in BASE.items()}
    out["experiment"] = {k: str(v) for k, v in experiment.items()}
    return out


# --- drivers -------------------------------------------------------------


def run_simulate(cfg, threads) -> Result:
    b = _batch(cfg, threads)
    return Result([("", BATCH_HEADER, b.rows())], {"mean": b.mean, "mean_se": b.mean_se, "n": b.n}, True, b.n)


def run_cumulants(cfg, threads) -> Result:
    b = _batch(cfg, threads)
    K = cfg.get_int("experiment", "K", 4, minimum=1)
    variant = cfg.choice("experiment", "variant", {"k-statistics", "plug-in"}, "k-statistics")
    blocks = cfg.get_int("experiment", "blocks", 50, minimum=2)
    try:
        rep = estimate_cumulants(b.values, K, variant, blocks)
    except ValueError as exc:
        raise ConfigError("[experiment] K", str(exc)) from None
    rows = rep.rows()
    summary = {"cumulants": rows, "flags": rep.flags, "n": rep.n, "blocks": rep.blocks}
    return Result([("", ["order", "estimate", "se", "variant"], rows), (".batch", BATCH_HEADER, b.rows())], summary, True, len(rows))


def run_variance(cfg, threads) -> Result:
    lams = _lams(cfg, "250,500,1000")
    n = cfg.get_int("experiment", "n", 1000, minimum=2)
    try:
        q = estimate_Q(_params(cfg, lams[0]), lams, n, threads)
    except ValueError as exc:
        raise ConfigError("[experiment] lams", str(exc)) from None
    check = cfg.choice("experiment", "check", {"none", "trend", "unit"}, "none")
    passed = True
    if check == "trend":
        passed = abs(q.relative_change) < 0.1 + 3.0 * q.relative_change_se
    elif check == "unit":
        passed = all(abs(r["ratio"] - 1.0) <= 3.0 * r["se"] for r in q.rows)
    summary = {"Q": q.Q, "Q_se": q.se, "slope": q.slope, "relative_change": q.relative_change,
               "relative_change_se": q.relative_change_se, "check": check}
    return Result([("", ["lam", "var", "ratio", "se", "mean"], q.rows)], summary, passed, len(q.rows))


def _probe_cfg(cfg) -> ProbeConfig:
    return ProbeConfig(
        m=cfg.get_int("experiment", "probe_m", 16, minimum=1),
        shells=cfg.get_int("experiment", "probe_shells", 3, minimum=0),
        r0=cfg.get_float("experiment", "probe_r0", positive=True),
        g=cfg.get_float("experiment", "probe_g", "1.1", positive=True),
    )


def run_stab(cfg, threads) -> Result:
    lam = _lam(cfg)
    n = cfg.get_int("experiment", "n", 500, minimum=1)
    sample = collect_radii(cfg.spec(), cfg.window(), lam, n, _seed(cfg), _probe_cfg(cfg), threads, cfg.r_max())
    try:
        fit = fit_decay(sample, min_samples=cfg.get_int("experiment", "min_samples", 100, minimum=2))
    except ValueError as exc:
        raise ConfigError("[experiment] n", f"decay fit failed: {exc}") from None
    radii_rows = [{"id": int(i), "radius": float(r), "rescaled": float(t), "censored": bool(c), "budget": int(b)}
                  for i, r, t, c, b in zip(sample.ids, sample.radii, sample.rescaled(), sample.censored, sample.budget)]
    tables = [("", ["t", "survival", "log_survival"], fit.rows()),
              (".radii", ["id", "radius", "rescaled", "censored", "budget"], radii_rows)]
    return Result(tables, fit.summary(), fit.alpha_hat > 0, len(fit.t))


def run_paircorr(cfg, threads) -> Result:
    lam = _lam(cfg)
    seps = cfg.get_floats("experiment", "separations", "0.02,0.05,0.1,0.15,0.2", positive=True)
    n = cfg.get_int("experiment", "n", 1000, minimum=2)
    try:
        tab = pair_correlation_decay(cfg.spec(), lam, seps, n, cfg.window(), _seed(cfg), threads, cfg.r_max())
    except ValueError as exc:
        raise ConfigError("[experiment] separations", str(exc)) from None
    ok = all(b <= a + 3.0 * math.hypot(sa, sb) for a, b, sa, sb in zip(tab.diff, tab.diff[1:], tab.se, tab.se[1:]))
    summary = {"beta_hat": tab.beta_hat, "n_reps": tab.n_reps, "nonincreasing_3se": ok}
    return Result([("", ["delta", "delta_rescaled", "abs_diff", "se"], tab.rows())], summary, ok, len(tab.diff))


def run_tail(cfg, threads) -> Result:
    b = _batch(cfg, threads)
    xs = cfg.get_floats("experiment", "thresholds", "0,5,10,15,20")
    est = tail_mc(b, xs)
    rows = [e.__dict__ for e in est]
    plot = [{"x": e.threshold, "value": e.p_hat, "lo": e.lo, "hi": e.hi} for e in est if e.tail == "upper"]
    tables = [("", ["threshold", "tail", "hits", "n", "p_hat", "lo", "hi"], rows),
              (".plot", ["x", "value", "lo", "hi"], plot)]
    return Result(tables, {"n": b.n, "mean": b.mean}, True, len(rows))


def run_ratio(cfg, threads) -> Result:
    law = cfg.choice("experiment", "law", {"poisson", "mc"}, "poisson")
    zs = cfg.get_floats("experiment", "thresholds", "0,0.5,1,1.5,2,2.5,3")
    lam = _lam(cfg)
    if law == "poisson":
        scale = cfg.get_float("experiment", "scale", "1")
        source = ExactPoisson(lam, scale)
        sigma = source.sigma
    else:
        source = _batch(cfg, threads)
        sigma = float(np.std(source.values, ddof=1))
    if not sigma > 0:
        raise ConfigError("[experiment] sigma", "zero variance")
    rows = deviation_ratio_table(source, sigma, [z * sigma for z in zs])
    for r in rows:
        r["x_over_sigma"] = r["x"] / sigma
    header = ["x", "x_over_sigma", "tail", "p", "lo", "hi", "normal", "log_ratio", "log_lo", "log_hi"]
    plot = [{"x": r["x_over_sigma"], "value": r["log_ratio"], "lo": r["log_lo"], "hi": r["log_hi"]}
            for r in rows if r["tail"] == "upper"]
    return Result([("", header, rows), (".plot", ["x", "value", "lo", "hi"], plot)], {"sigma": sigma, "law": law}, True, len(rows))


def run_rss_check(cfg, threads) -> Result:
    lams = _lams(cfg, "25,100,400")
    gamma = cfg.get_float("experiment", "gamma", "0", nonneg=True)
    K = cfg.get_int("experiment", "K", 8, minimum=3)
    delta_key = cfg.raw("experiment", "Delta", "sqrt_lam")
    law = cfg.choice("experiment", "law", {"poisson", "gaussian"}, "poisson")
    rss_rows, br_rows = [], []
    for lam in lams:
        if delta_key == "sqrt_lam":
            Delta = math.sqrt(lam)
        elif delta_key == "auto":
            Delta = None
        else:
            Delta = cfg.get_float("experiment", "Delta", positive=True)
        if cfg.raw("experiment", "ys") in (None, "auto"):
            D_eff = Delta if Delta is not None else math.sqrt(lam)
            ys = np.linspace(0.0, bounds.TailBoundParams(gamma, D_eff).Delta_gamma, 50, endpoint=False)
        else:
            ys = cfg.get_floats("experiment", "ys")
        try:
            rows, params = rss_conformance(lam, gamma, Delta, ys, K, law)
        except ValueError as exc:
            raise ConfigError("[experiment] Delta", str(exc)) from None
        for r in rows:
            rss_rows.append({"lam": lam, "Delta": params.Delta, "Delta_gamma": params.Delta_gamma, **r.__dict__})
        brows, D_br = br_conformance(lam, gamma, cfg.get_float("experiment", "H", "1", positive=True), None, None, K, law)
        for r in brows:
            br_rows.append({"lam": lam, "Delta": D_br, **r.__dict__})
    header = ["lam", "Delta", "Delta_gamma", "y", "tail", "value", "lower", "upper", "status"]
    rss_ok = all(r["status"] != "fail" for r in rss_rows)
    br_ok = all(r["status"] != "fail" for r in br_rows)
    summary = {"rss_pass": rss_ok, "br_pass": br_ok,
               "in_range_rows": sum(r["status"] == "pass" for r in rss_rows),
               "out_of_range_rows": sum(r["status"] == "out of range" for r in rss_rows)}
    tables = [("", header, rss_rows), (".br", ["lam", "Delta", "y", "tail", "value", "lower", "upper", "status"], br_rows)]
    return Result(tables, summary, rss_ok and br_ok, len(rss_rows))


def run_mdp_check(cfg, threads) -> Result:
    lams = _lams(cfg, "100,1000,10000")
    ts = cfg.get_floats("experiment", "ts", "1")
    d = cfg.window().d if cfg.has("window", "d") else 1
    eta = cfg.get_float("experiment", "eta", positive=True)
    schedule = AlphaSchedule(eta, d)
    law = cfg.choice("experiment", "law", {"poisson", "mc"}, "poisson")
    tol = cfg.get_float("experiment", "tol", "0.05", positive=True)
    try:
        if law == "poisson":
            c = float(cfg.spec().params.get("c", 1.0)) if cfg.spec().family == "constant" else None
            if c is None:
                raise ConfigError("[functional] family", "the exact oracle needs the constant functional")
            f = cfg.test_function()
            if f.kind != "constant":
                raise ConfigError("[test_function] kind", "the exact oracle needs a constant test function")
            rows = mdp_check(lams, ts, schedule, d, scale=c * f.value, Q=cfg.get_float("experiment", "Q", nonneg=True))
        else:
            n = cfg.get_int("experiment", "n", 1000, minimum=2)
            batches = {lam: run_replications(_params(cfg, lam), n, threads) for lam in lams}
            Q = cfg.get_float("experiment", "Q", nonneg=True)
            Q_se = cfg.get_float("experiment", "Q_se", "0", nonneg=True)
            if Q is None:
                Q, Q_se = _variance_ratio(batches[lams[-1]])
            rows = mdp_check(lams, ts, schedule, d, batches, Q, Q_se,
                             mc_floor=cfg.get_int("experiment", "mc_floor", 100, minimum=0))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("[experiment] eta", str(exc)) from None
    t_check = 1.0 if 1.0 in ts else next((t for t in ts if t != 0), ts[0])
    v = mdp_verdict(rows, t_check, tol)
    out = [{**r.__dict__, "gap": r.gap} for r in rows]
    header = ["lam", "alpha", "t", "value", "lo", "hi", "target", "target_lo", "target_hi", "gap", "flag"]
    plot = [{"x": r.lam, "value": r.value, "lo": r.lo, "hi": r.hi} for r in rows if r.t == t_check]
    summary = {"eta": schedule.exponent, "t_checked": t_check, "tol": tol, **v}
    return Result([("", header, out), (".plot", ["x", "value", "lo", "hi"], plot)], summary, v["pass"], len(out))


RUNNERS = {
    "simulate": (run_simulate, _defaults(lam=50, n=1000)),
    "cumulants": (run_cumulants, _defaults(lam=50, n=1000, K=4, variant="k-statistics")),
    "variance": (run_variance, _defaults(lams="250,500,1000", n=1000)),
    "stab": (run_stab, _defaults(lam=500, n=500)),
    "paircorr": (run_paircorr, _defaults(lam=500, n=1000)),
    "tail": (run_tail, _defaults(lam=50, n=1000)),
    "ratio": (run_ratio, _defaults(lam=100, law="poisson")),
    "rss-check": (run_rss_check, _defaults(lams="25,100,400", gamma=0)),
    "mdp-check": (run_mdp_check, {**_defaults(lams="100,1000,10000", ts="1", eta=0.05), "window": {"d": "1", "topology": "torus", "sides": "1"}}),
}

HELP = {
    "simulate": "draw replications of Y = <f, mu> and write the batch",
    "cumulants": "estimate cumulants of Y with jackknife standard errors",
    "variance": "sigma^2/lam across a lam grid and its extrapolated limit",
    "stab": "estimate radii of stabilization and fit their exponential decay",
    "paircorr": "two-point clustering |m(v1,v2) - m(v1) m(v2)| against separation",
    "tail": "Monte Carlo tail probabilities with Wilson 99% intervals",
    "ratio": "deviation ratios P(Y >= x)/(1 - Phi(x/sigma)), exact or Monte Carlo",
    "rss-check": "exact Poisson tails against the RSS band and the BR bound",
    "mdp-check": "-(1/alpha^2) log P against the Gaussian rate t^2/(2Q)",
    "bounds-eval": "evaluate one closed-form bound with explicit numeric flags",
    "rate-eval": "evaluate the scalar or measure MDP rate function",
}


# --- closed-form evaluators ----------------------------------------------


def run_bounds_eval(a) -> Result:
    w = a.what
    if w == "theorem1":
        val = {"rhs": bounds.theorem1_rhs(a.x, a.lam, a.d, a.C2), "x_max": bounds.theorem1_range(a.lam, a.d, a.C1)}
    elif w == "theorem1-part2":
        val = {"rhs": bounds.theorem1_part2_rhs(a.x, a.lam, a.d, a.sigma2, a.C4, a.C5, a.C6)}
    elif w == "delta-gamma":
        val = {"Delta_gamma": bounds.TailBoundParams(a.gamma, a.Delta, a.H).Delta_gamma}
    elif w == "rss":
        env = bounds.rss_envelope(a.y, bounds.TailBoundParams(a.gamma, a.Delta, a.H))
        val = env._asdict()
    elif w == "rss-condition":
        if not a.cumulants:
            raise ConfigError("--cumulants", "give c_3,...,c_K")
        val = {"Delta": bounds.rss_cumulant_condition(a.cumulants, a.gamma)}
    elif w == "br":
        val = {"bound": bounds.br_bound(a.y, a.gamma, a.H, a.Delta)}
    elif w == "mills":
        lo, mid, hi = bounds.mills_envelope(a.y)
        val = {"lower": lo, "value": mid, "upper": hi}
    else:  # phi
        val = bounds.phi_tail(a.y)._asdict()
    row = {"what": w, **{k: float(v) for k, v in val.items()}}
    return Result([("", list(row), [row])], row, True, 1)


def run_rate_eval(a) -> Result:
    if a.rho_csv:
        import csv

        with open(a.rho_csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            rho = [float(r["rho"]) for r in rows]
            ref = [float(r["reference"]) for r in rows]
            wts = [float(r["weight"]) for r in rows]
        except (KeyError, ValueError) as exc:
            raise ConfigError("--rho-csv", f"need numeric columns rho, reference, weight ({exc})") from None
        val = bounds.mdp_rate_measure(rho, ref, wts)
        row = {"kind": "measure", "rate": val}
    else:
        if a.t is None or a.Q is None:
            raise ConfigError("--t/--Q", "scalar rate needs both --t and --Q (or --rho-csv)")
        row = {"kind": "scalar", "t": a.t, "Q": a.Q, "rate": bounds.mdp_rate_scalar(a.t, a.Q)}
    return Result([("", list(row), [row])], row, True, 1)


# --- argument parsing ----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: usage error: {message}\n")


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an unsigned 64-bit integer: {text!r}") from None
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64 - 1]")
    return v


def _pos_int(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _float_list(text: str) -> list:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None


def _pct(text: str) -> str:
    # argparse %-formats help strings
    return text.replace("%", "%%")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment config (sections: experiment, functional, window, intensity, test_function)")
    common.add_argument("--seed", type=_u64, metavar="U64", help="master seed; overrides [experiment] seed")
    common.add_argument("--threads", type=_pos_int, default=1, metavar="N", help="worker threads (results do not depend on it)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    p = _Parser(prog="stabdev", description="Simulation and verification toolkit for stabilizing functionals of Poisson processes.",
                epilog="Exit codes: 0 success, 2 verdict failure, 1 usage/config error.")
    sub = p.add_subparsers(dest="cmd", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name in RUNNERS:
        sub.add_parser(name, parents=[common], help=_pct(HELP[name]), description=HELP[name])

    b = sub.add_parser("bounds-eval", parents=[common], help=HELP["bounds-eval"], description=HELP["bounds-eval"])
    b.add_argument("--what", required=True,
                   choices=["theorem1", "theorem1-part2", "delta-gamma", "rss", "rss-condition", "br", "mills", "phi"])
    for name, default in (("x", 0.0), ("y", 0.0), ("lam", 1.0), ("gamma", 0.0), ("Delta", 1.0), ("H", 1.0),
                          ("sigma2", 1.0), ("C1", 1.0), ("C2", 1.0), ("C4", 1.0), ("C5", 1.0), ("C6", 1.0)):
        b.add_argument(f"--{name}", type=float, default=default)
    b.add_argument("--d", type=_pos_int, default=1)
    b.add_argument("--cumulants", type=_float_list, help="c_3,...,c_K for rss-condition")

    r = sub.add_parser("rate-eval", parents=[common], help=HELP["rate-eval"], description=HELP["rate-eval"])
    r.add_argument("--t", type=float)
    r.add_argument("--Q", type=float)
    r.add_argument("--rho-csv", metavar="PATH", help="CSV with columns rho, reference, weight (measure rate)")
    return p


def _flag_config(a) -> ExperimentConfig:
    skip = {"cmd", "config", "threads", "out"}
    kv = {k: ("" if v is None else ",".join(map(repr, v)) if isinstance(v, list) else str(v))
          for k, v in sorted(vars(a).items()) if k not in skip}
    return ExperimentConfig({"flags": kv})


def _write(out_dir: Path, cmd: str, res: Result, cfg: ExperimentConfig, seed, wall: float) -> dict:
    for suffix, header, rows in res.tables:
        io.write_csv(out_dir / f"{cmd}{suffix}.csv", header, rows)
    digest = cfg.digest()
    (out_dir / f"{cmd}.config.txt").write_bytes(cfg.canonical().encode("utf-8"))
    v = verdict(cmd, res.passed, res.rows, seed, digest, summary=res.summary)
    io.write_json(out_dir / f"{cmd}.json", v)
    io.write_json(out_dir / f"{cmd}.timing.json", {"experiment": cmd, "wall_time_s": wall})
    return v


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out_dir = Path(a.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    t0 = time.perf_counter()
    try:
        if a.cmd in RUNNERS:
            runner, defaults = RUNNERS[a.cmd]
            user = ExperimentConfig.from_file(a.config) if a.config else ExperimentConfig()
            cfg = user.merged(defaults)
            if a.seed is not None:
                cfg.set("experiment", "seed", a.seed)
            elif not cfg.has("experiment", "seed"):
                cfg.set("experiment", "seed", 0)
            cfg.validate_keys()
            seed = _seed(cfg)
            res = runner(cfg, a.threads)
        else:
            cfg = _flag_config(a)
            seed = a.seed
            res = run_bounds_eval(a) if a.cmd == "bounds-eval" else run_rate_eval(a)
    except (ConfigError, ValueError) as exc:
        msg = str(exc)
        if not isinstance(exc, ConfigError):
            msg = f"config error: {msg}"
        print(f"stabdev {a.cmd}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        v = _write(out_dir, a.cmd, res, cfg, seed, time.perf_counter() - t0)
    except OSError as exc:
        print(f"stabdev {a.cmd}: cannot write outputs to {out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    status = "PASS" if v["pass"] else "FAIL"
    print(f"{a.cmd}: {status} ({v['rows']} rows) -> {out_dir}")
    if a.cmd in ("rss-check", "mdp-check", "ratio"):
        print(f"note: {REPORT_SCOPE}")
    return EXIT_OK if v["pass"] else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
