"""Command-line interface: ``clusterinf {fit,test,diagnose,leveltest,ri,simulate}``.

Settings come from an optional INI file (``--config``; any section, keys
named like the long flags) and are overridden by command-line flags.
Exit status: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import re
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from ._parallel import default_threads
from .core import CrossedPartition, DataError, build_partition
from .crve import cv1, cv2, cv3, hc1, t_test, twoway_cv1, wald_test
from .datasets import example_path
from .diagnostics import diagnose, size_summary
from .estimation import RankDeficiencyError, Restriction, fit_ols
from .io import build_dataset, canonical_json, partition_from, read_table
from .level_tests import score_variance_test
from .randomization import TreatmentSpec, ri_test
from .simulation import METHODS, DGPSpec, cluster_sizes, run_size_experiment
from .wild import BootstrapError, wcr_test, wcu_test


class ConfigError(DataError):
    """Invalid configuration file or option combination."""


DEFAULTS = {
    "seed": 0, "boot_reps": 9999, "aux": None, "studentize": "cv1", "format": "json",
    "null": 0.0, "methods": "HC1,CV1,CV3,WCR", "kind": "beta", "one_sided": False,
    "reps": 1000, "level": 0.05, "G": 50, "size": 20, "size_pattern": "equal",
    "dgp": "random_effects", "lam": 1.0, "lam_sd": 0.0, "omega": 1.0, "rho": 0.5,
    "delta": 0.5, "periods": 10, "regressor": "cluster_normal", "dominant_share": 0.5,
    "sim_methods": "HC1,CV1,CV3,WCR", "sim_boot_reps": 399,
}


def _csv_list(s: str | None) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()] if s else []


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="INI file with default settings")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads (output does not depend on it)")
    p.add_argument("--format", choices=["json", "text"], help="report format (default json)")
    p.add_argument("--output", help="write the report here instead of stdout")
    if data:
        p.add_argument("--data", help="CSV file with a header row (default: bundled example)")
        p.add_argument("--outcome", help="outcome column")
        p.add_argument("--regressors", help="comma-separated regressor columns")
        p.add_argument("--dummies", help="categorical columns expanded to indicators")
        p.add_argument("--absorb", help="fixed-effect column partialled out (replaces the intercept)")
        p.add_argument("--boot-reps", type=int, help="bootstrap replicates (default 9999)")
        p.add_argument("--aux", choices=["rademacher", "webb"], help="wild bootstrap weights")
        p.add_argument("--studentize", choices=["cv1", "cv3"], help="bootstrap studentization")
        p.add_argument("--csv", help="write per-cluster or per-replicate arrays here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterinf",
                                     description="Cluster-robust inference for linear regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("fit", "test"):
        p = sub.add_parser(name, help="estimate and test a coefficient under several methods")
        _common(p)
        p.add_argument("--cluster", action="append",
                       help="clustering level: a column, 'a,b' for two-way, or 'none'; repeatable")
        p.add_argument("--coef", help="coefficient to test")
        p.add_argument("--null", type=float, help="hypothesised value (default 0)")
        p.add_argument("--methods", help="comma list from HC1,CV1,CV2,CV3,WCR,WCU")
        p.add_argument("--wald", help="comma list of coefficients jointly tested equal to zero")

    p = sub.add_parser("diagnose", help="leverage, partial leverage and influence")
    _common(p)
    p.add_argument("--cluster", action="append", help="clustering column")
    p.add_argument("--coef", help="coefficient of interest")
    p.add_argument("--edf-csv", help="write sorted leverage shares for EDF plots")

    p = sub.add_parser("leveltest", help="score-variance test of fine against coarse clustering")
    _common(p)
    p.add_argument("--fine", help="fine clustering column or 'none'")
    p.add_argument("--coarse", help="coarse clustering column")
    p.add_argument("--coef", help="coefficient of interest")

    p = sub.add_parser("ri", help="randomization inference for a cluster-level treatment")
    _common(p)
    p.add_argument("--cluster", action="append", help="treatment-assignment clusters")
    p.add_argument("--treatment", help="0/1 treatment column")
    p.add_argument("--period", help="period column for staggered (DiD) treatment")
    p.add_argument("--kind", choices=["beta", "t"], help="statistic (default beta)")
    p.add_argument("--one-sided", action="store_const", const=True,
                   help="upper-tail instead of two-sided P values")

    p = sub.add_parser("simulate", help="Monte Carlo rejection frequencies")
    _common(p, data=False)
    p.add_argument("--dgp", choices=["iid", "random_effects", "factor", "ar1_placebo"])
    p.add_argument("--G", type=int, dest="G")
    p.add_argument("--size", type=int)
    p.add_argument("--size-pattern", choices=["equal", "lognormal", "one_dominant"])
    p.add_argument("--dominant-share", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--lam-sd", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--regressor", choices=["cluster_normal", "cluster_dummy", "obs_normal", "ar1"])
    p.add_argument("--sim-methods", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--reps", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--sim-boot-reps", type=int)
    p.add_argument("--csv", help="write the rejection table as CSV")
    return parser


# --------------------------------------------------------------------------- config merge


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise ConfigError(f"unknown command {command}")


def _read_config(path: str, sp: argparse.ArgumentParser) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
        cp.read_string(text, source=path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    lines = text.splitlines()

    def where(key):
        pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]")
        for i, ln in enumerate(lines, 1):
            if pat.match(ln):
                return f"{path}:{i}"
        return path

    actions = {a.dest: a for a in sp._actions}
    out = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in actions or dest in ("config", "help"):
                raise ConfigError(f"{where(key)}: unknown setting {key!r} in [{section}]")
            act = actions[dest]
            try:
                if isinstance(act, argparse._StoreConstAction):
                    val = cp.getboolean(section, key)
                elif act.type is not None:
                    val = act.type(raw)
                else:
                    val = raw
            except ValueError:
                raise ConfigError(f"{where(key)}: invalid value {raw!r} for {key!r}") from None
            if act.choices is not None and val not in act.choices:
                raise ConfigError(f"{where(key)}: {key!r} must be one of {list(act.choices)}")
            if isinstance(act, argparse._AppendAction):
                val = [v.strip() for v in raw.split(";") if v.strip()]
            out[dest] = val
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    conf = _read_config(args.config, _subparser(parser, args.command)) if args.config else {}
    for dest, value in vars(args).items():
        if value is None:
            if dest in conf:
                setattr(args, dest, conf[dest])
            elif dest in DEFAULTS:
                setattr(args, dest, DEFAULTS[dest])
    if args.threads is None:
        args.threads = default_threads()
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return args


# --------------------------------------------------------------------------- commands


def _load(args, extra=()):
    path = args.data or str(example_path())
    if not args.outcome:
        raise ConfigError("--outcome is required")
    regs = _csv_list(args.regressors)
    dums = _csv_list(args.dummies)
    needed = [args.outcome, *regs, *dums, *[c for c in extra if c]]
    if args.absorb:
        needed.append(args.absorb)
    df = read_table(path, needed + _cluster_columns(args))
    data = build_dataset(df, args.outcome, regs, dummy_cols=dums, absorb=args.absorb)
    return df, data


def _cluster_columns(args) -> list[str]:
    cols = []
    for spec in getattr(args, "cluster", None) or []:
        cols += [c for c in _csv_list(spec) if c.lower() != "none"]
    for name in ("fine", "coarse", "period", "treatment"):
        v = getattr(args, name, None)
        if v and v.lower() != "none":
            cols.append(v)
    return cols


def _sizes(part) -> dict:
    s = size_summary(part)
    return {"G": s.G, "N": s.N, "sizes": {k: v for k, v in s.as_dict().items()
                                          if k not in ("G", "N")}}


def _contrast(data, coef: str) -> np.ndarray:
    a = np.zeros(data.k)
    a[data.column(coef)] = 1.0
    return a


def cmd_fit(args) -> dict:
    if not args.coef:
        raise ConfigError("--coef is required")
    df, data = _load(args)
    methods = [m.upper() for m in _csv_list(args.methods)]
    if not methods:
        raise ConfigError("at least one method is required")
    allowed = {"HC1", "CV1", "CV2", "CV3", "WCR", "WCU"}
    bad = [m for m in methods if m not in allowed]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {sorted(allowed)}")
    j = data.column(args.coef)
    a = _contrast(data, args.coef)
    wald_cols = _csv_list(args.wald)
    wald_rest = None
    if wald_cols:
        R = np.vstack([_contrast(data, c) for c in wald_cols])
        wald_rest = Restriction(R, np.zeros(len(wald_cols)))
    rest = Restriction.single(data.k, j, args.null)
    levels = args.cluster or ["none"]
    out_levels = []
    for spec in levels:
        part = partition_from(df, spec)
        rows, wald_rows = [], []
        if isinstance(part, CrossedPartition):
            fa = fit_ols(data, part.dim_a)
            fb, fab = fa.recluster(part.dim_b), fa.recluster(part.intersection)
            cov = twoway_cv1(fa, fb, fab)
            tr = t_test(fa, cov, a, args.null)
            rows.append({"method": "TwoWayCV1", "se": tr.std_error, "statistic": tr.statistic,
                         "dof": cov.dof, "p_value": tr.p_value, "psd": cov.psd_flag})
            other = [m for m in methods if m not in ("CV1", "HC1")]
            if other:
                raise ConfigError(f"two-way clustering supports only CV1; got {other}")
            info = {"cluster": spec, "dim_a": _sizes(part.dim_a), "dim_b": _sizes(part.dim_b),
                    "G": part.dim_a.g_count, "H": part.dim_b.g_count, "N": data.n_obs}
            out_levels.append({**info, "rows": rows})
            continue
        clustered = part.g_count < data.n_obs
        fit = fit_ols(data, part)
        for m in methods:
            if m != "HC1" and clustered and part.g_count < 2:
                raise ConfigError(f"{m} needs at least two clusters; {spec!r} has {part.g_count}")
            if m in ("HC1", "CV1", "CV2", "CV3"):
                cov = {"HC1": hc1, "CV1": cv1, "CV2": cv2, "CV3": cv3}[m](fit)
                tr = t_test(fit, cov, a, args.null)
                rows.append({"method": m, "se": tr.std_error, "statistic": tr.statistic,
                             "dof": cov.dof, "p_value": tr.p_value})
                if wald_rest is not None:
                    wr = wald_test(fit, cov, wald_rest)
                    wald_rows.append({"method": m, "statistic": wr.statistic,
                                      "dof": list(wr.dof), "p_value": wr.p_value})
            else:
                fn = wcr_test if m == "WCR" else wcu_test
                br = fn(fit, rest, aux=args.aux, B=args.boot_reps, seed=args.seed,
                        studentize=args.studentize, threads=args.threads)
                rows.append({"method": m, "statistic": br.tau, "p_value": br.p_symmetric,
                             "p_equal_tail": br.p_equal_tail, "B": br.B,
                             "enumerated": br.enumerated, "aux": br.aux,
                             "studentization": br.studentization})
                if args.csv and spec == levels[0]:
                    br.to_csv(args.csv)
                if wald_rest is not None:
                    wb = fn(fit, wald_rest, aux=args.aux, B=args.boot_reps, seed=args.seed,
                            studentize=args.studentize, threads=args.threads)
                    wald_rows.append({"method": m, "statistic": wb.tau, "p_value": wb.p_upper,
                                      "B": wb.B})
        entry = {"cluster": spec, **_sizes(part), "rows": rows}
        if wald_rows:
            entry["wald"] = {"coefficients": wald_cols, "rows": wald_rows}
        out_levels.append(entry)
    beta = fit_ols(data, build_partition(np.zeros(data.n_obs))).beta
    return {"command": "fit", "N": data.n_obs, "k": data.k, "coef": args.coef,
            "null": args.null, "estimate": float(beta[j]),
            "coefficients": dict(zip(data.names, beta.tolist())),
            "dropped": list(data.dropped), "seed": args.seed, "levels": out_levels}


def cmd_diagnose(args) -> dict:
    if not args.coef:
        raise ConfigError("--coef is required")
    if not args.cluster or len(args.cluster) != 1:
        raise ConfigError("diagnose needs exactly one --cluster column")
    df, data = _load(args)
    part = partition_from(df, args.cluster[0])
    if isinstance(part, CrossedPartition):
        raise ConfigError("diagnose takes a single clustering dimension")
    rep = diagnose(fit_ols(data, part), args.coef)
    if args.csv:
        rep.to_csv(args.csv)
    if args.edf_csv:
        rep.edf_frame().to_csv(args.edf_csv, index=False, float_format="%.10g")
    out = rep.as_dict()
    out["clusters"] = rep.to_frame().to_dict(orient="list")
    return {"command": "diagnose", **out, "sizes": _sizes(part)["sizes"]}


def cmd_leveltest(args) -> dict:
    if not args.coarse:
        raise ConfigError("--coarse is required")
    if not args.coef:
        raise ConfigError("--coef is required")
    df, data = _load(args)
    fine = partition_from(df, args.fine or "none")
    coarse = partition_from(df, args.coarse)
    fit = fit_ols(data, coarse)
    res = score_variance_test(fit, fine, coarse, data.column(args.coef), B=args.boot_reps,
                              seed=args.seed, threads=args.threads)
    return {"command": "leveltest", "coef": args.coef, "fine": args.fine or "none",
            "coarse": args.coarse, "N": data.n_obs, "G": coarse.g_count,
            "fine_sizes": _sizes(fine), "coarse_sizes": _sizes(coarse), **res.as_dict()}


def cmd_ri(args) -> dict:
    if not args.treatment:
        raise ConfigError("--treatment is required")
    if not args.outcome:
        raise ConfigError("--outcome is required")
    if not args.cluster or len(args.cluster) != 1:
        raise ConfigError("ri needs exactly one --cluster column")
    regs = [c for c in _csv_list(args.regressors) if c != args.treatment]
    dums = _csv_list(args.dummies)
    needed = [args.outcome, args.treatment, *regs, *dums, *_cluster_columns(args)]
    if args.absorb:
        needed.append(args.absorb)
    df = read_table(args.data or str(example_path()), needed)
    part = partition_from(df, args.cluster[0])
    if isinstance(part, CrossedPartition):
        raise ConfigError("ri takes a single clustering dimension")
    # fixed effects are absorbed inside ri_test, after each treatment rebuild
    data = build_dataset(df, args.outcome, regs + [args.treatment], dummy_cols=dums,
                         constant=args.absorb is None)
    absorb = build_partition(df[args.absorb].to_numpy()) if args.absorb else None
    d = data.regressors[:, data.column(args.treatment)]
    if not np.all((d == 0) | (d == 1)):
        raise ConfigError(f"treatment column {args.treatment!r} must be 0/1")
    treated = tuple(np.flatnonzero(part.cluster_sum(d) > 0).tolist())
    period = start = None
    if args.period:
        period = pd.factorize(df[args.period], sort=True)[0]
        start = tuple(int(period[(part.codes == g) & (d == 1)].min()) for g in treated)
    spec = TreatmentSpec(args.treatment, treated, period, start)
    res = ri_test(data, part, spec, statistic_kind=args.kind, B=args.boot_reps, seed=args.seed,
                  two_sided=not args.one_sided, absorb=absorb, threads=args.threads)
    if args.csv:
        res.to_csv(args.csv)
    return {"command": "ri", "treatment": args.treatment, "N": data.n_obs, **_sizes(part),
            "G1": len(treated), "kind": res.statistic_kind, "observed": res.observed,
            "S": res.S, "enumerated": res.enumerated, "p1": res.p1, "p2": res.p2,
            "two_sided": res.two_sided, "skipped": res.skipped,
            "assignments": res.total_assignments, "notes": list(res.notes)}


def cmd_simulate(args) -> dict:
    spec = DGPSpec(kind=args.dgp, G=args.G, size=args.size, size_pattern=args.size_pattern,
                   dominant_share=args.dominant_share, lam=args.lam, lam_sd=args.lam_sd,
                   omega=args.omega, rho=args.rho, delta=args.delta, periods=args.periods,
                   regressor=args.regressor)
    methods = [m.upper() for m in _csv_list(args.sim_methods)]
    rep = run_size_experiment(spec, methods, args.level, args.reps, args.seed,
                              boot_reps=args.sim_boot_reps, threads=args.threads)
    if args.csv:
        rep.to_frame().to_csv(args.csv, index=False, float_format="%.6g")
    out = {"command": "simulate", **rep.as_dict()}
    sizes = cluster_sizes(spec)
    out["G"] = spec.G
    out["N"] = int(sizes.sum())
    out["sizes"] = {"min": int(sizes.min()), "median": float(np.median(sizes)),
                    "max": int(sizes.max()), "mean": float(sizes.mean())}
    return out


COMMANDS = {"fit": cmd_fit, "test": cmd_fit, "diagnose": cmd_diagnose,
            "leveltest": cmd_leveltest, "ri": cmd_ri, "simulate": cmd_simulate}


# --------------------------------------------------------------------------- text output


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_text(report: dict) -> str:
    lines = [f"clusterinf {report.get('command', '')}"]
    for key in ("N", "G", "coef", "estimate", "tau", "theta_hat", "p_asymptotic",
                "p_bootstrap", "observed", "p1", "p2", "S", "V_s", "g_star0"):
        if key in report:
            lines.append(f"  {key:<14}{_fmt(report[key])}")
    if "sizes" in report and isinstance(report["sizes"], dict):
        lines.append("  sizes         " + " ".join(f"{k}={_fmt(v)}" for k, v in
                                                   sorted(report["sizes"].items())))
    for lev in report.get("levels", []):
        lines.append(f"\n  clustering: {lev['cluster']}  G={lev.get('G')}  N={lev.get('N')}")
        if "sizes" in lev:
            lines.append("    sizes " + " ".join(f"{k}={_fmt(v)}" for k, v in
                                                 sorted(lev["sizes"].items())))
        lines.append(f"    {'method':<10}{'se':>12}{'stat':>12}{'P':>12}")
        for r in lev["rows"]:
            lines.append(f"    {r['method']:<10}{_fmt(r.get('se', '')):>12}"
                         f"{_fmt(r['statistic']):>12}{_fmt(r['p_value']):>12}")
    for r in report.get("results", []):
        lines.append(f"  {r['method']:<10}{_fmt(r['rejection_pct']):>10}%  "
                     f"(MC se {_fmt(r['mc_se_pct'])})")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        report = COMMANDS[args.command](args)
        text = canonical_json(report) if args.format == "json" else render_text(report)
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RankDeficiencyError, BootstrapError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
