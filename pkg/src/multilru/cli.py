"""Command-line front end.

Subcommands: ``coverage`` (coverage-number laws), ``simulate`` (replicated
experiments and sweeps), ``analyze`` (Che-like curves and the upper bound)
and ``compare`` (join a simulation table with an analytic one). Every
command writes plot-ready CSV plus a ``manifest.json`` into ``--out``.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytics import (build_surface_model, che_multi_all_hit, che_multi_one_hit, che_single_hit,
                        solve_characteristic_time, two_cache_hit, union_surface_monte_carlo)
from .engine import ExperimentConfig, coverage_profile_for, run_sweep
from .geometry import CoverageProfile, coverage_profile_lattice, coverage_profile_ppp_boolean
from .policies import Policy, hit_upper_bound
from .results import ANALYTIC_COLUMNS, SWEEP_COLUMNS, RunManifest, read_rows_csv, write_json, write_rows_csv
from .traffic import Catalogue, zipf_popularities

OUT_ENV = "MULTILRU_OUT"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class ConfigError(Exception):
    """Bad configuration file entry; the message carries ``file:line``."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(kind=float):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not v > 0 or not math.isfinite(v):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    conv.__name__ = f"positive {kind.__name__}"
    return conv


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    p.add_argument("--replications", type=_positive(int), default=None, help="replications per point")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./results)")


# ---------------------------------------------------------------- coverage

def cmd_coverage(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    rows, summary = [], []
    for rb in args.rb:
        if args.kind == "ppp":
            prof = coverage_profile_ppp_boolean(args.lambda_b, rb, args.max_coverage)
        else:
            prof = coverage_profile_lattice(args.lambda_b, rb, args.max_coverage, n_samples=args.samples,
                                            rng=np.random.default_rng(seed))
        rows.extend({"R_b": rb, "m": m, "p_m": float(p)} for m, p in enumerate(prof.pmf))
        summary.append({"R_b": rb, "N_bs_mean": prof.mean})
        print(f"{args.kind} lambda_b={args.lambda_b:g} R_b={rb:g}  N_bs_mean={prof.mean:.4f}  p_0={prof.pmf[0]:.4f}")
    paths = [write_rows_csv(rows, out / f"coverage_{args.kind}.csv", ("R_b", "m", "p_m")),
             write_rows_csv(summary, out / f"coverage_{args.kind}_summary.csv", ("R_b", "N_bs_mean"))]
    cfg = {"kind": args.kind, "lambda_b": args.lambda_b, "rb": list(args.rb), "max_coverage": args.max_coverage,
           "samples": args.samples}
    RunManifest("coverage", cfg, [seed] if args.kind == "lattice" else []).finish(paths, out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

# (section, key) -> (ExperimentConfig field or pseudo-field, converter)
CONFIG_KEYS = {
    ("geometry", "kind"): ("geometry", str),
    ("geometry", "lambda_b"): ("intensity", float),
    ("geometry", "radius"): ("radius", float),
    ("geometry", "width"): ("width", float),
    ("geometry", "height"): ("height", float),
    ("geometry", "margin"): ("margin", float),
    ("geometry", "profile_samples"): ("profile_samples", int),
    ("traffic", "kind"): ("traffic", str),
    ("traffic", "user_intensity"): ("user_intensity", float),
    ("traffic", "duration"): ("duration", float),
    ("traffic", "requests"): ("requests", float),
    ("traffic", "catalogue_size"): ("catalogue_size", int),
    ("traffic", "zipf_exponent"): ("zipf_exponent", float),
    ("traffic", "birth_rate"): ("birth_rate", float),
    ("traffic", "mean_lifespan"): ("mean_lifespan", float),
    ("traffic", "request_rate"): ("request_rate", float),
    ("traffic", "days"): ("temporal_days", float),
    ("traffic", "lifespan"): ("lifespan", str),
    ("traffic", "lifespan_shape"): ("lifespan_shape", float),
    ("policy", "policies"): ("policies", str),
    ("policy", "q"): ("q", float),
    ("policy", "one_update"): ("one_update", str),
    ("policy", "capacity"): ("capacity", int),
    ("policy", "alpha"): ("alpha", float),
    ("policy", "gfi_probes"): ("gfi_probes", int),
    ("engine", "replications"): ("replications", int),
    ("engine", "seed"): ("seed", int),
    ("engine", "warmup"): ("warmup", float),
    ("sweep", "variable"): ("sweep", str),
    ("sweep", "values"): ("values", str),
}


def _line_of(lines: Sequence[str], section: str, key: Optional[str] = None) -> int:
    current = None
    for no, line in enumerate(lines, start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
            if m and m.group(1).strip().lower() == key:
                return no
    return 0


def load_config_file(path) -> dict:
    """Read an INI-style experiment file into a flat ``{field: value}`` dict.

    Raises :class:`ConfigError` with ``file:line`` context on unknown
    sections or keys and on values that do not convert.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}: cannot parse {line.strip()!r}; expected 'key = value'") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{path}:{lineno}" if lineno else str(path)
        raise ConfigError(f"{where}: {exc.message.splitlines()[0]}") from None
    sections = {s for s, _ in CONFIG_KEYS}
    out = {}
    for section in cp.sections():
        sec = section.lower()
        if sec not in sections:
            raise ConfigError(f"{path}:{_line_of(lines, sec)}: unknown section [{section}]; "
                              f"expected one of {', '.join(sorted(sections))}")
        for key, raw in cp.items(section):
            where = f"{path}:{_line_of(lines, sec, key)}"
            if (sec, key) not in CONFIG_KEYS:
                known = sorted(k for s, k in CONFIG_KEYS if s == sec)
                raise ConfigError(f"{where}: unknown key '{key}' in [{section}]; expected one of {', '.join(known)}")
            name, conv = CONFIG_KEYS[(sec, key)]
            try:
                out[name] = conv(raw.strip())
            except ValueError:
                raise ConfigError(f"{where}: [{section}] {key} = {raw!r} is not a valid {conv.__name__}") from None
            out.setdefault("_where", {})[name] = where
    return out


def _split_list(text: str) -> list[str]:
    return [t for t in re.split(r"[,\s]+", text.strip()) if t]


def _policy_text(text: str, q: Optional[float]) -> str:
    """Canonical ``name[:q]``; a global ``q`` applies to q-variants without their own."""
    pol = Policy.parse(text)
    if q is not None and ":" not in text and pol.name in ("q-lru", "q-multi-all"):
        pol = Policy(pol.name, q, pol.one_update)
    return pol.name if pol.q == 1.0 else f"{pol.name}:{pol.q:g}"


def _experiment_from(args, file_values: dict):
    """Merge defaults, file values and CLI flags; returns (config, sweep, values, policies)."""
    vals = dict(file_values)
    where = vals.pop("_where", {})
    flag_map = {
        "geometry": args.geometry, "intensity": args.lambda_b, "capacity": args.capacity, "alpha": args.alpha,
        "zipf_exponent": args.zipf, "catalogue_size": args.catalogue_size, "user_intensity": args.user_intensity,
        "requests": args.requests, "traffic": args.traffic, "warmup": args.warmup, "one_update": args.one_update,
        "seed": args.seed, "replications": args.replications, "q": args.q, "margin": args.margin,
        "width": args.width, "height": args.height,
    }
    for k, v in flag_map.items():
        if v is not None:
            vals[k] = v
            where.pop(k, None)
    file_policies, file_sweep = vals.pop("policies", ""), vals.pop("sweep", None)
    policies = args.policies or _split_list(file_policies) or None
    sweep = args.sweep or file_sweep
    values = args.values
    if values is None and "values" in vals:
        try:
            values = [float(v) for v in _split_list(vals["values"])]
        except ValueError:
            raise ConfigError(f"{where.get('values', 'config')}: sweep values must be numbers") from None
    vals.pop("values", None)
    if args.rb:
        if sweep not in (None, "radius", "R_b"):
            raise UsageError("--rb cannot be combined with a sweep over another variable")
        if len(args.rb) == 1 and sweep is None:
            vals["radius"] = args.rb[0]
        else:
            sweep, values = "radius", list(args.rb)
    requests = vals.pop("requests", None)
    q = vals.pop("q", None)
    if "capacity" in vals and args.alpha is not None and args.capacity is None:
        vals.pop("capacity")
    try:
        cfg = ExperimentConfig(**vals)
        if requests is not None:
            cfg = cfg.replace(duration=float(requests) / (cfg.user_intensity * cfg.width * cfg.height))
        policies = [_policy_text(p, q) for p in (policies or [cfg.policy])]
    except (TypeError, ValueError) as exc:
        bad = next((where[k] for k in where if k in str(exc)), None)
        raise ConfigError(f"{bad + ': ' if bad else ''}{exc}") from None
    if sweep is None:
        sweep, values = "radius", [cfg.radius]
    if values is None or not len(values):
        raise UsageError(f"sweep over {sweep!r} needs values (--values or [sweep] values)")
    return cfg, sweep, list(values), policies


def cmd_simulate(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    cfg, sweep, values, policies = _experiment_from(args, file_values)
    out = _out_dir(args)
    rows = run_sweep(cfg, sweep, values, policies)
    for r in rows:
        print(f"{sweep}={r['sweep_value']:<8g} N_bs={r['N_bs_mean']:.3f}  {r['policy']:<22s} "
              f"p_hit={r['p_hit_mean']:.4f} +/- {r['ci95']:.4f}")
    paths = [write_rows_csv(rows, out / "sweep.csv", SWEEP_COLUMNS), write_json(rows, out / "sweep.json")]
    seeds = sorted({r["seed"] + i for r in rows for i in range(r["n_replications"])})
    echo = {"experiment": cfg, "sweep": sweep, "values": values, "policies": policies,
            "config_file": str(args.config) if args.config else None}
    RunManifest("simulate", echo, seeds).finish(paths, out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- analyze

ANALYTIC_POLICIES = ("single", "multi-one", "multi-all", "two-cache-one", "two-cache-all", "bound")


def _analytic_point(policy, catalogue: Catalogue, profile: CoverageProfile, capacity, user_intensity,
                    intensity, radius, half_area, surfaces):
    """(P_hit, T_C) of one analytic policy at one parameter point."""
    cell = 1.0 / intensity
    if policy == "bound":
        return hit_upper_bound(catalogue, profile, capacity), math.nan
    if policy == "single":
        sol = solve_characteristic_time(catalogue, user_intensity * cell, capacity)
        covered = 1.0 - profile.pmf[0]
        return covered * che_single_hit(catalogue, user_intensity * cell, capacity), sol.characteristic_time
    if policy == "multi-one":
        sol = solve_characteristic_time(catalogue, user_intensity * cell, capacity)
        return (che_multi_one_hit(catalogue, user_intensity, cell, profile, capacity),
                sol.characteristic_time)
    if policy == "multi-all":
        sol = solve_characteristic_time(catalogue, user_intensity * math.pi * radius ** 2, capacity)
        return (che_multi_all_hit(catalogue, user_intensity, radius, profile, capacity, surfaces),
                sol.characteristic_time)
    kind = policy.split("-")[-1]
    rate = user_intensity * half_area * (1 if kind == "one" else 2)
    sol = solve_characteristic_time(catalogue, rate, capacity)
    return two_cache_hit(kind, catalogue, user_intensity, half_area, capacity), sol.characteristic_time


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    variable = args.sweep
    values = args.values
    if values is None:
        # a single point at the fixed value; radius may stay unset when nothing needs it
        values = [{"radius": args.rb, "alpha": args.alpha, "gamma": args.gamma}[variable]]
    if args.popularities and variable == "gamma":
        raise UsageError("--popularities fixes the catalogue; it cannot be swept over gamma")
    rows = []
    for value in values:
        gamma = value if variable == "gamma" else args.gamma
        radius = value if variable == "radius" else args.rb
        alpha = value if variable == "alpha" else args.alpha
        if args.popularities:
            a = np.asarray(args.popularities, dtype=float)
            cat = Catalogue(a / a.sum())
        else:
            cat = zipf_popularities(args.F, gamma)
        if alpha is not None and (variable == "alpha" or args.k is None):
            capacity = max(1, int(round(alpha * cat.size)))
        elif args.k is not None:
            capacity = args.k
        else:
            raise UsageError("cache size needs --k or --alpha")
        if args.profile:
            p = np.asarray(args.profile, dtype=float)
            profile = CoverageProfile(p / p.sum(), "explicit")
        elif radius is None:
            profile = None
        else:
            cfg = ExperimentConfig(geometry=args.kind, intensity=args.lambda_b, radius=radius, seed=seed,
                                   profile_samples=args.samples)
            profile = coverage_profile_for(cfg)
        surfaces = None
        max_cov = 50 if profile is None else profile.max_coverage
        if radius is not None and args.surfaces == "monte-carlo":
            surfaces = union_surface_monte_carlo(args.lambda_b, radius, max_cov,
                                                 rng=np.random.default_rng(seed))
        elif radius is not None:
            surfaces = build_surface_model(radius, max_cov)
        half_area = args.half_area if args.half_area is not None else 1.0 / args.lambda_b
        for policy in args.policy:
            if policy == "multi-all" and radius is None:
                raise UsageError("multi-all needs --rb")
            if profile is None and not policy.startswith("two-cache"):
                raise UsageError(f"{policy} needs a coverage profile: give --rb or --profile")
            p_hit, t_c = _analytic_point(policy, cat, profile, capacity, args.lambda_u, args.lambda_b, radius,
                                         half_area, surfaces)
            rows.append({"sweep_variable": variable, "sweep_value": math.nan if value is None else float(value),
                         "N_bs_mean": math.nan if profile is None else profile.mean,
                         "policy": policy, "p_hit": p_hit, "T_C": t_c})
            print(f"{variable}={math.nan if value is None else value:<8g} {policy:<14s} P_hit={p_hit:.4f}  T_C={t_c:.6g}")
    paths = [write_rows_csv(rows, out / "analytic.csv", ANALYTIC_COLUMNS)]
    echo = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    RunManifest("analyze", echo, [seed]).finish(paths, out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- compare

def _value_column(rows, path):
    for col in ("p_hit_mean", "p_hit"):
        if rows and col in rows[0]:
            return col
    raise ValueError(f"{path}: no hit-probability column (p_hit_mean or p_hit)")


def _select(rows, policy, path):
    if policy is not None:
        rows = [r for r in rows if str(r["policy"]) == policy]
        if not rows:
            raise ValueError(f"{path}: no rows for policy {policy!r}")
    return rows


def cmd_compare(args) -> int:
    left = _select(read_rows_csv(args.left), args.left_policy, args.left)
    right = _select(read_rows_csv(args.right), args.right_policy, args.right)
    if not left or not right:
        raise ValueError("both files need at least one row")
    lcol, rcol = _value_column(left, args.left), _value_column(right, args.right)
    lpol = sorted({str(r["policy"]) for r in left})
    rpol = sorted({str(r["policy"]) for r in right})
    by_policy = lpol == rpol and len(lpol) > 1
    if not by_policy and (len(lpol) > 1 or len(rpol) > 1):
        raise ValueError(f"policies differ ({', '.join(lpol)} vs {', '.join(rpol)}); "
                         "pick one per side with --left-policy/--right-policy")

    def key(r):
        return (round(float(r["sweep_value"]), 9), str(r["policy"]) if by_policy else "")

    lmap = {key(r): r for r in left}
    rmap = {key(r): r for r in right}
    if set(lmap) != set(rmap):
        only_l = sorted(v for v, _ in set(lmap) - set(rmap))
        only_r = sorted(v for v, _ in set(rmap) - set(lmap))
        raise ValueError(f"sweep grids differ: only in {args.left}: {only_l}; only in {args.right}: {only_r}")
    rows = []
    for k in sorted(lmap):
        lv, rv = float(lmap[k][lcol]), float(rmap[k][rcol])
        rows.append({"sweep_value": float(lmap[k]["sweep_value"]), "policy_left": lmap[k]["policy"],
                     "policy_right": rmap[k]["policy"], "left": lv, "right": rv, "deviation": abs(lv - rv)})
    worst = max(r["deviation"] for r in rows)
    for r in rows:
        print(f"{r['sweep_value']:<8g} {str(r['policy_left']):<20s} {r['left']:.4f}  "
              f"{str(r['policy_right']):<14s} {r['right']:.4f}  dev={r['deviation']:.4f}")
    verdict = ""
    if args.tolerance is not None:
        verdict = f" (tolerance {args.tolerance:g}: {'within' if worst <= args.tolerance else 'EXCEEDED'})"
    print(f"max deviation {worst:.4f}{verdict}")
    out = _out_dir(args)
    paths = [write_rows_csv(rows, out / "compare.csv",
                            ("sweep_value", "policy_left", "policy_right", "left", "right", "deviation"))]
    echo = {"left": str(args.left), "right": str(args.right), "left_policy": args.left_policy,
            "right_policy": args.right_policy, "max_deviation": worst, "tolerance": args.tolerance}
    RunManifest("compare", echo, []).finish(paths, out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multilru", description="Spatial multi-LRU edge-caching simulator and analytics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("coverage", help="coverage-number law of a station pattern")
    c.add_argument("--kind", choices=("ppp", "lattice"), default="ppp")
    c.add_argument("--lambda-b", type=_positive(), default=0.5, help="station intensity [km^-2]")
    c.add_argument("--rb", type=_positive(), nargs="+", required=True, help="coverage radius/radii [km]")
    c.add_argument("--max-coverage", type=_positive(int), default=50)
    c.add_argument("--samples", type=_positive(int), default=100_000, help="Monte Carlo probes (lattice)")
    _common(c)
    c.set_defaults(func=cmd_coverage)

    s = sub.add_parser("simulate", help="replicated simulation or parameter sweep")
    s.add_argument("--config", type=Path, help="INI file with [geometry] [traffic] [policy] [engine] [sweep]")
    s.add_argument("--geometry", choices=("ppp", "lattice"))
    s.add_argument("--lambda-b", type=_positive())
    s.add_argument("--rb", type=_positive(), nargs="+", help="radius, or several radii to sweep")
    s.add_argument("--width", type=_positive())
    s.add_argument("--height", type=_positive())
    s.add_argument("--margin", type=float)
    s.add_argument("--policies", nargs="+", help="e.g. multi-one multi-all q-multi-all:0.5")
    s.add_argument("--q", type=float)
    s.add_argument("--one-update", choices=("closest", "nearest"))
    s.add_argument("--capacity", type=_positive(int), help="cache size K")
    s.add_argument("--alpha", type=_positive(), help="K/F ratio (ignored when --capacity is set)")
    s.add_argument("--zipf", type=float, help="Zipf exponent gamma")
    s.add_argument("--catalogue-size", type=_positive(int))
    s.add_argument("--user-intensity", type=_positive(), help="requests per km^2 per second")
    s.add_argument("--requests", type=_positive(), help="expected requests per replication")
    s.add_argument("--traffic", choices=("irm", "temporal"))
    s.add_argument("--warmup", type=float, help="fraction of the horizon not counted")
    s.add_argument("--sweep", choices=("radius", "R_b", "gamma", "zipf", "alpha", "q"))
    s.add_argument("--values", type=float, nargs="+")
    _common(s)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="Che-like analytic curves and the upper bound")
    a.add_argument("--policy", choices=ANALYTIC_POLICIES, nargs="+", required=True)
    a.add_argument("--sweep", choices=("radius", "alpha", "gamma"), default="radius")
    a.add_argument("--values", type=float, nargs="+")
    a.add_argument("--kind", choices=("ppp", "lattice"), default="ppp")
    a.add_argument("--lambda-b", type=_positive(), default=0.5)
    a.add_argument("--lambda-u", type=_positive(), default=0.023, help="requests per km^2 per second")
    a.add_argument("--rb", type=_positive())
    a.add_argument("--k", type=_positive(int), help="cache size K")
    a.add_argument("--alpha", type=_positive())
    a.add_argument("--F", type=_positive(int), default=10_000, help="catalogue size")
    a.add_argument("--gamma", type=float, default=0.78)
    a.add_argument("--popularities", type=_positive(), nargs="+", help="explicit popularity vector")
    a.add_argument("--profile", type=float, nargs="+", help="explicit coverage pmf p_0 p_1 ...")
    a.add_argument("--half-area", type=_positive(), help="two-cache Voronoi half-area (default 1/lambda_b)")
    a.add_argument("--surfaces", choices=("heuristic", "monte-carlo"), default="heuristic")
    a.add_argument("--samples", type=_positive(int), default=100_000, help="lattice profile probes")
    _common(a)
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("compare", help="join two result tables and report deviations")
    m.add_argument("left", type=Path)
    m.add_argument("right", type=Path)
    m.add_argument("--left-policy")
    m.add_argument("--right-policy")
    m.add_argument("--tolerance", type=float)
    _common(m)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"multilru {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"multilru {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
