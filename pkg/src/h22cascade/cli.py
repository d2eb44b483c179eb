"""Command-line entry point: ``h22cascade {grow,verify,measure,stats}``.

Exit codes: 0 all checks pass, 1 statistical failure, 2 invariant or
consistency violation, 3 usage error.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .cascade import InvariantError, check_invariants, grow_to, init_root
from .config import ConfigError, RunConfig, load_config
from .graining import InconsistentStateError
from .hier_graph import HierParams
from .io import RealizationFormatError, load_realization, save_realization
from .reports import TestReport
from .samplers import RngStream
from .schrodinger import InvalidStateError
from .stats import (decay_test, fractional_moment_curve, measure_density,
                    singularity_diagnostic)
from .verify import run_suites

EXIT_OK, EXIT_STAT, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--wbar", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--level", type=int)
    p.add_argument("--max-level", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="h22cascade",
                     description="Fine-graining cascade of the H^{2|2} model on the "
                                 "hierarchical lattice")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("grow", help="grow cascade realizations and save them")
    _add_common(g)
    g.add_argument("--format", choices=("h22", "json"))

    v = sub.add_parser("verify", help="run verification suites")
    _add_common(v)
    v.add_argument("--suite", help="comma-separated suite names")
    v.add_argument("--lam", help="comma-separated uniform lambda levels for the laplace suite")
    v.add_argument("--s", help="comma-separated Ward exponents")
    v.add_argument("--inject-fault", action="store_true", default=None,
                   help="corrupt beta in the graining suite (must fail)")

    m = sub.add_parser("measure", help="density table and plot of a saved realization")
    _add_common(m)
    m.add_argument("realization")
    m.add_argument("--depth", type=int)
    m.add_argument("--no-svg", action="store_true")

    s = sub.add_parser("stats", help="fractional-moment curves and singularity diagnostics")
    _add_common(s)
    s.add_argument("--s", help="comma-separated exponents in (0, 1/2)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    pairs = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, val = item.split("=", 1)
        pairs[k.strip()] = val.strip()
    for key in ("wbar", "rho", "level", "max_level", "replicates", "samples", "burn_in",
                "seed", "out", "workers", "format", "suite", "lam", "s", "inject_fault"):
        val = getattr(args, key, None)
        if val is not None:
            pairs[key] = val if not isinstance(val, (int, float)) or isinstance(val, bool) \
                else str(val)
    if getattr(args, "no_svg", False):
        pairs["svg"] = False
    return cfg.with_overrides(pairs)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(cfg: RunConfig, out: Path):
    (out / "run_config.txt").write_text(cfg.to_text())


def _grow_one(job):
    cfg, k = job
    rng = RngStream(cfg.seed, k).generator()
    r = init_root(HierParams(cfg.wbar, cfg.rho, 0), rng, max_level=cfg.max_level)
    grow_to(r, cfg.level)
    check_invariants(r)
    return r


def level_summary(r) -> List[tuple]:
    rows = []
    for lvl in r.levels:
        dens = np.exp(lvl.u)
        rows.append((lvl.level, float(dens.sum() * 2.0 ** -lvl.level), float(dens.min()),
                     float(dens.max())))
    return rows


def cmd_grow(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    _write_config(cfg, out)
    jobs = [(cfg, k) for k in range(cfg.replicates)]
    if cfg.workers > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_grow_one, jobs))
    else:
        results = [_grow_one(j) for j in jobs]
    rows = []
    for k, r in enumerate(results):
        path = save_realization(r, out / f"realization_{k:04d}.{cfg.format}")
        print(f"replicate {k}: wrote {path}")
        for level, mass, lo, hi in level_summary(r):
            print(f"  level {level:2d}  total mass {mass:.10f}  density min {lo:.4g} max {hi:.4g}")
            rows.append((k, level, repr(mass), repr(lo), repr(hi)))
    with open(out / "grow_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "level", "total_mass", "density_min", "density_max"])
        w.writerows(rows)
    return EXIT_OK


def verdict(reports: List[TestReport]) -> int:
    failed = [r for r in reports if not r.passed]
    if any(r.metadata.get("kind") == "exact" for r in failed):
        return EXIT_INVARIANT
    return EXIT_STAT if failed else EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    _write_config(cfg, out)
    reports = run_suites(cfg)
    lines = [r.line() for r in reports]
    for line in lines:
        print(line)
    code = verdict(reports)
    summary = f"{sum(r.passed for r in reports)}/{len(reports)} passed"
    print(summary)
    (out / "verify_report.txt").write_text("\n".join(lines + [summary]) + "\n")
    payload = {"exit_code": code, "reports": [r.to_dict() for r in reports]}
    (out / "verify_report.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return code


def density_svg(x, density, width: int = 640, height: int = 320) -> str:
    """Step plot of log-density against x, as plain SVG text."""
    logd = np.log(density)
    lo, hi = float(logd.min()), float(logd.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 40
    n = len(density)
    step = 1.0 / n

    def px(t):
        return pad + t * (width - 2 * pad)

    def py(v):
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    pts = []
    for xi, v in zip(x, logd):
        pts.append(f"{px(xi):.3f},{py(v):.3f}")
        pts.append(f"{px(xi + step):.3f},{py(v):.3f}")
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        f'stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<polyline fill="none" stroke="steelblue" points="{" ".join(pts)}"/>\n'
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">x</text>\n'
        f'<text x="8" y="{pad - 10}">log density [{lo:.3g}, {hi:.3g}]</text>\n'
        '</svg>\n')


def cmd_measure(cfg: RunConfig, path: str, depth: Optional[int]) -> int:
    if not Path(path).exists():
        raise UsageError(f"realization file not found: {path}")
    r = load_realization(path)
    depth = r.depth if depth is None else depth
    if not 0 <= depth <= r.depth:
        raise UsageError(f"depth must lie in [0, {r.depth}]")
    meas = measure_density(r, depth)
    out = _outdir(cfg)
    with open(out / "measure.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "left_endpoint", "density", "cell_mass"])
        for i, (x, d, m) in enumerate(zip(meas.left_endpoints, meas.density, meas.cell_mass), 1):
            w.writerow([i, repr(float(x)), repr(float(d)), repr(float(m))])
    if cfg.svg:
        (out / "measure.svg").write_text(density_svg(meas.left_endpoints, meas.density))
    print(f"depth {depth}: {2 ** depth} cells, total mass {meas.total_mass():.12f}")
    return EXIT_OK


def cmd_stats(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    _write_config(cfg, out)
    params = HierParams(cfg.wbar, cfg.rho, 0)
    reports = []
    rows = []
    for k, s in enumerate(cfg.s):
        curve = fractional_moment_curve(params, s, cfg.level, cfg.samples,
                                        RngStream(cfg.seed, 100 + k).generator())
        rep = decay_test(curve, name=f"fractional moment decay s={s}")
        reports.append(rep)
        print(rep.line())
        rows += [(repr(s), n, repr(m), repr(se)) for n, m, se, _ in curve]
    with open(out / "fractional_moments.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "level", "moment", "standard_error"])
        w.writerows(rows)

    depth = max(cfg.max_level, 12)
    r = init_root(params, RngStream(cfg.seed, 0).generator(), max_level=depth)
    grow_to(r, depth)
    summary = singularity_diagnostic(r)
    info = {"depths": summary.depths, "quantile_levels": [0.05, 0.25, 0.5, 0.75, 0.95],
            "quantiles": summary.quantiles.tolist(), "low_fraction": summary.low_fraction,
            "floor": summary.floor, "median_slope": summary.slope, "label": summary.label,
            "conserved": summary.conserved}
    (out / "singularity.json").write_text(json.dumps(info, sort_keys=True, indent=1) + "\n")
    print(f"singularity probe: median slope {summary.slope:.4f} -> {summary.label}")
    return verdict(reports)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "grow":
            return cmd_grow(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "measure":
            return cmd_measure(cfg, args.realization, args.depth)
        if args.command == "stats":
            if any(not 0 < s < 0.5 for s in cfg.s):
                raise UsageError("stats exponents must lie in (0, 1/2)")
            return cmd_stats(cfg)
    except (ConfigError, UsageError, RealizationFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantError, InconsistentStateError, InvalidStateError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
