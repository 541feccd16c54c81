"""Command-line entry point: ``bgformula {simulate,estimate,benchmark,oracle,report}``.

Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 data
validation error, 4 numerical failure.  Every run writes a manifest JSON
holding the resolved configuration, seeds and library versions; passing it
back with ``--manifest`` replays the run.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import WORKERS_ENV, benchmark_csv, raw_csv, run_benchmark
from .config import RunConfig, config_from_dict, flatten, load_config
from .core import write_dataset
from .errors import (BGFormulaError, ConfigError, DataValidationError, MissingScores,
                     MissingTailoring, NumericalError, RegimeKindMismatch, TruthUnavailable)
from .gformula import read_risk_draws, summarize, summary_csv
from .oracle import empirical_cuminc, period_uncensored_probability, plugin_gformula
from .pipeline import StageError, estimate_all
from .simulator import simulate

log = logging.getLogger("bgformula")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (ConfigError, TruthUnavailable)):
        return EXIT_CONFIG
    if isinstance(exc, (DataValidationError, MissingScores, MissingTailoring, RegimeKindMismatch)):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_CONFIG


def versions() -> dict:
    import numba
    import scipy
    return {"bgformula": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(path: Path, command: str, cfg: RunConfig, outputs: list[str], **extra) -> None:
    doc = {"command": command, "config": cfg.to_dict(), "versions": versions(),
           "outputs": sorted(outputs), **extra}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {p}")
    return p


# ---------------------------------------------------------------------------
# config assembly
# ---------------------------------------------------------------------------

FLAG_KEYS = {
    "dgp": "data.source", "n": "data.n", "T": "data.T", "seed": "data.seed",
    "psi_c": "data.psi_c", "data": "data.path", "schema": "data.schema",
    "regimes": "estimate.regimes", "specs": "estimate.specs", "n_reps": "benchmark.n_reps",
    "n_iter": "mcmc.n_iter", "n_burn": "mcmc.n_burn", "K": "montecarlo.K", "R": "montecarlo.R",
}


def resolve_config(args) -> RunConfig:
    if getattr(args, "manifest", None):
        try:
            doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"manifest not found: {args.manifest}") from None
        cfg = config_from_dict(doc["config"])
        if getattr(args, "out", None):
            cfg = load_config(overrides={**flatten(cfg.to_dict()), "output.dir": args.out})
        return cfg
    overrides = {}
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "data", None):
        overrides.setdefault("data.source", "csv")
    if getattr(args, "out", None):
        overrides["output.dir"] = args.out
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides=overrides)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data.synthetic:
        raise ConfigError("simulate needs a simulator data source")
    dest = Path(args.output)
    if not dest.parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {dest.parent}")
    data = simulate(cfg.data.dgp())
    write_dataset(data, dest)
    schema_path = dest.with_suffix(".schema.ini")
    schema_path.write_text(data.schema.to_ini(), encoding="utf-8")
    write_manifest(dest.with_suffix(".manifest.json"), "simulate", cfg,
                   [dest.name, schema_path.name])
    s = data.summary()
    print(f"wrote {dest}: subjects={s['subjects']} records={s['records']} "
          f"censored={100 * s['censored']:.1f}% ever_treated={100 * s['ever_treated']:.1f}% "
          f"events={100 * s['events']:.1f}%")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg.output_dir)
    data = cfg.data.load()
    draws = estimate_all(data, cfg)
    files = []
    for d in draws:
        name = re.sub(r"[^A-Za-z0-9_.-]+", "_", f"draws_{d.spec}_{d.regime_id}") + ".csv"
        d.to_csv(out / name)
        files.append(name)
    summary_csv(draws, cfg.estimate.level, out / "summary.csv")
    files.append("summary.csv")
    write_manifest(out / "manifest.json", "estimate", cfg, files)
    for d in draws:
        s = summarize(d, cfg.estimate.level)
        print(f"{d.spec:12s} {d.regime_id:16s} risk(T)={s.mean[-1]:.4f} "
              f"[{s.lo[-1]:.4f}, {s.hi[-1]:.4f}]")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg.output_dir)
    truth = truth_se = None
    if args.truth:
        doc = json.loads(Path(args.truth).read_text(encoding="utf-8"))
        truth, truth_se = np.asarray(doc["risk"]), np.asarray(doc.get("se", np.zeros(cfg.data.T)))
    res = run_benchmark(cfg, truth, truth_se)
    files = ["benchmark.csv"]
    benchmark_csv(res, out / "benchmark.csv")
    if cfg.benchmark.raw:
        raw_csv(res, out / "raw.csv")
        files.append("raw.csv")
    write_manifest(out / "manifest.json", "benchmark", cfg, files,
                   truth_file=str(args.truth) if args.truth else None,
                   workers_env=WORKERS_ENV)
    print(benchmark_csv(res), end="")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = resolve_config(args)
    data = cfg.data.load()
    regimes = cfg.regime_objects(data.schema, data.horizon)
    t_stars = [args.t_star] if args.t_star else list(range(1, data.horizon + 1))
    lines = ["regime,t_star,plugin_risk"]
    for reg in regimes:
        for t in t_stars:
            v = plugin_gformula(data, reg, t, smooth_alpha=args.smooth_alpha)
            lines.append(f"{reg.name},{t},{v!r}")
    w = period_uncensored_probability(data)
    for t in t_stars:
        lines.append(f"observed-ipcw,{t},{empirical_cuminc(data, t, w)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = _out_dir(args.out)
        (out / "oracle.csv").write_text(text, encoding="utf-8")
        write_manifest(out / "manifest.json", "oracle", cfg, ["oracle.csv"])
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    items = []
    for path in args.draws:
        items.extend(read_risk_draws(path))
    text = summary_csv(items, args.level, args.output)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--manifest", help="replay the configuration stored in a manifest")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one configuration value (repeatable)")
    if data:
        p.add_argument("--dgp", choices=["sim51", "toy", "mixed", "null"])
        p.add_argument("--data", help="person-period CSV (implies source=csv)")
        p.add_argument("--schema", help="schema INI for --data")
        p.add_argument("--n", type=int)
        p.add_argument("--T", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--psi-c", dest="psi_c", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bgformula",
                                 description="Survival g-formula with tree-ensemble component models")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic person-period CSV")
    _common(p)
    p.add_argument("--output", "-o", required=True, help="CSV path; schema INI written alongside")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="risk curves for each (spec, regime)")
    _common(p)
    p.add_argument("--regimes", help="semicolon list, e.g. 'always;never;static:0,1,1,1'")
    p.add_argument("--specs", help="comma list from bs, cov, cov-bs, parametric")
    p.add_argument("--n-iter", dest="n_iter", type=int)
    p.add_argument("--n-burn", dest="n_burn", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--out", help="output directory (must exist)")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("benchmark", help="relative bias and RMSE over replications")
    _common(p)
    p.add_argument("--regimes")
    p.add_argument("--specs")
    p.add_argument("--n-reps", dest="n_reps", type=int)
    p.add_argument("--n-iter", dest="n_iter", type=int)
    p.add_argument("--n-burn", dest="n_burn", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--truth", help="JSON with 'risk' (and optional 'se') per t*, one regime")
    p.add_argument("--out", help="output directory (must exist)")
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("oracle", help="plug-in g-formula on discrete data")
    _common(p)
    p.add_argument("--regimes")
    p.add_argument("--t-star", dest="t_star", type=int)
    p.add_argument("--smooth-alpha", dest="smooth_alpha", type=float, default=0.0)
    p.add_argument("--out", help="also write oracle.csv and a manifest here")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("report", help="summary table from risk-draws CSVs")
    p.add_argument("draws", nargs="+")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--output", "-o")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (BGFormulaError, OSError) as exc:
        print(f"bgformula {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except ValueError as exc:
        print(f"bgformula {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
