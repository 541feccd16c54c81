"""Run configuration: INI file plus command-line overrides, fully resolved.

Sections and keys (all optional; defaults in brackets)::

    [data]        source [sim51] (sim51 | toy | mixed | null | csv), path, schema,
                  n [1000], T [5], seed [0], psi_c [3.0],
                  toy tables p_l0, p_l, p_a, hazard, cens (comma lists), tailoring,
                  mixed settings quad, a_on_y, a_on_l
    [featurizer]  order [1], cumulate [false], period_indicator [true]
    [bart]        num_trees, tau, alpha, w, nu, sigma_quantile, leaf_scale, n_cuts, max_depth
    [mcmc]        profile [default] (default | long), n_iter, n_burn, thin, seed
    [montecarlo]  R, K, K_b, K_a, seed, analytic_hazard
    [estimate]    regimes [always; never] (semicolon list), specs [bs, cov, cov-bs],
                  link [probit], censoring_at [treated], level [0.95], n_boot [0], boot_seed
    [benchmark]   n_reps [20], truth_M [1000000], truth_seed [0], raw [true]
    [output]      dir [out]
"""
from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import links
from .bart import BartHyper, MCMCConfig
from .core import HistoryFeaturizer, Schema, load_dataset, parse_regime
from .errors import ConfigError
from .gformula import MonteCarloConfig
from .scores import OBSERVED, TREATED, BalancingScoreSpec
from .simulator import MixedDgpConfig, Sim51Config, ToyDgpConfig, simulate

PARAMETRIC = "parametric"
MCMC_PROFILES = {"default": (15000, 10000), "long": (25000, 15000)}
SOURCES = ("sim51", "toy", "mixed", "null", "csv")
SIM51_NATURAL = "threshold:L2:0.2"


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _list(text: str, sep: str) -> list[str]:
    return [x.strip() for x in str(text).split(sep) if x.strip()]


@dataclass(frozen=True)
class DataConfig:
    source: str = "sim51"
    path: str = ""
    schema: str = ""
    n: int = 1000
    T: int = 5
    seed: int = 0
    psi_c: float = 3.0
    p_l0: float = 0.5
    p_l: tuple = (0.5,)
    p_a: tuple = (0.5,)
    hazard: tuple = (0.1,)
    cens: tuple = (0.0,)
    tailoring: bool = False
    quad: float = 0.5
    a_on_y: float = 0.0
    a_on_l: float = 0.0

    @property
    def synthetic(self) -> bool:
        return self.source != "csv"

    def dgp(self, seed: int | None = None, n: int | None = None):
        """Simulator config for synthetic sources."""
        seed = self.seed if seed is None else seed
        n = self.n if n is None else n
        if self.source == "sim51":
            return Sim51Config(n=n, T=self.T, psi_c=self.psi_c, seed=seed)
        if self.source == "toy":
            def table(v, shape):
                a = np.asarray(v, dtype=float)
                return a.reshape(shape) if a.size > 1 else float(a[0])
            return ToyDgpConfig(n=n, T=self.T, p_l0=self.p_l0, p_l=table(self.p_l, (2, 2)),
                                p_a=table(self.p_a, (2, 2)),
                                hazard=table(self.hazard, (self.T, 2, 2)),
                                cens=table(self.cens, (self.T, 2, 2)), tailoring=self.tailoring,
                                seed=seed)
        if self.source in ("mixed", "null"):
            if self.source == "null":
                return MixedDgpConfig(n=n, T=self.T, quad=self.quad, seed=seed)
            return MixedDgpConfig(n=n, T=self.T, quad=self.quad, a_on_y=self.a_on_y,
                                  a_on_l=self.a_on_l, seed=seed)
        raise ConfigError(f"data source {self.source!r} is not a simulator")

    def load(self, seed: int | None = None):
        if self.synthetic:
            return simulate(self.dgp(seed))
        if not self.path or not self.schema:
            raise ConfigError("csv data needs both path and schema")
        try:
            return load_dataset(self.path, Schema.from_ini(self.schema), horizon=self.T)
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"cannot open {exc.filename}") from None

    def schema_obj(self) -> Schema:
        if self.synthetic:
            return self.dgp().schema
        return Schema.from_ini(self.schema)


@dataclass(frozen=True)
class EstimateConfig:
    regimes: tuple[str, ...] = ("always", "never")
    specs: tuple[str, ...] = ("bs", "cov", "cov-bs")
    link: str = links.PROBIT
    censoring_at: str = TREATED
    level: float = 0.95
    n_boot: int = 0
    boot_seed: int = 0


@dataclass(frozen=True)
class BenchmarkConfig:
    n_reps: int = 20
    truth_M: int = 1_000_000
    truth_seed: int = 0
    raw: bool = True


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    featurizer: HistoryFeaturizer = field(default_factory=HistoryFeaturizer)
    bart: BartHyper = field(default_factory=BartHyper)
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    montecarlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    output_dir: str = "out"

    # -- resolution --------------------------------------------------------

    def regime_objects(self, schema: Schema | None = None, horizon: int | None = None):
        schema = schema or self.data.schema_obj()
        horizon = horizon or self.data.T
        out = []
        for text in self.estimate.regimes:
            if text.strip().lower() == "natural":
                if self.data.source != "sim51":
                    raise ConfigError("the 'natural' regime is defined for the sim51 source only")
                out.append(parse_regime(SIM51_NATURAL, schema, horizon, name="natural"))
            else:
                try:
                    out.append(parse_regime(text, schema, horizon))
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        return out

    def spec_objects(self):
        out = []
        for s in self.estimate.specs:
            if s.strip().lower() == PARAMETRIC:
                out.append(PARAMETRIC)
            else:
                try:
                    out.append(BalancingScoreSpec.parse(s))
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        return out

    def validate(self) -> "RunConfig":
        """Resolve every name up front so bad configs fail before any compute."""
        if self.data.source not in SOURCES:
            raise ConfigError(f"unknown data source {self.data.source!r}; choose from {SOURCES}")
        if self.estimate.link not in (links.PROBIT, links.LOGISTIC):
            raise ConfigError(f"link must be probit or logistic, got {self.estimate.link!r}")
        if self.estimate.censoring_at not in (OBSERVED, TREATED):
            raise ConfigError(f"censoring_at must be {OBSERVED} or {TREATED}")
        if not self.estimate.specs:
            raise ConfigError("no estimators requested")
        self.spec_objects()
        if self.data.synthetic:
            self.data.dgp()
        self.regime_objects()
        return self

    def to_dict(self) -> dict:
        d = {"data": asdict(self.data),
             "featurizer": {"order": self.featurizer.order, "cumulate": self.featurizer.cumulate,
                            "period_indicator": self.featurizer.include_period_indicator},
             "bart": asdict(self.bart), "mcmc": asdict(self.mcmc),
             "montecarlo": asdict(self.montecarlo), "estimate": asdict(self.estimate),
             "benchmark": asdict(self.benchmark), "output": {"dir": self.output_dir}}
        return json.loads(json.dumps(d))


def _coerce(cls, section: dict, name: str):
    """Build dataclass ``cls`` from string values, using field defaults for types."""
    known = {f.name.lower(): f.name for f in fields(cls)}
    kw = {}
    for key, raw in section.items():
        if key.lower() not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        key = known[key.lower()]
        default = getattr(cls(), key)
        try:
            if isinstance(default, bool):
                kw[key] = _bool(raw)
            elif isinstance(default, int):
                kw[key] = int(float(raw))
            elif isinstance(default, float) or (default is None and key == "leaf_scale"):
                kw[key] = float(raw)
            elif isinstance(default, tuple):
                if key in ("regimes",):
                    kw[key] = tuple(_list(raw, ";"))
                elif key in ("specs",):
                    kw[key] = tuple(_list(raw, ","))
                else:
                    kw[key] = tuple(_floats(raw))
            else:
                kw[key] = str(raw).strip()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    return kw


def load_config(path=None, text: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read an INI config; ``overrides`` maps ``section.key`` to string values."""
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
    if text is not None:
        cp.read_string(text)
    raw = {s: dict(cp[s]) for s in cp.sections()}
    for k, v in (overrides or {}).items():
        sec, _, key = k.partition(".")
        if not key:
            raise ConfigError(f"override {k!r} must look like section.key")
        raw.setdefault(sec, {})[key] = str(v)
    allowed = {"data", "featurizer", "bart", "mcmc", "montecarlo", "estimate", "benchmark",
               "output"}
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    try:
        data = DataConfig(**_coerce(DataConfig, raw.get("data", {}), "data"))
        fz = raw.get("featurizer", {})
        unknown = set(fz) - {"order", "cumulate", "period_indicator"}
        if unknown:
            raise ConfigError(f"[featurizer] unknown keys {sorted(unknown)}")
        featurizer = HistoryFeaturizer(order=int(fz.get("order", 1)),
                                       cumulate=_bool(fz.get("cumulate", "false")),
                                       include_period_indicator=_bool(
                                           fz.get("period_indicator", "true")))
        bart = BartHyper(**_coerce(BartHyper, raw.get("bart", {}), "bart"))
        mc_raw = dict(raw.get("mcmc", {}))
        profile = mc_raw.pop("profile", "default").strip()
        if profile not in MCMC_PROFILES:
            raise ConfigError(f"unknown mcmc profile {profile!r}")
        it, burn = MCMC_PROFILES[profile]
        mcmc = MCMCConfig(**{"n_iter": it, "n_burn": burn,
                             **_coerce(MCMCConfig, mc_raw, "mcmc")})
        montecarlo = MonteCarloConfig(**_coerce(MonteCarloConfig, raw.get("montecarlo", {}),
                                                "montecarlo"))
        est = EstimateConfig(**_coerce(EstimateConfig, raw.get("estimate", {}), "estimate"))
        bench = BenchmarkConfig(**_coerce(BenchmarkConfig, raw.get("benchmark", {}), "benchmark"))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = raw.get("output", {})
    unknown = set(out) - {"dir"}
    if unknown:
        raise ConfigError(f"[output] unknown keys {sorted(unknown)}")
    return RunConfig(data, featurizer, bart, mcmc, montecarlo, est, bench,
                     out.get("dir", "out")).validate()


def config_from_dict(d: dict) -> RunConfig:
    """Inverse of :meth:`RunConfig.to_dict` (used to replay a manifest)."""
    return load_config(overrides=flatten(d))


def flatten(d: dict) -> dict:
    """``{section: {key: value}}`` to ``{"section.key": text}`` override form."""
    flat = {}
    for sec, kv in d.items():
        for key, v in kv.items():
            if v is None:
                continue
            if isinstance(v, list):
                v = (";" if key == "regimes" else ",").join(str(x) for x in v)
            flat[f"{sec}.{key}"] = repr(v) if isinstance(v, float) else str(v)
    return flat


def with_overrides(cfg: RunConfig, **sections) -> RunConfig:
    """Programmatic variant: ``with_overrides(cfg, mcmc={'n_iter': 100})``."""
    parts = {}
    for sec, kv in sections.items():
        attr = "output_dir" if sec == "output" else sec
        if attr == "output_dir":
            parts[attr] = kv
        else:
            parts[attr] = replace(getattr(cfg, attr), **kv)
    return replace(cfg, **parts).validate()
