"""Run configuration: an INI document whose keys are addressed as ``section.key``.

Example::

    [data]
    panel = panel.csv
    surprises = surprises.csv
    columns = fx:log_times_100:exchange_rate, rate:level:policy_rate

    [identification]
    method = median_rotation

    [estimation]
    engines = bvar, local_projection

Matrices are written row by row with ``;`` between rows and ``|`` between lag
blocks, e.g. ``lags = 0.5 0 ; 0 0.4 | 0.1 0 ; 0 0.1``.
Unknown keys are rejected before anything runs.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable

import numpy as np

from spillover.bvar import Hyperparams
from spillover.dataio import ColumnSpec, Month
from spillover.dgp import DgpParams
from spillover.localproj import INFERENCE, LpSpec

IDENTIFICATION = ("median_rotation", "poor_mans", "fixed_angle", "uniform_rotations")
VARIANTS = ("pure_mp", "info", "raw_hfi")
ENGINES = ("bvar", "local_projection")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BvarSettings:
    lags: int = 3
    horizon: int = 36
    n_draws: int = 2000
    exo_lags: int = 0
    coverage: float = 0.90
    hyper: Hyperparams = field(default_factory=Hyperparams)


@dataclass
class RunConfig:
    panel_path: str | None = None
    surprises_path: str | None = None
    columns: tuple[ColumnSpec, ...] | None = None
    synthetic: DgpParams | None = None
    identification: str = "median_rotation"
    angle: float | None = None
    n_rot: int = 200
    n_angles: int = 999
    variant: str = "pure_mp"
    sample_start: Month | None = None
    sample_end: Month | None = None
    covid_dummy: bool = True
    engines: tuple[str, ...] = ENGINES
    bvar: BvarSettings = field(default_factory=BvarSettings)
    lp: LpSpec = field(default_factory=LpSpec)
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.identification not in IDENTIFICATION:
            raise ConfigError(f"unknown identification {self.identification!r}; expected one of {IDENTIFICATION}")
        if self.identification == "fixed_angle" and self.angle is None:
            raise ConfigError("fixed_angle identification needs identification.angle")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown shock variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.engines:
            raise ConfigError("at least one engine required")
        bad = [e for e in self.engines if e not in ENGINES]
        if bad:
            raise ConfigError(f"unknown engines {bad}; expected subset of {ENGINES}")
        if self.synthetic is None and not (self.panel_path and self.surprises_path):
            raise ConfigError("need data.panel and data.surprises, or a [synthetic] block")
        if self.sample_start and self.sample_end and self.sample_end < self.sample_start:
            raise ConfigError("sample.end precedes sample.start")
        if self.n_rot < 1 or self.threads < 1 or self.bvar.n_draws < 1:
            raise ConfigError("n_rot, threads and n_draws must be >= 1")
        if self.seed is None or self.seed < 0:
            raise ConfigError("a non-negative seed is required")
        return self

    def echo(self) -> dict:
        """JSON-ready description of every setting."""
        d = asdict(self)
        d["columns"] = None if self.columns is None else [asdict(c) for c in self.columns]
        d["sample_start"] = None if self.sample_start is None else str(self.sample_start)
        d["sample_end"] = None if self.sample_end is None else str(self.sample_end)
        if self.synthetic is not None:
            s = self.synthetic
            d["synthetic"] = {
                "names": list(s.names),
                "lags": s.lags.tolist(),
                "mp_impact": s.mp_impact.tolist(),
                "info_impact": s.info_impact.tolist(),
                "innovation_cov": s.innovation_cov.tolist(),
                "intercept": None if s.intercept is None else np.asarray(s.intercept).tolist(),
                "surprise_cov": s.surprise_cov.tolist(),
                "theta": s.theta,
                "T": s.T,
                "start": str(s.start),
                "seed": s.seed,
                "burn_in": s.burn_in,
            }
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Month):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    return x


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_list(text: str) -> list[str]:
    return [p.strip() for p in text.replace("\n", ",").split(",") if p.strip()]


def parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(",", " ").split()])


def parse_matrix(text: str) -> np.ndarray:
    rows = [parse_vector(r) for r in text.split(";") if r.strip()]
    if len({r.size for r in rows}) != 1:
        raise ValueError("ragged matrix rows")
    return np.vstack(rows)


def parse_lag_blocks(text: str) -> np.ndarray:
    return np.stack([parse_matrix(b) for b in text.split("|")])


def _opt(conv):
    return lambda s: None if s.strip().lower() in ("", "none") else conv(s)


_KEYS: dict[str, Callable[[str], Any]] = {
    "data.panel": str,
    "data.surprises": str,
    "data.columns": lambda s: tuple(ColumnSpec.parse(c) for c in parse_list(s)),
    "synthetic.names": lambda s: tuple(parse_list(s)),
    "synthetic.lags": parse_lag_blocks,
    "synthetic.mp_impact": parse_vector,
    "synthetic.info_impact": parse_vector,
    "synthetic.innovation_cov": parse_matrix,
    "synthetic.intercept": parse_vector,
    "synthetic.surprise_cov": parse_matrix,
    "synthetic.theta": _opt(float),
    "synthetic.T": int,
    "synthetic.start": Month.parse,
    "synthetic.seed": int,
    "synthetic.burn_in": int,
    "identification.method": str,
    "identification.angle": _opt(float),
    "identification.n_rot": int,
    "identification.n_angles": int,
    "shock.variant": str,
    "sample.start": _opt(Month.parse),
    "sample.end": _opt(Month.parse),
    "sample.covid_dummy": parse_bool,
    "estimation.engines": lambda s: tuple(parse_list(s)),
    "bvar.lags": int,
    "bvar.horizon": int,
    "bvar.n_draws": int,
    "bvar.exo_lags": int,
    "bvar.coverage": float,
    "bvar.own_lag_mean": float,
    "bvar.lambda1": float,
    "bvar.lambda3": float,
    "bvar.lambda4": float,
    "lp.horizon": int,
    "lp.shock_lags": int,
    "lp.dep_lags": int,
    "lp.domestic_lags": int,
    "lp.foreign_lags": int,
    "lp.domestic": lambda s: tuple(parse_list(s)),
    "lp.foreign": lambda s: tuple(parse_list(s)),
    "lp.inference": str,
    "lp.bandwidth_offset": int,
    "lp.confidence": float,
    "lp.common_sample": parse_bool,
    "lp.aic": parse_bool,
    "output.dir": str,
    "run.seed": int,
    "run.threads": int,
}


def flatten_ini(text: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    return {f"{sec}.{k}": v for sec in cp.sections() for k, v in cp.items(sec)}


def config_from_mapping(flat: dict[str, str], base_dir: str | os.PathLike = ".") -> RunConfig:
    unknown = sorted(set(flat) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    vals: dict[str, Any] = {}
    for k, raw in flat.items():
        try:
            vals[k] = _KEYS[k](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{k}: {exc}") from exc

    def path(key):
        if key not in vals:
            return None
        return os.path.normpath(os.path.join(base_dir, vals[key]))

    syn = None
    syn_keys = {k.split(".", 1)[1]: v for k, v in vals.items() if k.startswith("synthetic.")}
    if syn_keys:
        try:
            syn = DgpParams(**syn_keys)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"synthetic block: {exc}") from exc

    hyper_keys = ("own_lag_mean", "lambda1", "lambda3", "lambda4")
    bvar_kw = {k[5:]: v for k, v in vals.items() if k.startswith("bvar.")}
    try:
        hyper = Hyperparams(**{k: bvar_kw.pop(k) for k in hyper_keys if k in bvar_kw})
        bvar = BvarSettings(**bvar_kw, hyper=hyper)
        lp_kw = {k[3:]: v for k, v in vals.items() if k.startswith("lp.")}
        if "inference" in lp_kw and lp_kw["inference"] not in INFERENCE:
            raise ConfigError(f"lp.inference must be one of {INFERENCE}")
        lp = LpSpec(**lp_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    cfg = RunConfig(
        panel_path=path("data.panel"),
        surprises_path=path("data.surprises"),
        columns=vals.get("data.columns"),
        synthetic=syn,
        identification=vals.get("identification.method", "median_rotation"),
        angle=vals.get("identification.angle"),
        n_rot=vals.get("identification.n_rot", 200),
        n_angles=vals.get("identification.n_angles", 999),
        variant=vals.get("shock.variant", "pure_mp"),
        sample_start=vals.get("sample.start"),
        sample_end=vals.get("sample.end"),
        covid_dummy=vals.get("sample.covid_dummy", True),
        engines=vals.get("estimation.engines", ENGINES),
        bvar=bvar,
        lp=lp,
        out_dir=path("output.dir") or os.path.normpath(os.path.join(base_dir, "out")),
        seed=vals.get("run.seed", 0),
        threads=vals.get("run.threads", 1),
    )
    return cfg.validate()


def parse_config(text: str, base_dir: str | os.PathLike = ".") -> RunConfig:
    return config_from_mapping(flatten_ini(text), base_dir)


def load_config(path: str | os.PathLike) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw).validate() if kw else cfg
