"""Orchestration: ingest, identify, estimate with both engines, export.

Every random stream descends from the run's master seed through fixed
spawn keys, so identical ``(config, seed)`` pairs reproduce identical
CSV output regardless of thread count.
"""
from __future__ import annotations

import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from spillover import __version__
from spillover.bvar import VarxSpec, estimate_irf, fit_varx, irf_draws, sample_posterior, standardize
from spillover.config import ConfigError, RunConfig
from spillover.dataio import (
    EventSurprises,
    MonthlyPanel,
    aggregate_events_to_monthly,
    atomic_write_text,
    format_float,
    load_panel,
    load_surprises,
    write_panel,
    write_surprises,
)
from spillover.dgp import Truth, simulate_dgp
from spillover.irf import IrfBand, write_fan_charts
from spillover.localproj import lp_irf
from spillover.shockid import (
    Decomposition,
    RotationGrid,
    ShockSeries,
    decompose,
    decomposition,
    draw_admissible,
    poor_mans_split,
    write_decomposition_report,
)

logger = logging.getLogger(__name__)

# spawn keys under the master seed
ROTATION_STREAM = 1
POSTERIOR_STREAM = 2


def stream(cfg: RunConfig, key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.seed, spawn_key=(key,))


@dataclass
class Inputs:
    panel: MonthlyPanel
    events: EventSurprises
    truth: Truth | None = None


@dataclass
class RunResult:
    out_dir: Path
    bands: dict[tuple[str, str], IrfBand]
    shocks: ShockSeries
    decomposition: Decomposition | None
    files: list[Path] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def load_inputs(cfg: RunConfig) -> Inputs:
    """Read or simulate the data, then cut panel and events to the sample window."""
    truth = None
    if cfg.synthetic is not None:
        panel, events, truth = simulate_dgp(cfg.synthetic)
    else:
        panel = load_panel(cfg.panel_path, cfg.columns)
        events = load_surprises(cfg.surprises_path)
    start = cfg.sample_start or panel.start
    end = cfg.sample_end or panel.end
    return Inputs(panel.window(start, end), events.between(start, end), truth)


def identify_events(cfg: RunConfig, events: EventSurprises) -> tuple[Decomposition | None, ShockSeries]:
    if cfg.identification == "poor_mans":
        return None, poor_mans_split(events)
    grid = RotationGrid(cfg.n_angles)
    if cfg.identification == "fixed_angle":
        d = decomposition(events, grid, "fixed_angle", cfg.angle)
    else:
        # uniform_rotations keeps the median rotation as its benchmark series
        d = decomposition(events, grid, "median_rotation")
    return d, decompose(events, d.theta_star, d)


def monthly_shock(shocks: ShockSeries, events: EventSurprises, panel: MonthlyPanel, variant: str) -> np.ndarray:
    if variant == "raw_hfi":
        return aggregate_events_to_monthly(events.dates, events.ir, panel.start, panel.end)
    monthly = shocks.to_monthly(panel.start, panel.end)
    return monthly.mp if variant == "pure_mp" else monthly.info


def varx_spec(cfg: RunConfig, panel: MonthlyPanel) -> VarxSpec:
    b = cfg.bvar
    return VarxSpec(
        n=panel.values.shape[1],
        p=b.lags,
        covid=cfg.covid_dummy,
        exo_lags=b.exo_lags,
        horizon=b.horizon,
        hyper=b.hyper,
    )


def estimate(cfg: RunConfig, panel: MonthlyPanel, shock: np.ndarray, engine: str, variant: str) -> IrfBand:
    tag = {"variant": variant}
    if engine == "bvar":
        return estimate_irf(
            panel,
            shock,
            varx_spec(cfg, panel),
            n_draws=cfg.bvar.n_draws,
            seed=stream(cfg, POSTERIOR_STREAM),
            threads=cfg.threads,
            coverage=cfg.bvar.coverage,
            meta=tag,
        )
    spec = replace(cfg.lp, covid=cfg.covid_dummy)
    return lp_irf(panel, shock, spec, meta=tag).band


def rotation_uncertainty_bands(
    cfg: RunConfig,
    n_rot: int | None = None,
    inputs: Inputs | None = None,
    angles: np.ndarray | None = None,
) -> IrfBand:
    """Pool posterior IRF draws across uniformly drawn admissible rotations.

    Each angle receives ``max(n_draws // n_rot, 50)`` posterior draws taken
    from consecutive substreams of the posterior seed, so a single angle
    equal to the median reproduces the benchmark band exactly.
    ``angles`` overrides the random draw.
    """
    inputs = inputs or load_inputs(cfg)
    n_rot = n_rot or cfg.n_rot
    grid = RotationGrid(cfg.n_angles)
    base = decomposition(inputs.events, grid, "median_rotation")
    if angles is None:
        angles = draw_admissible(base.admissible, n_rot, stream(cfg, ROTATION_STREAM))
    angles = np.asarray(angles, dtype=float)
    per = max(cfg.bvar.n_draws // len(angles), 50)
    spec = varx_spec(cfg, inputs.panel)
    seed = stream(cfg, POSTERIOR_STREAM)
    pooled = []
    for j, th in enumerate(angles):
        shocks = decompose(inputs.events, float(th), base)
        s, _ = standardize(monthly_shock(shocks, inputs.events, inputs.panel, cfg.variant))
        post, _ = fit_varx(inputs.panel, s, spec)
        post = sample_posterior(post, per, seed, cfg.threads, offset=j * per)
        pooled.append(irf_draws(post, spec))
    meta = {
        "engine": "bvar",
        "variant": cfg.variant,
        "pooling": "uniform_rotations",
        "n_rot": int(len(angles)),
        "draws_per_angle": per,
        "n_distinct_angles": int(np.unique(angles).size),
    }
    return IrfBand.from_draws(inputs.panel.names, np.concatenate(pooled), cfg.bvar.coverage, meta)


def _write_band(out: Path, band: IrfBand, engine: str, variant: str, svg: bool = True) -> list[Path]:
    p = out / f"irf_{engine}_{variant}.csv"
    band.write_csv(p)
    files = [p]
    if svg:
        files += write_fan_charts(band, out, f"{engine}_{variant}")
    return files


def write_run_meta(cfg: RunConfig, out: Path, t0: float, extra: dict | None = None) -> Path:
    meta = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "library_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "wall_time_s": round(time.perf_counter() - t0, 3),
        **(extra or {}),
    }
    p = out / "run_meta.json"
    atomic_write_text(p, json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return p


def _decomp_meta(d: Decomposition | None, shocks: ShockSeries) -> dict:
    return d.summary() if d is not None else dict(shocks.provenance)


def run_pipeline(cfg: RunConfig, svg: bool = True) -> RunResult:
    """Full run for the configured variant; writes CSVs, SVGs, shocks and metadata."""
    t0 = time.perf_counter()
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    d, shocks = identify_events(cfg, inputs.events)
    files = []
    p = out / "shocks.csv"
    write_decomposition_report(inputs.events, shocks, p)
    files.append(p)

    shock = monthly_shock(shocks, inputs.events, inputs.panel, cfg.variant)
    bands: dict[tuple[str, str], IrfBand] = {}
    for engine in cfg.engines:
        if engine == "bvar" and cfg.identification == "uniform_rotations":
            band = rotation_uncertainty_bands(cfg, inputs=inputs)
        else:
            band = estimate(cfg, inputs.panel, shock, engine, cfg.variant)
        bands[(engine, cfg.variant)] = band
        files += _write_band(out, band, engine, cfg.variant, svg)

    extra = {
        "identification": _decomp_meta(d, shocks),
        "sample": {"start": str(inputs.panel.start), "end": str(inputs.panel.end), "T": inputs.panel.T},
        "n_events": len(inputs.events),
        "estimates": {f"{e}_{v}": b.meta for (e, v), b in bands.items()},
        "artifacts": sorted(f.name for f in files),
    }
    if inputs.truth is not None:
        extra["truth"] = inputs.truth.as_dict()
    files.append(write_run_meta(cfg, out, t0, extra))
    return RunResult(out, bands, shocks, d, files, extra)


def compare_shock_variants(cfg: RunConfig, engine: str | None = None, svg: bool = True) -> dict[str, IrfBand]:
    """Estimate under the policy, information and raw-surprise series with shared seeds."""
    t0 = time.perf_counter()
    cfg.validate()
    if cfg.identification == "poor_mans":
        raise ConfigError("variant comparison needs rotational identification")
    engine = engine or cfg.engines[0]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    d, shocks = identify_events(cfg, inputs.events)
    write_decomposition_report(inputs.events, shocks, out / "shocks.csv")
    bands = {}
    for variant in ("pure_mp", "info", "raw_hfi"):
        shock = monthly_shock(shocks, inputs.events, inputs.panel, variant)
        bands[variant] = estimate(cfg, inputs.panel, shock, engine, variant)
        _write_band(out, bands[variant], engine, variant, svg)
    atomic_write_text(out / f"compare_{engine}.csv", side_by_side(bands))
    write_run_meta(
        cfg,
        out,
        t0,
        {"identification": _decomp_meta(d, shocks), "engine": engine, "variants": list(bands)},
    )
    return bands


def side_by_side(bands: dict[str, IrfBand]) -> str:
    names = list(bands)
    first = bands[names[0]]
    head = ["variable", "horizon"] + [f"{v}_{q}" for v in names for q in ("lo", "median", "hi")]
    lines = [",".join(head)]
    for i, var in enumerate(first.variables):
        for h in range(first.horizon + 1):
            cells = [var, str(h)]
            for v in names:
                b = bands[v]
                cells += [format_float(b.lo[i, h]), format_float(b.point[i, h]), format_float(b.hi[i, h])]
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def run_identify(cfg: RunConfig) -> tuple[Decomposition | None, ShockSeries]:
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    d, shocks = identify_events(cfg, inputs.events)
    write_decomposition_report(inputs.events, shocks, out / "shocks.csv")
    write_run_meta(cfg, out, t0, {"identification": _decomp_meta(d, shocks)})
    return d, shocks


def run_rotation_bands(cfg: RunConfig, svg: bool = True) -> tuple[IrfBand, IrfBand]:
    """Pooled rotation band plus the median-rotation benchmark, both written out."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    d, shocks = identify_events(replace(cfg, identification="median_rotation"), inputs.events)
    bench = estimate(cfg, inputs.panel, monthly_shock(shocks, inputs.events, inputs.panel, cfg.variant), "bvar", cfg.variant)
    pooled = rotation_uncertainty_bands(cfg, inputs=inputs)
    _write_band(out, bench, "bvar", cfg.variant, svg)
    _write_band(out, pooled, "bvar", f"{cfg.variant}_rotations", svg)
    # diagnostic only: pooling need not widen every cell
    wider = float(np.mean(pooled.half_width >= bench.half_width))
    write_run_meta(
        cfg,
        out,
        t0,
        {"identification": _decomp_meta(d, shocks), "pooled": pooled.meta, "wider_fraction": wider},
    )
    return pooled, bench


def run_simulate(cfg: RunConfig) -> Inputs:
    """Write a synthetic panel, its surprises and the true responses."""
    t0 = time.perf_counter()
    if cfg.synthetic is None:
        raise ConfigError("simulate needs a [synthetic] block")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel, events, truth = simulate_dgp(cfg.synthetic)
    write_panel(panel, out / "panel.csv")
    write_surprises(events, out / "surprises.csv")
    atomic_write_text(out / "truth.json", json.dumps(truth.as_dict(), indent=2) + "\n")
    write_run_meta(cfg, out, t0, {"truth": truth.as_dict()})
    return Inputs(panel, events, truth)
