"""Impulse-response bands shared by both engines, plus CSV/SVG export."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spillover.dataio import atomic_write_text, format_float


@dataclass(frozen=True)
class IrfBand:
    """Per-variable response paths over horizons ``0..H``.

    ``point``, ``lo`` and ``hi`` are ``n_vars x (H+1)`` arrays.
    """

    variables: tuple[str, ...]
    point: np.ndarray = field(repr=False)
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.point, self.lo, self.hi)]
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
            raise ValueError("point/lo/hi shapes differ")
        if arrs[0].shape[0] != len(self.variables):
            raise ValueError("one path per variable expected")
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "point", arrs[0])
        object.__setattr__(self, "lo", arrs[1])
        object.__setattr__(self, "hi", arrs[2])

    @property
    def horizon(self) -> int:
        return self.point.shape[1] - 1

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @classmethod
    def from_draws(
        cls,
        variables,
        draws: np.ndarray,
        coverage: float = 0.90,
        meta: dict | None = None,
    ) -> "IrfBand":
        """Pointwise median and equal-tailed band from ``n_draws x n_vars x (H+1)`` paths."""
        tail = 100.0 * (1.0 - coverage) / 2.0
        lo, mid, hi = np.percentile(draws, [tail, 50.0, 100.0 - tail], axis=0)
        return cls(variables, mid, lo, hi, dict(meta or {}))

    def select(self, names) -> "IrfBand":
        idx = [self.variables.index(n) for n in names]
        return IrfBand([self.variables[i] for i in idx], self.point[idx], self.lo[idx], self.hi[idx], dict(self.meta))

    def contains(self, paths: np.ndarray) -> np.ndarray:
        return (self.lo <= paths) & (paths <= self.hi)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable", "horizon", "lo", "median", "hi"])
        for i, v in enumerate(self.variables):
            for h in range(self.horizon + 1):
                w.writerow([v, h, format_float(self.lo[i, h]), format_float(self.point[i, h]), format_float(self.hi[i, h])])
        return buf.getvalue()

    def write_csv(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def read_csv(cls, path: str | os.PathLike, meta: dict | None = None) -> "IrfBand":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        names: list[str] = []
        for r in rows:
            if r["variable"] not in names:
                names.append(r["variable"])
        H = max(int(r["horizon"]) for r in rows)
        out = {k: np.full((len(names), H + 1), np.nan) for k in ("lo", "median", "hi")}
        for r in rows:
            i, h = names.index(r["variable"]), int(r["horizon"])
            for k in out:
                out[k][i, h] = float(r[k])
        return cls(names, out["median"], out["lo"], out["hi"], dict(meta or {}))


def fan_chart_svg(band: IrfBand, variable: str, title: str | None = None) -> str:
    """Render one variable's band as a deterministic SVG document."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    i = band.variables.index(variable)
    h = np.arange(band.horizon + 1)
    with matplotlib.rc_context({"svg.hashsalt": "spillover", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.fill_between(h, band.lo[i], band.hi[i], color="#4a7ab5", alpha=0.3, linewidth=0)
        ax.plot(h, band.point[i], color="black", linewidth=1.5)
        ax.axhline(0.0, color="grey", linewidth=0.8, linestyle="--")
        ax.set_xlim(0, max(band.horizon, 1))
        ax.set_xlabel("months")
        ax.set_title(title or variable)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def write_fan_charts(band: IrfBand, out_dir: str | os.PathLike, suffix: str) -> list[Path]:
    """One ``<variable>_<suffix>.svg`` per variable."""
    paths = []
    for v in band.variables:
        p = Path(out_dir) / f"{v}_{suffix}.svg"
        atomic_write_text(p, fan_chart_svg(band, v, f"{v} ({suffix.replace('_', ', ')})"))
        paths.append(p)
    return paths
