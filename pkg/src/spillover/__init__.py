"""Monetary-policy vs. information shock identification and spillover IRFs.

Two estimation engines share one shock pipeline: a conjugate Normal-Wishart
Bayesian VARX (:mod:`spillover.bvar`) and local projections
(:mod:`spillover.localproj`).  Shocks come from announcement surprises via
rotational sign restrictions or the poor man's sign split
(:mod:`spillover.shockid`).
"""

__version__ = "0.1.0"

from spillover.dataio import (
    ColumnSpec,
    Deterministics,
    EventSurprises,
    Month,
    MonthlyPanel,
    build_deterministics,
    load_panel,
    load_surprises,
)
from spillover.irf import IrfBand
from spillover.shockid import (
    Decomposition,
    RotationGrid,
    ShockSeries,
    decompose,
    identify,
    poor_mans_split,
)

__all__ = [
    "ColumnSpec",
    "Decomposition",
    "Deterministics",
    "EventSurprises",
    "IrfBand",
    "Month",
    "MonthlyPanel",
    "RotationGrid",
    "ShockSeries",
    "build_deterministics",
    "decompose",
    "identify",
    "load_panel",
    "load_surprises",
    "poor_mans_split",
]
