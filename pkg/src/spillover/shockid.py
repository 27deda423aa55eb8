"""Split announcement surprises into pure policy and information shocks.

The rotational method orthogonalizes the (rate, equity) surprise covariance
with a Cholesky factor ``C`` and searches rotations ``R(theta)`` for impact
matrices ``A = C R(theta)`` whose columns carry the signs

    policy shock:      rate up, equity down   (A11 > 0, A21 < 0)
    information shock: rate up, equity up     (A12 > 0, A22 > 0)

The poor man's split labels each event by the sign of ``ir * eq`` instead.
"""
from __future__ import annotations

import datetime as dt
import io
import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from spillover.dataio import (
    EventSurprises,
    Month,
    aggregate_events_to_monthly,
    atomic_write_text,
    format_float,
)

METHODS = ("median_rotation", "uniform_draw", "fixed_angle", "poor_mans")


class IdentificationError(ValueError):
    pass


class InsufficientEventsError(IdentificationError):
    pass


class ZeroVarianceError(IdentificationError):
    pass


class NotPositiveDefiniteError(IdentificationError):
    pass


class EmptyAdmissibleSetError(IdentificationError):
    pass


class NonContiguousArcError(IdentificationError):
    pass


class InadmissibleAngleError(IdentificationError):
    pass


@dataclass(frozen=True)
class RotationGrid:
    n_angles: int = 999

    def __post_init__(self):
        if self.n_angles < 1:
            raise ValueError("n_angles must be >= 1")

    @property
    def spacing(self) -> float:
        return 2.0 * math.pi / self.n_angles

    @property
    def angles(self) -> np.ndarray:
        return -math.pi + self.spacing * np.arange(self.n_angles)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Decomposition:
    covariance: np.ndarray
    chol: np.ndarray
    mean: np.ndarray
    admissible: np.ndarray
    theta_star: float | None
    method: str
    spacing: float = 2.0 * math.pi / 999

    def impact(self, theta: float | None = None) -> np.ndarray:
        """Impact matrix ``C R(theta)``; columns are (policy, information)."""
        th = self.theta_star if theta is None else theta
        return self.chol @ rotation(th)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "theta_star": self.theta_star,
            "n_admissible": int(self.admissible.size),
            "arc": [float(self.admissible[0]), float(self.admissible[-1])]
            if self.admissible.size
            else None,
        }


@dataclass(frozen=True)
class ShockSeries:
    """Policy and information shocks at event or monthly frequency."""

    index: tuple
    mp: np.ndarray = field(repr=False)
    info: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)
    frequency: str = "event"

    def __post_init__(self):
        mp = np.asarray(self.mp, dtype=float)
        info = np.asarray(self.info, dtype=float)
        if not (len(self.index) == mp.size == info.size):
            raise ValueError("index, mp and info lengths differ")
        object.__setattr__(self, "index", tuple(self.index))
        object.__setattr__(self, "mp", mp)
        object.__setattr__(self, "info", info)

    def __len__(self) -> int:
        return len(self.index)

    def to_monthly(self, start: Month, end: Month) -> "ShockSeries":
        if self.frequency != "event":
            raise ValueError("series is already monthly")
        both = aggregate_events_to_monthly(
            self.index, np.column_stack([self.mp, self.info]), start, end
        )
        months = [start + t for t in range(end - start + 1)]
        return ShockSeries(months, both[:, 0], both[:, 1], dict(self.provenance), "month")


def sample_covariance(events: EventSurprises) -> np.ndarray:
    """Covariance of demeaned (ir, eq) with divisor ``T_e - 1``."""
    if len(events) < 2:
        raise InsufficientEventsError(f"need at least 2 events, got {len(events)}")
    m = events.matrix
    d = m - m.mean(axis=0)
    S = d.T @ d / (len(events) - 1)
    for j, name in enumerate(("ir", "eq")):
        if S[j, j] <= 0.0:
            raise ZeroVarianceError(f"{name} surprises have zero variance")
    return 0.5 * (S + S.T)


def cholesky2(S: np.ndarray) -> np.ndarray:
    """Closed-form lower Cholesky factor of a 2x2 SPD matrix."""
    S = np.asarray(S, dtype=float)
    if S.shape != (2, 2) or not np.isclose(S[0, 1], S[1, 0], rtol=0, atol=1e-12 * max(1.0, abs(S).max())):
        raise NotPositiveDefiniteError("expected a symmetric 2x2 matrix")
    a, b, c = S[0, 0], S[1, 0], S[1, 1]
    det = a * c - b * b
    # relative threshold: rounding can leave det at ~eps of a*c for singular input
    if a <= 0 or det <= 1e-14 * a * c:
        raise NotPositiveDefiniteError(f"covariance not positive definite (S11={a}, det={det})")
    l11 = math.sqrt(a)
    l21 = b / l11
    l22 = math.sqrt(det / a)
    return np.array([[l11, 0.0], [l21, l22]])


def signs_hold(A: np.ndarray) -> np.ndarray:
    """Strict sign restrictions on an impact matrix (or stack of them)."""
    A = np.asarray(A)
    return (A[..., 0, 0] > 0) & (A[..., 1, 0] < 0) & (A[..., 0, 1] > 0) & (A[..., 1, 1] > 0)


def admissible_angles(C: np.ndarray, grid: RotationGrid | None = None) -> np.ndarray:
    """Grid angles whose rotation satisfies all four sign restrictions, ascending."""
    grid = grid or RotationGrid()
    th = grid.angles
    c, s = np.cos(th), np.sin(th)
    R = np.empty((th.size, 2, 2))
    R[:, 0, 0], R[:, 0, 1], R[:, 1, 0], R[:, 1, 1] = c, -s, s, c
    A = np.asarray(C, dtype=float) @ R
    out = th[signs_hold(A)]
    if out.size == 0:
        raise EmptyAdmissibleSetError(
            f"no admissible rotation on a {grid.n_angles}-point grid"
        )
    return out


def _unwrap_arc(angles: np.ndarray, spacing: float) -> np.ndarray:
    tol = 1e-6 * spacing
    gaps = np.flatnonzero(np.diff(angles) > spacing + tol)
    if gaps.size == 0:
        return angles
    wraps = abs(angles[0] + 2 * math.pi - angles[-1] - spacing) <= tol
    if gaps.size == 1 and wraps:
        cut = gaps[0] + 1
        return np.concatenate([angles[cut:], angles[:cut] + 2 * math.pi])
    raise NonContiguousArcError(
        f"admissible set splits into {gaps.size + 1} arcs; grid likely too coarse"
    )


def median_rotation(admissible: Sequence[float], spacing: float = 2.0 * math.pi / 999) -> float:
    """Circular median of a contiguous arc of grid angles.

    Even counts resolve to the lower of the two middle angles.
    """
    a = np.sort(np.asarray(admissible, dtype=float))
    if a.size == 0:
        raise EmptyAdmissibleSetError("empty admissible set")
    arc = _unwrap_arc(a, spacing)
    theta = float(arc[(arc.size - 1) // 2])
    if theta >= math.pi:
        theta -= 2 * math.pi
    return theta


def draw_admissible(admissible: Sequence[float], n: int, seed: int | np.random.SeedSequence) -> np.ndarray:
    """Uniform draws with replacement from the discrete admissible set."""
    a = np.asarray(admissible, dtype=float)
    if a.size == 0:
        raise EmptyAdmissibleSetError("empty admissible set")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return a[rng.integers(0, a.size, size=n)]


def decomposition(
    events: EventSurprises,
    grid: RotationGrid | None = None,
    method: str = "median_rotation",
    theta: float | None = None,
) -> Decomposition:
    grid = grid or RotationGrid()
    S = sample_covariance(events)
    C = cholesky2(S)
    adm = admissible_angles(C, grid)
    if method == "median_rotation":
        theta = median_rotation(adm, grid.spacing)
    elif method in ("fixed_angle", "uniform_draw"):
        if theta is None:
            raise ValueError(f"{method} requires an angle")
    else:
        raise ValueError(f"unknown rotational method {method!r}")
    return Decomposition(S, C, events.matrix.mean(axis=0), adm, theta, method, grid.spacing)


def decompose(
    events: EventSurprises,
    theta: float,
    decomp: Decomposition | None = None,
    check: bool = True,
) -> ShockSeries:
    """Structural shocks ``u_t = R(theta)' C^{-1} (m_t - mean(m))``."""
    if decomp is None:
        decomp = decomposition(events, method="fixed_angle", theta=theta)
    C = decomp.chol
    if C[0, 0] <= 0 or C[1, 1] <= 0:
        raise NotPositiveDefiniteError("singular Cholesky factor")
    if check and not signs_hold(C @ rotation(theta)):
        raise InadmissibleAngleError(f"theta={theta} violates the sign restrictions")
    d = events.matrix - decomp.mean
    # forward substitution on the 2x2 triangle
    z0 = d[:, 0] / C[0, 0]
    z1 = (d[:, 1] - C[1, 0] * z0) / C[1, 1]
    u = np.column_stack([z0, z1]) @ rotation(theta)
    prov = decomp.summary()
    prov["theta"] = float(theta)
    return ShockSeries(events.dates, u[:, 0], u[:, 1], prov, "event")


def poor_mans_split(events: EventSurprises) -> ShockSeries:
    """Negative ``ir*eq`` goes to the policy shock, positive to information."""
    # sign product, not value product: tiny surprises must not underflow to a tie
    prod = np.sign(events.ir) * np.sign(events.eq)
    mp = np.where(prod < 0, events.ir, 0.0)
    info = np.where(prod > 0, events.ir, 0.0)
    return ShockSeries(events.dates, mp, info, {"method": "poor_mans", "theta_star": None}, "event")


def identify(
    events: EventSurprises,
    method: str = "median_rotation",
    theta: float | None = None,
    grid: RotationGrid | None = None,
) -> tuple[Decomposition | None, ShockSeries]:
    """One-call identification returning the decomposition (if rotational) and shocks."""
    if method == "poor_mans":
        return None, poor_mans_split(events)
    if method not in METHODS:
        raise ValueError(f"unknown identification method {method!r}")
    d = decomposition(events, grid, method, theta)
    return d, decompose(events, d.theta_star, d)


def write_decomposition_report(
    events: EventSurprises, shocks: ShockSeries, path: str | os.PathLike
) -> None:
    """CSV with columns date, ir, eq, mp, info, method, theta_star."""
    if shocks.frequency != "event" or tuple(shocks.index) != tuple(events.dates):
        raise ValueError("report needs event-frequency shocks aligned with the events")
    method = shocks.provenance.get("method", "")
    th = shocks.provenance.get("theta_star")
    th_text = "" if th is None else format_float(th)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "ir", "eq", "mp", "info", "method", "theta_star"])
    for d, a, b, x, y in zip(events.dates, events.ir, events.eq, shocks.mp, shocks.info):
        w.writerow([d.isoformat(), format_float(a), format_float(b), format_float(x), format_float(y), method, th_text])
    atomic_write_text(path, buf.getvalue())


def read_decomposition_report(path: str | os.PathLike) -> tuple[EventSurprises, ShockSeries]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    dates = [dt.date.fromisoformat(r["date"]) for r in rows]
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    th = rows[0]["theta_star"] if rows else ""
    prov = {"method": rows[0]["method"] if rows else "", "theta_star": float(th) if th else None}
    return (
        EventSurprises(dates, col("ir"), col("eq")),
        ShockSeries(dates, col("mp"), col("info"), prov, "event"),
    )
