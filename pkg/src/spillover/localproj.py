"""Local projection impulse responses with HAC inference.

For each horizon ``h`` the outcome ``y_{t+h}`` is regressed on the
contemporaneous shock, lags of the shock, the outcome and the domestic and
foreign controls, plus a constant, linear trend and COVID indicator.  The
shock coefficient is the response at ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy import linalg

from spillover.dataio import Month, MonthlyPanel, build_deterministics
from spillover.irf import IrfBand

INFERENCE = ("newey_west", "heteroskedasticity_robust")


class LpError(ValueError):
    pass


class EmptyDesignError(LpError):
    pass


class RankDeficientError(LpError):
    pass


@dataclass(frozen=True)
class LpSpec:
    horizon: int = 36
    shock_lags: int = 3
    dep_lags: int = 3
    domestic_lags: int = 3
    foreign_lags: int = 3
    domestic: tuple[str, ...] | None = None
    foreign: tuple[str, ...] | None = None
    constant: bool = True
    trend: bool = True
    covid: bool = True
    inference: str = "newey_west"
    bandwidth_offset: int = 0
    confidence: float = 0.90
    standardize: bool = True
    common_sample: bool = False
    aic: bool = False
    aic_max_lag: int = 6

    def __post_init__(self):
        lags = (self.shock_lags, self.dep_lags, self.domestic_lags, self.foreign_lags)
        if min(lags) < 0 or self.horizon < 0:
            raise ValueError("lag counts and horizon must be non-negative")
        if self.inference not in INFERENCE:
            raise ValueError(f"unknown inference {self.inference!r}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    @property
    def max_lag(self) -> int:
        return max(self.shock_lags, self.dep_lags, self.domestic_lags, self.foreign_lags)

    @property
    def z(self) -> float:
        return NormalDist().inv_cdf(0.5 + self.confidence / 2)

    def with_lags(self, j: int) -> "LpSpec":
        return replace(self, shock_lags=j, dep_lags=j, domestic_lags=j, foreign_lags=j)


@dataclass(frozen=True)
class LpDesign:
    y: np.ndarray
    X: np.ndarray
    rows: tuple[Month, ...]
    columns: tuple[str, ...]


@dataclass
class LpResult:
    variables: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    n_obs: np.ndarray
    band: IrfBand
    meta: dict = field(default_factory=dict)


def control_sets(panel: MonthlyPanel, dependent: str, spec: LpSpec) -> tuple[list[str], list[str]]:
    if spec.domestic is not None:
        dom = [c for c in spec.domestic if c != dependent]
    else:
        dom = [c.name for c in panel.columns if c.role != "foreign" and c.name != dependent]
    if spec.foreign is not None:
        fgn = [c for c in spec.foreign if c != dependent]
    else:
        fgn = [c.name for c in panel.columns if c.role == "foreign" and c.name != dependent]
    return dom, fgn


def build_lp_design(
    panel: MonthlyPanel,
    shock: np.ndarray,
    h: int,
    spec: LpSpec,
    dependent: str | None = None,
) -> LpDesign:
    """Regression of ``dependent_{t+h}`` on the shock block, lags and deterministics.

    Rows start at the largest lag; the last ``h`` rows (``H`` in
    common-sample mode) are lost to the lead.
    """
    dependent = dependent or panel.names[0]
    shock = np.asarray(shock, dtype=float).reshape(-1)
    T = panel.T
    if shock.size != T:
        raise LpError(f"shock length {shock.size} != panel length {T}")
    lead = spec.horizon if spec.common_sample else h
    t0 = spec.max_lag
    t1 = T - 1 - lead
    if t1 < t0:
        raise EmptyDesignError(f"no usable rows: T={T}, max lag {t0}, lead {lead}")
    t = np.arange(t0, t1 + 1)

    cols: list[np.ndarray] = [shock[t]]
    names = ["shock"]
    for j in range(1, spec.shock_lags + 1):
        cols.append(shock[t - j])
        names.append(f"shock_l{j}")
    y_all = panel.column(dependent)
    for j in range(1, spec.dep_lags + 1):
        cols.append(y_all[t - j])
        names.append(f"{dependent}_l{j}")
    dom, fgn = control_sets(panel, dependent, spec)
    for group, nlags in ((dom, spec.domestic_lags), (fgn, spec.foreign_lags)):
        for name in group:
            x = panel.column(name)
            for j in range(1, nlags + 1):
                cols.append(x[t - j])
                names.append(f"{name}_l{j}")
    det = build_deterministics(panel.start, T)
    if spec.constant:
        cols.append(np.ones(t.size))
        names.append("const")
    if spec.trend:
        cols.append(det.trend[t])
        names.append("trend")
    if spec.covid:
        cols.append(det.covid[t])
        names.append("covid")
    months = panel.months()
    return LpDesign(
        y=y_all[t + h],
        X=np.column_stack(cols),
        rows=tuple(months[i] for i in t),
        columns=tuple(names),
    )


def _gram_inverse(X: np.ndarray) -> np.ndarray:
    G = X.T @ X
    k = G.shape[0]
    try:
        L = linalg.cholesky(G, lower=True)
    except linalg.LinAlgError:
        ridge = 1e-10 * np.trace(G) / k
        try:
            L = linalg.cholesky(G + ridge * np.eye(k), lower=True)
        except linalg.LinAlgError as exc:
            raise RankDeficientError("X'X singular even after ridge") from exc
    return linalg.cho_solve((L, True), np.eye(k))


def ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients and residuals via the normal equations."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < X.shape[1]:
        raise RankDeficientError(f"{X.shape[0]} rows < {X.shape[1]} columns")
    beta = _gram_inverse(X) @ (X.T @ y)
    return beta, y - X @ beta


def hac_se(X: np.ndarray, resid: np.ndarray, bandwidth: int) -> np.ndarray:
    """Newey-West (Bartlett) sandwich standard errors; bandwidth 0 is White's HC0."""
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    X = np.asarray(X, dtype=float)
    g = X * np.asarray(resid, dtype=float)[:, None]
    M = g.T @ g
    for l in range(1, min(bandwidth, g.shape[0] - 1) + 1):
        w = 1.0 - l / (bandwidth + 1.0)
        G = g[l:].T @ g[:-l]
        M += w * (G + G.T)
    bread = _gram_inverse(X)
    V = bread @ M @ bread
    return np.sqrt(np.clip(np.diag(V), 0.0, None))


def aic_lag_order(
    panel: MonthlyPanel, shock: np.ndarray, dependent: str, spec: LpSpec
) -> int:
    """Common lag count in ``1..aic_max_lag`` minimizing AIC of the impact regression."""
    best, best_j = np.inf, 1
    trim = spec.aic_max_lag
    for j in range(1, spec.aic_max_lag + 1):
        d = build_lp_design(panel, shock, 0, replace(spec.with_lags(j), common_sample=False), dependent)
        drop = trim - j  # same estimation rows for every candidate
        y, X = d.y[drop:], d.X[drop:]
        _, e = ols(X, y)
        n = y.size
        aic = n * np.log(e @ e / n) + 2 * X.shape[1]
        if aic < best:
            best, best_j = aic, j
    return best_j


def lp_irf(
    panel: MonthlyPanel,
    shock: np.ndarray,
    spec: LpSpec | None = None,
    variables: Sequence[str] | None = None,
    meta: dict | None = None,
) -> LpResult:
    spec = spec or LpSpec()
    variables = tuple(variables or panel.names)
    shock = np.asarray(shock, dtype=float).reshape(-1)
    scale = 1.0
    if spec.standardize:
        scale = float(np.std(shock, ddof=1))
        if not scale > 0:
            raise LpError("shock has zero variance over the sample")
        shock = shock / scale
    H = spec.horizon
    beta = np.zeros((len(variables), H + 1))
    se = np.zeros_like(beta)
    nobs = np.zeros((len(variables), H + 1), dtype=int)
    lags_used = {}
    for i, v in enumerate(variables):
        vspec = spec.with_lags(aic_lag_order(panel, shock, v, spec)) if spec.aic else spec
        lags_used[v] = vspec.max_lag
        for h in range(H + 1):
            d = build_lp_design(panel, shock, h, vspec, v)
            # identically zero columns (covid outside its window) carry nothing
            keep = np.any(d.X != 0, axis=0)
            keep[0] = True
            X = d.X[:, keep]
            b, e = ols(X, d.y)
            L = h + spec.bandwidth_offset if spec.inference == "newey_west" else 0
            beta[i, h] = b[0]
            se[i, h] = hac_se(X, e, L)[0]
            nobs[i, h] = d.y.size
    z = spec.z
    info = {
        "engine": "local_projection",
        "shock_scale": scale,
        "inference": spec.inference,
        "z": z,
        "lags": lags_used,
        **(meta or {}),
    }
    band = IrfBand(variables, beta, beta - z * se, beta + z * se, info)
    return LpResult(variables, beta, se, nobs, band, info)
