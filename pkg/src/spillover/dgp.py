"""Synthetic VARX data with known responses and sign-identified surprises."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from spillover.bvar import dynamic_multipliers, spectral_radius
from spillover.dataio import ColumnSpec, EventSurprises, Month, MonthlyPanel
from spillover.shockid import RotationGrid, admissible_angles, cholesky2, median_rotation, rotation, signs_hold


class UnstableDgpError(ValueError):
    pass


def _default_lags() -> np.ndarray:
    # row convention: y_t = sum_l y_{t-l} A_l + ...
    A1 = np.array([[0.70, 0.05, 0.00], [0.10, 0.60, 0.05], [0.00, 0.10, 0.50]])
    A2 = np.array([[0.05, 0.00, 0.00], [0.00, 0.05, 0.00], [0.00, 0.00, 0.05]])
    return np.stack([A1, A2])


@dataclass
class DgpParams:
    names: tuple[str, ...] = ("y1", "y2", "y3")
    lags: np.ndarray = field(default_factory=_default_lags)
    mp_impact: np.ndarray = field(default_factory=lambda: np.array([1.0, -0.6, 0.4]))
    info_impact: np.ndarray = field(default_factory=lambda: np.array([-0.5, 0.3, 0.3]))
    innovation_cov: np.ndarray = field(default_factory=lambda: np.eye(3))
    intercept: np.ndarray | None = None
    surprise_cov: np.ndarray = field(default_factory=lambda: np.array([[4.0, -0.3], [-0.3, 0.25]]))
    theta: float | None = None
    T: int = 300
    start: Month = Month(2000, 1)
    seed: int = 0
    burn_in: int = 200
    truth_horizon: int = 48

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        if self.lags.ndim == 2:
            self.lags = self.lags[None]
        n = self.lags.shape[1]
        self.names = tuple(self.names)
        self.mp_impact = np.asarray(self.mp_impact, dtype=float).reshape(n)
        self.info_impact = np.asarray(self.info_impact, dtype=float).reshape(n)
        self.innovation_cov = np.asarray(self.innovation_cov, dtype=float).reshape(n, n)
        self.surprise_cov = np.asarray(self.surprise_cov, dtype=float).reshape(2, 2)
        if len(self.names) != n:
            raise ValueError(f"{len(self.names)} names for {n} variables")

    @property
    def n(self) -> int:
        return self.lags.shape[1]


@dataclass
class Truth:
    impact: np.ndarray  # 2x2 surprise impact matrix, columns (policy, information)
    theta: float
    mp_irf: np.ndarray  # n x (H+1)
    info_irf: np.ndarray
    mp: np.ndarray  # monthly structural shocks
    info: np.ndarray

    def as_dict(self) -> dict:
        return {
            "impact": self.impact.tolist(),
            "theta": self.theta,
            "mp_irf": self.mp_irf.tolist(),
            "info_irf": self.info_irf.tolist(),
        }


def whiten(z: np.ndarray) -> np.ndarray:
    """Demean and orthonormalize columns to identity sample covariance (divisor T-1)."""
    d = z - z.mean(axis=0)
    S = d.T @ d / (d.shape[0] - 1)
    L = np.linalg.cholesky(S)
    return np.linalg.solve(L, d.T).T


def simulate_dgp(params: DgpParams) -> tuple[MonthlyPanel, EventSurprises, Truth]:
    """Simulate one announcement per month and the VARX responding to it.

    Structural shocks are whitened in-sample, so the surprises' sample
    covariance equals ``surprise_cov`` exactly and decomposing at the true
    angle returns the structural shocks.
    """
    n, p, T = params.n, params.lags.shape[0], params.T
    if spectral_radius(params.lags) >= 1.0:
        raise UnstableDgpError("companion spectral radius >= 1")
    C = cholesky2(params.surprise_cov)
    if params.theta is None:
        theta = median_rotation(admissible_angles(C, RotationGrid()), RotationGrid().spacing)
    else:
        theta = float(params.theta)
    A_true = C @ rotation(theta)
    if not signs_hold(A_true):
        raise ValueError(f"theta={theta} violates the sign restrictions for this covariance")
    try:
        L_eps = np.linalg.cholesky(params.innovation_cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance not positive definite") from exc

    rng = np.random.default_rng(params.seed)
    u = whiten(rng.standard_normal((T, 2)))
    m = u @ A_true.T
    eps = rng.standard_normal((params.burn_in + T, n)) @ L_eps.T
    c = np.zeros(n) if params.intercept is None else np.asarray(params.intercept, dtype=float)

    total = params.burn_in + T
    y = np.zeros((total + p, n))
    drive = np.zeros((total, n))
    drive[params.burn_in :] = np.outer(u[:, 0], params.mp_impact) + np.outer(u[:, 1], params.info_impact)
    for t in range(total):
        acc = c + eps[t] + drive[t]
        for l in range(1, p + 1):
            acc += y[p + t - l] @ params.lags[l - 1]
        y[p + t] = acc
    values = y[p + params.burn_in :]

    months = [params.start + t for t in range(T)]
    dates = [dt.date(mo.year, mo.month, 15) for mo in months]
    panel = MonthlyPanel(params.start, [ColumnSpec(nm, "level", "domestic") for nm in params.names], values)
    events = EventSurprises(dates, m[:, 0], m[:, 1])
    H = params.truth_horizon
    truth = Truth(
        impact=A_true,
        theta=theta,
        mp_irf=dynamic_multipliers(params.lags, params.mp_impact, H),
        info_irf=dynamic_multipliers(params.lags, params.info_impact, H),
        mp=u[:, 0],
        info=u[:, 1],
    )
    return panel, events, truth


def two_shock_params(**overrides) -> DgpParams:
    """Scalar-outcome design where the policy shock raises and information lowers ``y``."""
    base = dict(
        names=("y",),
        lags=np.array([[[0.5]]]),
        mp_impact=np.array([1.0]),
        info_impact=np.array([-1.0]),
        innovation_cov=np.eye(1),
        surprise_cov=np.array([[1.0, 0.2], [0.2, 1.0]]),
        T=200,
    )
    base.update(overrides)
    return DgpParams(**base)

