"""Conjugate Normal-Wishart Bayesian VARX.

Regression form ``Y = X B + E`` with rows ``e_t ~ N(0, Sigma)`` and regressor
layout per row::

    [y_{t-1}, ..., y_{t-p}, 1, trend_t, covid_t, s_t, s_{t-1}, ..., s_{t-q}]

where ``s_t`` stacks the exogenous shock series (contemporaneous by default,
``q = exo_lags``).  The prior is ``Sigma ~ IW(S0, alpha0)`` and
``vec(B) | Sigma ~ N(vec(B0), Sigma kron Omega0)`` with diagonal ``Omega0``.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from spillover.dataio import MonthlyPanel, build_deterministics
from spillover.irf import IrfBand

logger = logging.getLogger(__name__)


class BvarError(ValueError):
    pass


class InsufficientDataError(BvarError):
    pass


class SingularSystemError(BvarError):
    pass


class DegenerateScaleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hyperparams:
    own_lag_mean: float = 0.8
    lambda1: float = 0.1
    lambda3: float = 1.0
    lambda4: float = 1e5
    s0_df_offset: int = 2

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be positive")
        if self.lambda3 < 0:
            raise ValueError("lambda3 must be non-negative")
        if not self.lambda4 > 0:
            raise ValueError("lambda4 must be positive")


@dataclass(frozen=True)
class VarxSpec:
    n: int
    p: int = 3
    constant: bool = True
    trend: bool = True
    covid: bool = True
    n_exo: int = 1
    exo_lags: int = 0
    horizon: int = 36
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.horizon < 0 or self.n_exo < 0 or self.exo_lags < 0:
            raise ValueError(f"invalid VARX spec {self}")

    @property
    def n_det(self) -> int:
        return int(self.constant) + int(self.trend) + int(self.covid)

    @property
    def k(self) -> int:
        return self.n * self.p + self.n_det + self.n_exo * (self.exo_lags + 1)

    @property
    def presample(self) -> int:
        return max(self.p, self.exo_lags)

    def exo_row(self, j: int, lag: int = 0) -> int:
        """Row of ``B`` holding exogenous series ``j`` at lag ``lag``."""
        return self.n * self.p + self.n_det + lag * self.n_exo + j


@dataclass(frozen=True)
class NormalWishartPrior:
    B0: np.ndarray
    omega0: np.ndarray  # diagonal of Omega0; np.inf marks a flat direction
    S0: np.ndarray
    alpha0: float

    @property
    def precision(self) -> np.ndarray:
        """Diagonal of ``Omega0^{-1}``."""
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(self.omega0), 0.0, 1.0 / self.omega0)

    @property
    def Omega0(self) -> np.ndarray:
        return np.diag(self.omega0)


@dataclass
class VarxPosterior:
    B_hat: np.ndarray
    Omega_hat: np.ndarray
    S_hat: np.ndarray
    alpha_hat: float
    B_draws: np.ndarray | None = None
    Sigma_draws: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def draws(self) -> list[tuple[np.ndarray, np.ndarray]]:
        if self.B_draws is None:
            return []
        return list(zip(self.B_draws, self.Sigma_draws))


def lagged(values: np.ndarray, lags: Sequence[int], start: int) -> np.ndarray:
    """Columns ``values[t - l]`` for each ``l`` in ``lags``, rows ``t >= start``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    blocks = [values[start - l : T - l] for l in lags]
    return np.hstack(blocks) if blocks else np.empty((T - start, 0))


def build_design(
    values: np.ndarray,
    exo: np.ndarray | None,
    det: np.ndarray | None,
    spec: VarxSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(Y, X)`` dropping the first ``presample`` rows."""
    values = np.asarray(values, dtype=float)
    T = values.shape[0]
    s = spec.presample
    if T <= s:
        raise InsufficientDataError(f"T={T} leaves no rows after {s} presample lags")
    parts = [lagged(values, range(1, spec.p + 1), s)]
    if spec.n_det:
        if det is None or det.shape != (T, spec.n_det):
            raise BvarError(f"expected {spec.n_det} deterministic columns")
        parts.append(det[s:])
    if spec.n_exo:
        exo = np.asarray(exo, dtype=float).reshape(T, -1)
        if exo.shape[1] != spec.n_exo:
            raise BvarError(f"expected {spec.n_exo} exogenous columns, got {exo.shape[1]}")
        parts.append(lagged(exo, range(spec.exo_lags + 1), s))
    return values[s:], np.hstack(parts)


def ar_residual_scales(values: np.ndarray, p: int) -> np.ndarray:
    """Residual standard deviation of a univariate AR(p) with constant, per column."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    if T <= p + 2:
        raise InsufficientDataError(f"need T > p + 2 (T={T}, p={p})")
    out = np.empty(values.shape[1])
    for j in range(values.shape[1]):
        y = values[p:, j]
        X = np.column_stack([np.ones(T - p), lagged(values[:, j], range(1, p + 1), p)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        dof = y.size - X.shape[1]
        out[j] = np.sqrt(resid @ resid / dof)
        # exact fits leave rounding-level residuals
        if out[j] <= 1e-10 * max(1.0, np.abs(y).max()):
            out[j] = 0.0
            warnings.warn(f"column {j}: zero AR residual scale (degenerate series)", DegenerateScaleWarning, stacklevel=2)
    return out


def build_prior(spec: VarxSpec, scales: np.ndarray) -> NormalWishartPrior:
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (spec.n,):
        raise BvarError(f"need {spec.n} scales, got {scales.shape}")
    if np.any(scales <= 0):
        raise BvarError(f"scales must be positive, got {scales}")
    hp = spec.hyper
    n, p = spec.n, spec.p
    B0 = np.zeros((spec.k, n))
    B0[np.arange(n), np.arange(n)] = hp.own_lag_mean
    omega = np.full(spec.k, (hp.lambda1 * hp.lambda4) ** 2)
    for l in range(1, p + 1):
        omega[(l - 1) * n : l * n] = (hp.lambda1 / (l**hp.lambda3 * scales)) ** 2
    return NormalWishartPrior(B0, omega, np.diag(scales**2), float(n + hp.s0_df_offset))


def _chol_with_ridge(P: np.ndarray, meta: dict, label: str) -> np.ndarray:
    try:
        return linalg.cholesky(P, lower=True)
    except linalg.LinAlgError:
        ridge = 1e-10 * np.trace(P) / P.shape[0]
        meta.setdefault("ridge", {})[label] = ridge
        logger.warning("%s not positive definite; adding ridge %.3g", label, ridge)
        try:
            return linalg.cholesky(P + ridge * np.eye(P.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            raise SingularSystemError(f"{label} singular even after ridge") from exc


def posterior_moments(prior: NormalWishartPrior, Y: np.ndarray, X: np.ndarray) -> VarxPosterior:
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    k = prior.B0.shape[0]
    Y = Y.reshape(-1, prior.B0.shape[1])
    X = X.reshape(-1, k)
    meta: dict = {}
    prec = prior.precision
    P = X.T @ X + np.diag(prec)
    L = _chol_with_ridge(P, meta, "posterior precision")
    rhs = prec[:, None] * prior.B0 + X.T @ Y
    B_hat = linalg.cho_solve((L, True), rhs)
    Omega_hat = linalg.cho_solve((L, True), np.eye(k))
    Omega_hat = 0.5 * (Omega_hat + Omega_hat.T)
    # S0 + Y'Y + B0'W B0 - Bh'P Bh, rearranged to avoid cancellation
    E = Y - X @ B_hat
    D = B_hat - prior.B0
    S_hat = prior.S0 + E.T @ E + D.T @ (prec[:, None] * D)
    S_hat = 0.5 * (S_hat + S_hat.T)
    return VarxPosterior(B_hat, Omega_hat, S_hat, prior.alpha0 + Y.shape[0], meta=meta)


def _substream(seed, i: int) -> np.random.Generator:
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.default_rng(np.random.SeedSequence(base.entropy, spawn_key=base.spawn_key + (i,)))


def inverse_wishart_factor(scale_chol: np.ndarray, df: float, rng: np.random.Generator) -> np.ndarray:
    """Return ``F`` with ``F F'`` distributed inverse-Wishart(``L L'``, ``df``).

    Bartlett construction: with ``A`` lower triangular, ``A_ii^2 ~ chi2(df - i)``
    and standard normals below the diagonal, ``L A^{-T}`` is such a factor.
    """
    n = scale_chol.shape[0]
    A = np.zeros((n, n))
    A[np.diag_indices(n)] = np.sqrt(rng.chisquare(df - np.arange(n)))
    rows, cols = np.tril_indices(n, -1)
    A[rows, cols] = rng.standard_normal(rows.size)
    # L A^{-T} = (A^{-1} L')'
    return linalg.solve_triangular(A, scale_chol.T, lower=True).T


def sample_posterior(
    post: VarxPosterior,
    n_draws: int,
    seed: int | np.random.SeedSequence,
    threads: int = 1,
    offset: int = 0,
) -> VarxPosterior:
    """Exact conjugate draws; draw ``i`` uses seeded substream ``offset + i``."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    k, n = post.B_hat.shape
    if post.alpha_hat <= n - 1:
        raise BvarError(f"alpha_hat={post.alpha_hat} must exceed n-1={n - 1}")
    LS = linalg.cholesky(post.S_hat, lower=True)
    LO = linalg.cholesky(post.Omega_hat, lower=True)
    Bs = np.empty((n_draws, k, n))
    Ss = np.empty((n_draws, n, n))

    def one(i: int) -> None:
        rng = _substream(seed, offset + i)
        F = inverse_wishart_factor(LS, post.alpha_hat, rng)
        Ss[i] = F @ F.T
        Bs[i] = post.B_hat + LO @ rng.standard_normal((k, n)) @ F.T

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(one, range(n_draws)))
    else:
        for i in range(n_draws):
            one(i)
    return replace(post, B_draws=Bs, Sigma_draws=Ss)


def lag_matrices(B: np.ndarray, spec: VarxSpec) -> np.ndarray:
    """``p x n x n`` stack; ``A[l-1][i, j]`` is the effect of ``y_{i,t-l}`` on ``y_{j,t}``."""
    n = spec.n
    return B[..., : n * spec.p, :].reshape(B.shape[:-2] + (spec.p, n, n))


def exo_impacts(B: np.ndarray, spec: VarxSpec, j: int = 0) -> np.ndarray:
    """``(q+1) x n`` rows of ``B`` for exogenous series ``j`` at lags ``0..q``."""
    rows = [spec.exo_row(j, lag) for lag in range(spec.exo_lags + 1)]
    return B[..., rows, :]


def dynamic_multipliers(A: np.ndarray, b: np.ndarray, H: int) -> np.ndarray:
    """Response of ``y_{t+h}`` to a unit exogenous pulse at ``t``; ``n x (H+1)``.

    Row-vector recursion ``Psi_h = b_h + sum_{l=1}^{min(h,p)} Psi_{h-l} A_l``
    with ``b_h`` the exogenous impact at lag ``h`` (zero beyond the supplied rows).
    """
    A = np.asarray(A, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if A.ndim == 2:
        A = A[None]
    p, n = A.shape[0], A.shape[1]
    psi = np.zeros((H + 1, n))
    for h in range(H + 1):
        acc = b[h].copy() if h < b.shape[0] else np.zeros(n)
        for l in range(1, min(h, p) + 1):
            acc += psi[h - l] @ A[l - 1]
        psi[h] = acc
    return psi.T


def dynamic_multipliers_batch(A: np.ndarray, b: np.ndarray, H: int) -> np.ndarray:
    """Vectorized over leading draw axis: ``A`` is ``d x p x n x n``, ``b`` is ``d x q x n``."""
    d, p, n, _ = A.shape
    psi = np.zeros((d, H + 1, n))
    for h in range(H + 1):
        acc = b[:, h].copy() if h < b.shape[1] else np.zeros((d, n))
        for l in range(1, min(h, p) + 1):
            acc += np.einsum("di,dij->dj", psi[:, h - l], A[:, l - 1])
        psi[:, h] = acc
    return psi.transpose(0, 2, 1)


def companion(A: np.ndarray) -> np.ndarray:
    """Companion matrix (column convention) of row-convention lag matrices."""
    A = np.asarray(A, dtype=float)
    p, n = A.shape[0], A.shape[1]
    top = np.hstack([A[l].T for l in range(p)])
    if p == 1:
        return top
    return np.vstack([top, np.hstack([np.eye(n * (p - 1)), np.zeros((n * (p - 1), n))])])


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion(A)))))


def standardize(shock: np.ndarray) -> tuple[np.ndarray, float]:
    shock = np.asarray(shock, dtype=float)
    sd = float(np.std(shock, ddof=1, axis=0).max()) if shock.ndim > 1 else float(np.std(shock, ddof=1))
    if not sd > 0:
        raise BvarError("shock series has zero variance over the sample")
    return shock / sd, sd


def fit_varx(
    panel: MonthlyPanel,
    shock: np.ndarray,
    spec: VarxSpec,
) -> tuple[VarxPosterior, NormalWishartPrior]:
    """Posterior moments for ``panel`` on the exogenous ``shock`` (``T`` or ``T x n_exo``)."""
    values = panel.values
    if values.shape[1] != spec.n:
        raise BvarError(f"spec.n={spec.n} but panel has {values.shape[1]} columns")
    det = build_deterministics(panel.start, panel.T)
    cols = []
    if spec.constant:
        cols.append(np.ones(panel.T))
    if spec.trend:
        cols.append(det.trend)
    if spec.covid:
        cols.append(det.covid)
    D = np.column_stack(cols) if cols else None
    Y, X = build_design(values, shock, D, spec)
    scales = ar_residual_scales(values, spec.p)
    prior = build_prior(spec, scales)
    post = posterior_moments(prior, Y, X)
    post.meta.update(
        n_obs=int(Y.shape[0]),
        covid_active=bool(spec.covid and det.covid.any()),
        scales=scales.tolist(),
    )
    return post, prior


def irf_draws(post: VarxPosterior, spec: VarxSpec, shock_index: int = 0) -> np.ndarray:
    """Multiplier paths for every posterior draw: ``n_draws x n x (H+1)``."""
    A = lag_matrices(post.B_draws, spec)
    b = exo_impacts(post.B_draws, spec, shock_index)
    return dynamic_multipliers_batch(A, b, spec.horizon)


def estimate_irf(
    panel: MonthlyPanel,
    shock: np.ndarray,
    spec: VarxSpec | None = None,
    n_draws: int = 2000,
    seed: int | np.random.SeedSequence = 0,
    threads: int = 1,
    standardize_shock: bool = True,
    coverage: float = 0.90,
    meta: dict | None = None,
    return_draws: bool = False,
):
    """Posterior median IRF with a pointwise equal-tailed band.

    The shock is rescaled to unit sample variance over the supplied window,
    so responses are per one-standard-deviation shock.
    """
    shock = np.asarray(shock, dtype=float)
    if spec is None:
        spec = VarxSpec(n=panel.values.shape[1], n_exo=1 if shock.ndim == 1 else shock.shape[1])
    sd = 1.0
    if standardize_shock:
        shock, sd = standardize(shock)
    post, _ = fit_varx(panel, shock, spec)
    post = sample_posterior(post, n_draws, seed, threads)
    paths = irf_draws(post, spec)
    info = {
        "engine": "bvar",
        "shock_scale": sd,
        "n_draws": n_draws,
        "n_obs": post.meta["n_obs"],
        "covid_active": post.meta["covid_active"],
        **({"ridge": post.meta["ridge"]} if "ridge" in post.meta else {}),
        **(meta or {}),
    }
    band = IrfBand.from_draws(panel.names, paths, coverage, info)
    return (band, paths) if return_draws else band
