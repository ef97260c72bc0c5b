"""Estimators and confidence regions for prediction-powered mean estimation.

Covers classical inference, PPI (control variate with lambda = 1), power-tuned
PPI++ (data-estimated lambda), their Bayes-assisted counterparts, the generic
convex-loss grid procedure, the per-dimension union-bound composition for
multivariate rectifiers, and the odds-ratio interval combiner.

Two inference modes are supported everywhere:

* known-m mode: the measure of fit is treated as exact (the N -> infinity
  simplification), delta = alpha, and the rectifier region is just shifted;
* full mode: the rectifier region at level 1-delta is combined with a CLT
  interval for the measure of fit at level 1-(alpha-delta) by Minkowski sum
  (default delta = alpha/2).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import priors as _priors
from .errors import (
    BracketError,
    ConfigError,
    DegenerateSampleError,
    DomainError,
    SampleSizeError,
)
from .fabcr import (
    ConfidenceRegion,
    RegionSearch,
    SpendingDiagnosticWarning,
    fab_cr,
    fab_cr_batch,
    interval_region,
    spending_numeric,
)
from .priors import PriorSpec, ScaleRule, posterior_mean
from .specfun import norm_quantile

__all__ = [
    "LabelledSample",
    "UnlabelledSample",
    "RectifierStats",
    "Method",
    "DeltaRule",
    "EstimateReport",
    "LossModel",
    "ThetaGrid",
    "classical_mean",
    "lambda_hat",
    "rectifier_stats",
    "ppi_mean",
    "fab_ppi_mean",
    "ppi_convex",
    "fab_ppi_convex",
    "classical_convex",
    "multivariate_fab_cr",
    "odds_ratio_ci",
    "control_variate_mean",
    "mean_stats_batch",
    "MeanStatsBatch",
]


# ----------------------------------------------------------------------------
# Samples and result types.


@dataclass(frozen=True, eq=False)
class LabelledSample:
    """Paired labels y_i and predictions f(x_i), n >= 2."""

    y: np.ndarray
    fx: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        fx = np.asarray(self.fx, dtype=float)
        if y.ndim != 1 or fx.ndim != 1 or y.shape != fx.shape:
            raise DomainError("y and fx must be 1-d arrays of equal length")
        if y.size < 2:
            raise SampleSizeError("labelled sample needs n >= 2")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(fx))):
            raise DomainError("labelled sample must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "fx", fx)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True, eq=False)
class UnlabelledSample:
    """Predictions on unlabelled data, or their exactly known mean.

    Exactly one of the two modes is populated: a vector of N >= 2 predictions,
    or an analytic mean (the "N infinite" mode) with an informational standard
    deviation. In analytic mode the measure-of-fit uncertainty is zero.
    """

    fx: np.ndarray | None = None
    analytic_mean: float | None = None
    analytic_sd: float = 0.0

    def __post_init__(self):
        if (self.fx is None) == (self.analytic_mean is None):
            raise ConfigError("exactly one of fx / analytic_mean must be given")
        if self.fx is not None:
            fx = np.asarray(self.fx, dtype=float)
            if fx.ndim != 1 or fx.size < 2:
                raise SampleSizeError("unlabelled sample needs N >= 2")
            if not np.all(np.isfinite(fx)):
                raise DomainError("unlabelled predictions must be finite")
            object.__setattr__(self, "fx", fx)
        else:
            if not np.isfinite(self.analytic_mean):
                raise DomainError("analytic mean must be finite")
            if self.analytic_sd < 0.0:
                raise DomainError("analytic sd must be >= 0")

    @classmethod
    def from_predictions(cls, fx) -> "UnlabelledSample":
        return cls(fx=fx)

    @classmethod
    def analytic(cls, mean: float, sd: float = 0.0) -> "UnlabelledSample":
        return cls(analytic_mean=float(mean), analytic_sd=float(sd))

    @property
    def is_analytic(self) -> bool:
        return self.fx is None

    @property
    def n(self) -> int:
        return 0 if self.fx is None else self.fx.size

    @property
    def mean(self) -> float:
        return float(self.analytic_mean if self.is_analytic else self.fx.mean())


@dataclass(frozen=True)
class RectifierStats:
    """Sufficient statistics of the mean-estimation rectifier.

    ``m_hat`` is the measure-of-fit statistic: the unlabelled-prediction mean
    in the mean path (where the measure of fit at theta is theta - m_hat), or
    the per-theta subgradient mean in the convex path.
    """

    m_hat: float
    delta_hat: float
    sigma_hat: float
    sigma_f_hat: float
    lam: float
    xi_hat: float

    @property
    def degenerate(self) -> bool:
        return self.sigma_hat == 0.0


class Method(str, enum.Enum):
    CLASSICAL = "classical"
    PPI = "ppi"
    PPI_PP = "ppi++"
    FAB_PPI = "fab-ppi"
    FAB_PPI_PP = "fab-ppi++"
    CONTROL_VARIATE = "control-variate"


@dataclass(frozen=True)
class DeltaRule:
    """How the alpha budget is split between rectifier and measure of fit."""

    kind: str  # "known_m" | "full"
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in ("known_m", "full"):
            raise ConfigError("delta rule kind must be 'known_m' or 'full'")
        if self.kind == "known_m" and self.delta is not None:
            raise ConfigError("known_m mode does not take a delta")

    @classmethod
    def known_m(cls) -> "DeltaRule":
        return cls("known_m")

    @classmethod
    def full(cls, delta: float | None = None) -> "DeltaRule":
        return cls("full", delta)

    @property
    def is_known_m(self) -> bool:
        return self.kind == "known_m"

    def resolve_delta(self, alpha: float) -> float:
        if self.is_known_m:
            return alpha
        delta = alpha / 2.0 if self.delta is None else float(self.delta)
        if not (0.0 < delta < alpha):
            raise ConfigError("full mode requires 0 < delta < alpha")
        return delta

    @property
    def label(self) -> str:
        if self.is_known_m:
            return "known_m"
        return "full" if self.delta is None else f"full:{self.delta:g}"


@dataclass(frozen=True)
class EstimateReport:
    """One method's point estimate, confidence region, and diagnostics."""

    method: Method
    point: float
    region: ConfidenceRegion
    alpha: float
    delta: float
    prior: PriorSpec | None = None
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.region.volume


def _check_alpha(alpha: float):
    if not (0.0 < alpha < 1.0):
        raise DomainError("alpha must be in (0, 1)")


# ----------------------------------------------------------------------------
# Batched mean-case statistics. Rows are independent replications; the scalar
# operations below call these with a single row.


@dataclass(frozen=True, eq=False)
class MeanStatsBatch:
    lam: np.ndarray
    theta_f: np.ndarray
    xi: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    sigma_f: np.ndarray


def _sample_var(a: np.ndarray, axis=None) -> np.ndarray:
    return np.var(a, axis=axis, ddof=1)


def lambda_hat_batch(y2, f2, fu2=None, labelled_only=False):
    """Power-tuning coefficient per row: c_n / ((1 + n/N) v_{n+N}).

    With ``labelled_only`` (the analytic-mean mode) the pooled variance is the
    labelled prediction variance and n/N := 0.
    """
    y2 = np.asarray(y2, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    n = y2.shape[1]
    c = np.sum(
        (y2 - y2.mean(axis=1, keepdims=True)) * (f2 - f2.mean(axis=1, keepdims=True)),
        axis=1,
    ) / (n - 1)
    if labelled_only:
        v = _sample_var(f2, axis=1)
        scale = 1.0
    else:
        pooled = np.concatenate([f2, np.asarray(fu2, dtype=float)], axis=1)
        v = _sample_var(pooled, axis=1)
        scale = 1.0 + n / fu2.shape[1]
    if np.any(v == 0.0):
        raise DegenerateSampleError("prediction variance is zero; lambda undefined")
    return c / (scale * v)


def mean_stats_batch(
    y2,
    f2,
    fu2=None,
    analytic_mean=None,
    power_tuned: bool = False,
    lam_override: float | None = None,
) -> MeanStatsBatch:
    """Rectifier statistics for every row of (R, n) labelled matrices."""
    y2 = np.atleast_2d(np.asarray(y2, dtype=float))
    f2 = np.atleast_2d(np.asarray(f2, dtype=float))
    if y2.shape != f2.shape or y2.shape[1] < 2:
        raise DomainError("labelled matrices must share shape (R, n>=2)")
    rows = y2.shape[0]
    n = y2.shape[1]
    analytic = fu2 is None
    if analytic:
        if analytic_mean is None:
            raise ConfigError("either fu2 or analytic_mean is required")
        theta_f = np.broadcast_to(
            np.asarray(analytic_mean, dtype=float), (rows,)
        ).astype(float)
        sigma_f2 = np.zeros(rows)
    else:
        fu2 = np.atleast_2d(np.asarray(fu2, dtype=float))
        if fu2.shape[0] != rows or fu2.shape[1] < 2:
            raise DomainError("unlabelled matrix must have shape (R, N>=2)")
        theta_f = fu2.mean(axis=1)
        sigma_f2 = _sample_var(fu2, axis=1) / fu2.shape[1]

    if lam_override is not None:
        lam = np.full(rows, float(lam_override))
    elif power_tuned:
        lam = lambda_hat_batch(y2, f2, fu2, labelled_only=analytic)
    else:
        lam = np.ones(rows)

    resid = lam[:, None] * f2 - y2
    xi = resid.mean(axis=1)
    delta = xi - (lam - 1.0) * theta_f
    sigma_xi2 = _sample_var(resid, axis=1)
    sigma2 = sigma_xi2 / n + (lam - 1.0) ** 2 * sigma_f2
    return MeanStatsBatch(
        lam=lam,
        theta_f=theta_f,
        xi=xi,
        delta=delta,
        sigma=np.sqrt(sigma2),
        sigma_f=np.sqrt(sigma_f2),
    )


# ----------------------------------------------------------------------------
# Scalar operations.


def classical_mean(labelled: LabelledSample, alpha: float) -> EstimateReport:
    """Sample mean with the CLT interval ybar +/- z_{1-alpha/2} s/sqrt(n)."""
    _check_alpha(alpha)
    point = float(labelled.y.mean())
    half = norm_quantile(1.0 - alpha / 2.0) * math.sqrt(
        _sample_var(labelled.y) / labelled.n
    )
    return EstimateReport(
        method=Method.CLASSICAL,
        point=point,
        region=interval_region(point - half, point + half, 1.0 - alpha),
        alpha=alpha,
        delta=alpha,
        diagnostics={"sigma_hat": half / norm_quantile(1.0 - alpha / 2.0)},
    )


def lambda_hat(labelled: LabelledSample, unlabelled: UnlabelledSample) -> float:
    """Plug-in power-tuning coefficient."""
    fu = None if unlabelled.is_analytic else unlabelled.fx[None, :]
    return float(
        lambda_hat_batch(
            labelled.y[None, :],
            labelled.fx[None, :],
            fu,
            labelled_only=unlabelled.is_analytic,
        )[0]
    )


def rectifier_stats(
    labelled: LabelledSample, unlabelled: UnlabelledSample, lam: float
) -> RectifierStats:
    """Rectifier sufficient statistics at a given control-variate coefficient."""
    stats = mean_stats_batch(
        labelled.y[None, :],
        labelled.fx[None, :],
        None if unlabelled.is_analytic else unlabelled.fx[None, :],
        analytic_mean=unlabelled.analytic_mean,
        lam_override=lam,
    )
    return RectifierStats(
        m_hat=float(stats.theta_f[0]),
        delta_hat=float(stats.delta[0]),
        sigma_hat=float(stats.sigma[0]),
        sigma_f_hat=float(stats.sigma_f[0]),
        lam=float(stats.lam[0]),
        xi_hat=float(stats.xi[0]),
    )


def _mean_stats_for(
    labelled: LabelledSample,
    unlabelled: UnlabelledSample,
    power_tuned: bool,
    lam_override: float | None,
) -> RectifierStats:
    stats = mean_stats_batch(
        labelled.y[None, :],
        labelled.fx[None, :],
        None if unlabelled.is_analytic else unlabelled.fx[None, :],
        analytic_mean=unlabelled.analytic_mean,
        power_tuned=power_tuned,
        lam_override=lam_override,
    )
    return RectifierStats(
        m_hat=float(stats.theta_f[0]),
        delta_hat=float(stats.delta[0]),
        sigma_hat=float(stats.sigma[0]),
        sigma_f_hat=float(stats.sigma_f[0]),
        lam=float(stats.lam[0]),
        xi_hat=float(stats.xi[0]),
    )


def ppi_mean(
    labelled: LabelledSample,
    unlabelled: UnlabelledSample,
    alpha: float,
    power_tuned: bool = False,
    mode: DeltaRule | None = None,
    lam_override: float | None = None,
) -> EstimateReport:
    """PPI / PPI++ mean estimate with its CLT confidence interval."""
    _check_alpha(alpha)
    mode = mode or DeltaRule.known_m()
    if not mode.is_known_m and unlabelled.is_analytic:
        raise ConfigError("full mode needs a finite unlabelled sample")
    st = _mean_stats_for(labelled, unlabelled, power_tuned, lam_override)
    point = st.m_hat - st.delta_hat
    delta = mode.resolve_delta(alpha)
    if mode.is_known_m:
        half = norm_quantile(1.0 - alpha / 2.0) * st.sigma_hat
    else:
        half = (
            norm_quantile(1.0 - delta / 2.0) * st.sigma_hat
            + norm_quantile(1.0 - (alpha - delta) / 2.0) * st.sigma_f_hat
        )
    diagnostics = {
        "lambda": st.lam,
        "delta_hat": st.delta_hat,
        "sigma_hat": st.sigma_hat,
        "sigma_f_hat": st.sigma_f_hat,
    }
    if st.degenerate:
        diagnostics["degenerate"] = 1.0
    return EstimateReport(
        method=Method.PPI_PP if power_tuned else Method.PPI,
        point=point,
        region=interval_region(point - half, point + half, 1.0 - alpha),
        alpha=alpha,
        delta=delta,
        diagnostics=diagnostics,
    )


def fab_ppi_mean(
    labelled: LabelledSample,
    unlabelled: UnlabelledSample,
    prior: PriorSpec,
    alpha: float,
    delta_rule: DeltaRule | None = None,
    power_tuned: bool = False,
    lam_override: float | None = None,
    search: RegionSearch | None = None,
) -> EstimateReport:
    """Bayes-assisted PPI mean estimate and confidence interval.

    Builds the FAB region R for the rectifier at level 1-delta, shrinks the
    point by the Tweedie correction, and combines R with the measure-of-fit
    interval (known-m mode: delta = alpha and the measure-of-fit terms vanish).
    """
    _check_alpha(alpha)
    delta_rule = delta_rule or DeltaRule.known_m()
    if not delta_rule.is_known_m and unlabelled.is_analytic:
        raise ConfigError("full mode needs a finite unlabelled sample")
    st = _mean_stats_for(labelled, unlabelled, power_tuned, lam_override)
    if st.sigma_hat == 0.0:
        raise DegenerateSampleError(
            "rectifier variance is zero (perfect predictions); the prior scale is undefined"
        )
    prior = prior.resolve(labelled.n)
    delta = delta_rule.resolve_delta(alpha)
    rect_region = fab_cr(st.delta_hat, st.sigma_hat, prior, delta, search)
    point = st.m_hat - float(
        posterior_mean(st.delta_hat, st.sigma_hat, prior)
    )
    if delta_rule.is_known_m:
        region = rect_region.scale(-1.0).shift(st.m_hat)
    else:
        pad = norm_quantile(1.0 - (alpha - delta) / 2.0) * st.sigma_f_hat
        region = interval_region(
            st.m_hat - pad - rect_region.upper,
            st.m_hat + pad - rect_region.lower,
            1.0 - alpha,
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpendingDiagnosticWarning)
        w_at_delta = spending_numeric(st.delta_hat, st.sigma_hat, prior, delta)
    return EstimateReport(
        method=Method.FAB_PPI_PP if power_tuned else Method.FAB_PPI,
        point=point,
        region=region,
        alpha=alpha,
        delta=delta,
        prior=prior,
        diagnostics={
            "lambda": st.lam,
            "delta_hat": st.delta_hat,
            "sigma_hat": st.sigma_hat,
            "sigma_f_hat": st.sigma_f_hat,
            "w": w_at_delta,
        },
    )


# ----------------------------------------------------------------------------
# Convex estimation on a grid (generic loss).


@dataclass(frozen=True)
class LossModel:
    """A covariate-free convex loss, represented by its subgradient.

    ``subgradient(theta, values)`` must broadcast: theta of shape (G, 1)
    against values of shape (1, m).
    """

    name: str
    subgradient: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @classmethod
    def squared(cls) -> "LossModel":
        return cls("squared", lambda theta, v: theta - v)

    @classmethod
    def pinball(cls, q: float) -> "LossModel":
        if not (0.0 < q < 1.0):
            raise DomainError("quantile level must be in (0, 1)")
        return cls(f"pinball[{q:g}]", lambda theta, v: (v <= theta).astype(float) - q)


@dataclass(frozen=True)
class ThetaGrid:
    lo: float
    hi: float
    count: int = 2001

    def __post_init__(self):
        if not (self.lo < self.hi) or self.count < 3:
            raise ConfigError("theta grid requires lo < hi and count >= 3")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)


def _argmin_tie_middle(values: np.ndarray) -> int:
    """Index of the minimum; ties broken by the middle of the tied run."""
    tied = np.nonzero(values == values.min())[0]
    return int(tied[len(tied) // 2])


@dataclass(frozen=True, eq=False)
class _ConvexStats:
    m_hat: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    sigma_m: np.ndarray  # sd of m_hat itself (sample sd / sqrt(N))


def _convex_stats(thetas, y, fx, fu, lam, loss, chunk=256) -> _ConvexStats:
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    n, N = y.size, fu.size
    m_hat = np.empty(thetas.size)
    delta = np.empty(thetas.size)
    sigma = np.empty(thetas.size)
    sigma_m = np.empty(thetas.size)
    for start in range(0, thetas.size, chunk):
        block = thetas[start : start + chunk, None]
        g_u = loss.subgradient(block, fu[None, :])
        m_blk = g_u.mean(axis=1)
        var_m = _sample_var(g_u, axis=1)
        resid = loss.subgradient(block, y[None, :]) - lam * loss.subgradient(
            block, fx[None, :]
        )
        xi = resid.mean(axis=1)
        var_xi = _sample_var(resid, axis=1)
        sl = slice(start, start + block.size)
        m_hat[sl] = m_blk
        delta[sl] = xi + (lam - 1.0) * m_blk
        sigma[sl] = np.sqrt(var_xi / n + (lam - 1.0) ** 2 * var_m / N)
        sigma_m[sl] = np.sqrt(var_m / N)
    return _ConvexStats(m_hat=m_hat, delta=delta, sigma=sigma, sigma_m=sigma_m)


def _convex_membership(stats: _ConvexStats, prior, delta_level, pad_z, search):
    """Membership of 0 in R_delta(theta) + T(theta), elementwise over thetas."""
    member = np.zeros(stats.m_hat.shape, dtype=bool)
    pads = pad_z * stats.sigma_m
    ok = stats.sigma > 0.0
    if prior is None:
        # CLT interval; sigma = 0 rows collapse to the point region {delta}.
        z = norm_quantile(1.0 - delta_level / 2.0)
        lo = stats.delta - z * stats.sigma - pads
        hi = stats.delta + z * stats.sigma + pads
        return (lo <= -stats.m_hat) & (-stats.m_hat <= hi)
    if np.any(ok):
        regions = fab_cr_batch(
            stats.delta[ok], stats.sigma[ok], prior, delta_level, search
        )
        target_lo = -stats.m_hat[ok] - pads[ok]
        target_hi = -stats.m_hat[ok] + pads[ok]
        hit = np.array(
            [
                any(lo <= t_hi and hi >= t_lo for lo, hi in reg.intervals)
                for reg, t_lo, t_hi in zip(regions, target_lo, target_hi)
            ]
        )
        member[ok] = hit
    deg = ~ok
    if np.any(deg):
        member[deg] = np.abs(stats.delta[deg] + stats.m_hat[deg]) <= pads[deg]
    return member


def _convex_engine(
    labelled: LabelledSample,
    unlabelled: UnlabelledSample,
    loss: LossModel,
    prior: PriorSpec | None,
    alpha: float,
    delta_rule: DeltaRule,
    power_tuned: bool,
    theta_grid: ThetaGrid,
    lam_override: float | None,
    search: RegionSearch | None,
    method: Method,
) -> EstimateReport:
    _check_alpha(alpha)
    if unlabelled.is_analytic:
        raise ConfigError("the convex grid procedure needs a finite unlabelled sample")
    y, fx, fu = labelled.y, labelled.fx, unlabelled.fx
    if lam_override is not None:
        lam = float(lam_override)
    elif power_tuned:
        lam = lambda_hat(labelled, unlabelled)
    else:
        lam = 1.0
    delta_level = delta_rule.resolve_delta(alpha)
    pad_z = (
        0.0
        if delta_rule.is_known_m
        else norm_quantile(1.0 - (alpha - delta_level) / 2.0)
    )
    if prior is not None:
        prior = prior.resolve(labelled.n)

    grid = theta_grid.values
    stats = _convex_stats(grid, y, fx, fu, lam, loss)

    # Point estimate: root of the shrunk estimating equation on the grid.
    correction = np.zeros(grid.size)
    if prior is not None:
        ok = stats.sigma > 0.0
        if prior.scale_rule is ScaleRule.MATCH_SIGMA:
            u = np.zeros(grid.size)
            u[ok] = stats.delta[ok] / stats.sigma[ok]
            pm = np.where(
                ok, stats.sigma * _priors.posterior_mean(u, 1.0, prior), stats.delta
            )
        else:
            pm = np.array(
                [
                    posterior_mean(d, s, prior) if s > 0.0 else d
                    for d, s in zip(stats.delta, stats.sigma)
                ]
            )
        correction = pm - stats.delta
    objective = np.abs(stats.m_hat + stats.delta + correction)
    best = _argmin_tie_middle(objective)
    if best in (0, grid.size - 1):
        raise BracketError(
            "estimating-equation minimum sits at the grid edge; widen theta_grid"
        )
    point = float(grid[best])

    member = _convex_membership(stats, prior, delta_level, pad_z, search)
    if not member.any():
        raise DomainError("confidence region is empty on the supplied grid")
    if member[0] or member[-1]:
        raise BracketError(
            "confidence region touches the grid edge; widen theta_grid"
        )

    # Refine each membership flip by bisection on theta.
    flips = np.nonzero(member[:-1] != member[1:])[0]
    ins = np.where(member[flips], grid[flips], grid[flips + 1])
    outs = np.where(member[flips], grid[flips + 1], grid[flips])
    for _ in range(20):
        mid = 0.5 * (ins + outs)
        mid_stats = _convex_stats(mid, y, fx, fu, lam, loss)
        memb = _convex_membership(mid_stats, prior, delta_level, pad_z, search)
        ins = np.where(memb, mid, ins)
        outs = np.where(memb, outs, mid)
    bounds = np.sort(0.5 * (ins + outs))
    intervals = [
        (float(bounds[2 * k]), float(bounds[2 * k + 1])) for k in range(bounds.size // 2)
    ]
    region = ConfidenceRegion(intervals, 1.0 - alpha)

    return EstimateReport(
        method=method,
        point=point,
        region=region,
        alpha=alpha,
        delta=delta_level,
        prior=prior,
        diagnostics={
            "lambda": lam,
            "grid_step": theta_grid.step,
            "degenerate_grid_points": float(np.sum(stats.sigma == 0.0)),
        },
    )


def fab_ppi_convex(
    labelled: LabelledSample,
    unlabelled: UnlabelledSample,
    loss: LossModel,
    prior: PriorSpec,
    alpha: float,
    delta_rule: DeltaRule | None = None,
    power_tuned: bool = False,
    theta_grid: ThetaGrid | None = None,
    lam_override: float | None = None,
    search: RegionSearch | None = None,
) -> EstimateReport:
    """Bayes-assisted convex estimation on a grid of candidate parameters."""
    if theta_grid is None:
        raise ConfigError("fab_ppi_convex requires an explicit theta_grid")
    return _convex_engine(
        labelled,
        unlabelled,
        loss,
        prior,
        alpha,
        delta_rule or DeltaRule.known_m(),
        power_tuned,
        theta_grid,
        lam_override,
        search,
        Method.FAB_PPI_PP if power_tuned else Method.FAB_PPI,
    )


def ppi_convex(
    labelled: LabelledSample,
    unlabelled: UnlabelledSample,
    loss: LossModel,
    alpha: float,
    delta_rule: DeltaRule | None = None,
    power_tuned: bool = False,
    theta_grid: ThetaGrid | None = None,
    lam_override: float | None = None,
) -> EstimateReport:
    """Plain PPI on the same convex grid (CLT rectifier interval, no prior)."""
    if theta_grid is None:
        raise ConfigError("ppi_convex requires an explicit theta_grid")
    return _convex_engine(
        labelled,
        unlabelled,
        loss,
        None,
        alpha,
        delta_rule or DeltaRule.known_m(),
        power_tuned,
        theta_grid,
        lam_override,
        None,
        Method.PPI_PP if power_tuned else Method.PPI,
    )


def classical_convex(
    y,
    loss: LossModel,
    alpha: float,
    theta_grid: ThetaGrid,
) -> EstimateReport:
    """Classical M-estimation on a grid: invert the CLT for the subgradient mean."""
    _check_alpha(alpha)
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise SampleSizeError("classical_convex needs n >= 2")
    grid = theta_grid.values
    g = loss.subgradient(grid[:, None], y[None, :])
    m = g.mean(axis=1)
    sd = np.sqrt(_sample_var(g, axis=1) / y.size)
    z = norm_quantile(1.0 - alpha / 2.0)
    member = np.abs(m) <= z * sd
    if not member.any():
        raise DomainError("classical region is empty on the supplied grid")
    if member[0] or member[-1]:
        raise BracketError("classical region touches the grid edge; widen theta_grid")
    best = _argmin_tie_middle(np.abs(m))
    idx = np.nonzero(member)[0]
    region = ConfidenceRegion([(grid[idx[0]], grid[idx[-1]])], 1.0 - alpha)
    return EstimateReport(
        method=Method.CLASSICAL,
        point=float(grid[best]),
        region=region,
        alpha=alpha,
        delta=alpha,
        diagnostics={"grid_step": theta_grid.step},
    )


# ----------------------------------------------------------------------------
# Multivariate composition and interval utilities.


def multivariate_fab_cr(
    delta_hats,
    sigma_hats,
    prior: PriorSpec,
    delta: float,
    search: RegionSearch | None = None,
) -> list[ConfidenceRegion]:
    """Per-dimension FAB regions at level 1 - delta/d (union-bound joint region).

    The joint 1-delta region for the rectifier vector is the Cartesian product
    of the returned per-dimension regions.
    """
    delta_hats = np.atleast_1d(np.asarray(delta_hats, dtype=float))
    sigma_hats = np.atleast_1d(np.asarray(sigma_hats, dtype=float))
    if delta_hats.shape != sigma_hats.shape or delta_hats.ndim != 1:
        raise DomainError("delta_hats and sigma_hats must be equal-length vectors")
    if not np.all(sigma_hats > 0.0):
        raise DomainError("sigma_hats must be positive")
    if not (0.0 < delta < 1.0):
        raise DomainError("delta must be in (0, 1)")
    d = delta_hats.size
    return fab_cr_batch(delta_hats, sigma_hats, prior, delta / d, search)


def odds_ratio_ci(ci0: tuple[float, float], ci1: tuple[float, float]) -> tuple[float, float]:
    """Union-bound interval for the odds ratio mu1/(1-mu1) / (mu0/(1-mu0)).

    Inputs are confidence intervals for the two proportions, strictly inside
    (0, 1); combining 1-alpha/2 inputs yields coverage at least 1-alpha.
    """
    l0, u0 = map(float, ci0)
    l1, u1 = map(float, ci1)
    for v in (l0, u0, l1, u1):
        if not (0.0 < v < 1.0):
            raise DomainError("proportion intervals must lie strictly inside (0, 1)")
    if l0 > u0 or l1 > u1:
        raise DomainError("interval endpoints out of order")
    lo = (l1 / (1.0 - l1)) * ((1.0 - u0) / u0)
    hi = (u1 / (1.0 - u1)) * ((1.0 - l0) / l0)
    return (lo, hi)


def control_variate_mean(
    z,
    y,
    mu: float,
    lam: float | None = None,
    alpha: float = 0.1,
) -> EstimateReport:
    """Control-variate estimator ybar - lambda (zbar - mu) with its CLT interval."""
    _check_alpha(alpha)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape or z.ndim != 1 or z.size < 2:
        raise DomainError("z and y must be equal-length vectors with n >= 2")
    if not np.isfinite(mu):
        raise DomainError("mu must be finite")
    n = y.size
    if lam is None:
        zc = z - z.mean()
        denom = np.sum(zc * zc)
        if denom == 0.0:
            raise DegenerateSampleError("control variate has zero variance")
        lam = float(np.sum(zc * (y - y.mean())) / denom)
    point = float(y.mean() - lam * (z.mean() - mu))
    s = math.sqrt(_sample_var(y - lam * z))
    half = norm_quantile(1.0 - alpha / 2.0) * s / math.sqrt(n)
    return EstimateReport(
        method=Method.CONTROL_VARIATE,
        point=point,
        region=interval_region(point - half, point + half, 1.0 - alpha),
        alpha=alpha,
        delta=alpha,
        diagnostics={"lambda": float(lam), "residual_sd": s},
    )
