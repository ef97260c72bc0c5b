"""Prior models for the rectifier: Gaussian and horseshoe.

Each prior is summarized by what the downstream machinery actually consumes:
the log-marginal likelihood ell(y; sigma, tau) of a Gaussian observation model
N(y; delta, sigma^2) under the prior on delta, its derivative ell', the
Tweedie posterior mean y + sigma^2 ell'(y), and (horseshoe only) the shrinkage
weight kappa.

Scale conventions: ``tau`` is always a standard deviation. The Gaussian prior
is N(0, tau^2); the horseshoe prior is the half-Cauchy scale mixture
int N(0, nu^2 tau^2) C+(nu; 0, 1) dnu. With tau = sigma the horseshoe marginal
has a closed form in 1F1 / Dawson terms; any other scale is handled by
numerical integration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .errors import ConfigError, DomainError

__all__ = [
    "PriorFamily",
    "ScaleRule",
    "PriorSpec",
    "MarginalMethod",
    "MarginalEval",
    "gaussian_log_marginal",
    "hs_log_marginal",
    "posterior_mean",
    "hs_shrinkage",
    "marginal_logpdf",
    "marginal_logpdf_deriv",
]

# |tau/sigma - 1| below this counts as "matched scale" (closed-form eligible);
# scale rules compute tau from sigma and may round.
_MATCHED_RTOL = 1e-12

# Central finite-difference step (relative) for quadrature-path derivatives.
_FD_REL_STEP = 1e-5

_HS_SERIES_CUTOFF = 0.5  # |y|/(sqrt2 sigma) below this uses the 1F1 series


class PriorFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    HORSESHOE = "horseshoe"


class ScaleRule(str, enum.Enum):
    MATCH_SIGMA = "match_sigma"  # tau = sigma_hat, resolved at evaluation time
    INVERSE_SQRT_N = "inverse_sqrt_n"  # tau = 1/sqrt(n), resolved from the sample
    FIXED = "fixed"


@dataclass(frozen=True)
class PriorSpec:
    """Prior family plus the rule fixing the rectifier prior scale."""

    family: PriorFamily
    scale_rule: ScaleRule = ScaleRule.MATCH_SIGMA
    scale_value: float | None = None

    def __post_init__(self):
        if self.scale_rule is ScaleRule.FIXED:
            if self.scale_value is None or not (self.scale_value > 0.0):
                raise ConfigError("fixed scale rule requires scale_value > 0")
        elif self.scale_value is not None:
            raise ConfigError("scale_value is only meaningful with the fixed rule")

    @classmethod
    def gaussian(cls, scale_rule=ScaleRule.MATCH_SIGMA, scale_value=None):
        return cls(PriorFamily.GAUSSIAN, ScaleRule(scale_rule), scale_value)

    @classmethod
    def horseshoe(cls, scale_rule=ScaleRule.MATCH_SIGMA, scale_value=None):
        return cls(PriorFamily.HORSESHOE, ScaleRule(scale_rule), scale_value)

    def resolve(self, n: int) -> "PriorSpec":
        """Pin the sample-size-dependent rule down to a concrete scale."""
        if self.scale_rule is ScaleRule.INVERSE_SQRT_N:
            if n < 1:
                raise ConfigError("inverse_sqrt_n rule requires n >= 1")
            return PriorSpec(self.family, ScaleRule.FIXED, 1.0 / math.sqrt(n))
        return self

    def resolve_scale(self, sigma: float | None = None) -> float:
        """The prior standard deviation tau for a given observation scale."""
        if self.scale_rule is ScaleRule.MATCH_SIGMA:
            if sigma is None or not (sigma > 0.0):
                raise ConfigError("match_sigma rule requires sigma > 0 at evaluation")
            return float(sigma)
        if self.scale_rule is ScaleRule.FIXED:
            return float(self.scale_value)
        raise ConfigError(
            "inverse_sqrt_n scale must be resolved against a sample first"
        )

    @property
    def label(self) -> str:
        return "hs" if self.family is PriorFamily.HORSESHOE else "gaussian"


class MarginalMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class MarginalEval:
    """A pointwise evaluation of ell and ell' with its provenance."""

    log_density: float
    log_density_deriv: float
    method: MarginalMethod


def _validate_scales(sigma, tau):
    if not (np.isfinite(sigma) and sigma > 0.0):
        raise DomainError("sigma must be finite and > 0")
    if not (np.isfinite(tau) and tau > 0.0):
        raise DomainError("tau must be finite and > 0")


def _is_matched(sigma: float, tau: float) -> bool:
    return abs(tau / sigma - 1.0) <= _MATCHED_RTOL


# ----------------------------------------------------------------------------
# Gaussian prior: everything is closed form.


def _gaussian_logpdf_vec(y, sigma, tau):
    return specfun.norm_logpdf(y, math.hypot(sigma, tau))


def gaussian_log_marginal(y: float, sigma: float, tau: float) -> MarginalEval:
    """ell and ell' for the Gaussian prior N(0, tau^2): marginal N(0, sigma^2 + tau^2)."""
    _validate_scales(sigma, tau)
    y = float(y)
    var = sigma * sigma + tau * tau
    return MarginalEval(
        log_density=float(_gaussian_logpdf_vec(y, sigma, tau)),
        log_density_deriv=-y / var,
        method=MarginalMethod.CLOSED_FORM,
    )


# ----------------------------------------------------------------------------
# Horseshoe prior, matched scale (tau = sigma): closed form via 1F1 / Dawson.
#
# pi(y) = 2/(pi sqrt(2 pi sigma^2)) 1F1(1, 3/2, -t^2)  with t = |y|/(sqrt2 sigma)
#       = 2/pi^{3/2} D(t)/|y|,
# and ell'(y) = -(y/sigma^2) kappa(y) with
# kappa = (2/3) 1F1(2, 5/2, -t^2) / 1F1(1, 3/2, -t^2)
#       = ((2 t^2 + 1) D(t) - t) / (2 t^2 D(t)).
# The Dawson forms are used away from 0; the 1F1 series near 0 avoids the
# subtractive cancellation in (2t^2+1)D(t) - t.


def _f1_series(t2):
    """1F1(1, 3/2, -t2) by series; accurate for t2 <= ~0.25."""
    total = np.ones_like(t2)
    term = np.ones_like(t2)
    for k in range(40):
        term = term * (-t2) / (1.5 + k)
        total = total + term
        if np.all(np.abs(term) <= 1e-18):
            break
    return total


def _f2_series(t2):
    """1F1(2, 5/2, -t2) by series; accurate for t2 <= ~0.25."""
    total = np.ones_like(t2)
    term = np.ones_like(t2)
    for k in range(40):
        term = term * (-t2) * (2.0 + k) / ((2.5 + k) * (k + 1.0))
        total = total + term
        if np.all(np.abs(term) <= 1e-18):
            break
    return total


def _hs_matched_logpdf_vec(y, sigma):
    shape = np.shape(y)
    t = np.abs(np.atleast_1d(np.asarray(y, dtype=float))) / (math.sqrt(2.0) * sigma)
    const = math.log(2.0 / (math.pi * math.sqrt(2.0 * math.pi) * sigma))
    small = t <= _HS_SERIES_CUTOFF
    f1 = np.empty_like(t)
    if np.any(small):
        f1[small] = _f1_series(t[small] ** 2)
    if np.any(~small):
        tb = t[~small]
        f1[~small] = specfun.dawson(tb) / tb
    return (const + np.log(f1)).reshape(shape)


def _hs_matched_kappa_vec(y, sigma):
    shape = np.shape(y)
    t = np.abs(np.atleast_1d(np.asarray(y, dtype=float))) / (math.sqrt(2.0) * sigma)
    kappa = np.empty_like(t)
    small = t <= _HS_SERIES_CUTOFF
    if np.any(small):
        t2 = t[small] ** 2
        kappa[small] = (2.0 / 3.0) * _f2_series(t2) / _f1_series(t2)
    if np.any(~small):
        tb = t[~small]
        d = specfun.dawson(tb)
        kappa[~small] = ((2.0 * tb * tb + 1.0) * d - tb) / (2.0 * tb * tb * d)
    return kappa.reshape(shape)


def _hs_matched_deriv_vec(y, sigma):
    y = np.asarray(y, dtype=float)
    return -(y / (sigma * sigma)) * _hs_matched_kappa_vec(y, sigma)


# ----------------------------------------------------------------------------
# Horseshoe prior, general scale: quadrature over the half-Cauchy mixture
#
#   pi(y; sigma, tau) = int_0^inf N(y; 0, sigma^2 + tau^2 nu^2) C+(nu; 0, 1) dnu.
#
# The substitution nu = tan(phi) (the u = 1/(1+nu^2) family used in the
# closed-form derivation) absorbs the half-Cauchy weight exactly:
#
#   pi(y) = (2/pi) int_0^{pi/2} N(y; 0, sigma^2 + tau^2 tan^2 phi) dphi,
#
# a smooth bounded integrand on a finite interval.


def _hs_quad_integrand(phi, y, sigma, tau):
    var = sigma * sigma + (tau * math.tan(phi)) ** 2
    return (2.0 / math.pi) * math.exp(-0.5 * y * y / var) / math.sqrt(2.0 * math.pi * var)


def _hs_quad_logpdf(y: float, sigma: float, tau: float) -> float:
    val = specfun.integrate(
        lambda phi: _hs_quad_integrand(phi, y, sigma, tau), 0.0, 0.5 * math.pi
    )
    return math.log(val)


def _hs_quad_logpdf_vec(y, sigma, tau, tol=1e-10):
    """Vectorized quadrature path: composite Gauss-Legendre with panel doubling."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nodes, weights = np.polynomial.legendre.leggauss(32)
    prev = None
    for panels in (4, 8, 16, 32, 64):
        edges = np.linspace(0.0, 0.5 * math.pi, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1] - edges[0])
        phi = (mid[:, None] + half * nodes[None, :]).ravel()
        w = np.broadcast_to(half * weights[None, :], (panels, nodes.size)).ravel()
        var = sigma * sigma + (tau * np.tan(phi)) ** 2
        dens = np.exp(-0.5 * np.square(y)[:, None] / var[None, :]) / np.sqrt(
            2.0 * math.pi * var
        )
        vals = (2.0 / math.pi) * dens @ w
        logs = np.log(vals)
        if prev is not None and np.max(np.abs(logs - prev)) <= tol:
            return logs
        prev = logs
    return prev


# ----------------------------------------------------------------------------
# Dispatch helpers shared with the confidence-region engine.


def marginal_logpdf(y, sigma: float, tau: float, family: PriorFamily):
    """Vectorized ell(y; sigma, tau) for either prior family."""
    _validate_scales(sigma, tau)
    y_arr = np.asarray(y, dtype=float)
    if family is PriorFamily.GAUSSIAN:
        out = _gaussian_logpdf_vec(y_arr, sigma, tau)
    elif _is_matched(sigma, tau):
        out = _hs_matched_logpdf_vec(y_arr, sigma)
    else:
        out = _hs_quad_logpdf_vec(y_arr, sigma, tau).reshape(y_arr.shape)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def marginal_logpdf_deriv(y, sigma: float, tau: float, family: PriorFamily):
    """Vectorized ell'(y; sigma, tau); finite differences on the quadrature path."""
    _validate_scales(sigma, tau)
    y_arr = np.asarray(y, dtype=float)
    if family is PriorFamily.GAUSSIAN:
        out = -y_arr / (sigma * sigma + tau * tau)
    elif _is_matched(sigma, tau):
        out = _hs_matched_deriv_vec(y_arr, sigma)
    else:
        h = _FD_REL_STEP * np.maximum(1.0, np.abs(y_arr))
        hi = _hs_quad_logpdf_vec(y_arr + h, sigma, tau)
        lo = _hs_quad_logpdf_vec(y_arr - h, sigma, tau)
        out = ((hi - lo) / (2.0 * np.atleast_1d(h))).reshape(y_arr.shape)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def hs_log_marginal(y: float, sigma: float, tau: float) -> MarginalEval:
    """ell and ell' for the horseshoe prior.

    Matched scale (tau = sigma up to 1e-12 relative) takes the closed form;
    anything else integrates the half-Cauchy mixture and differentiates by a
    central difference with relative step 1e-5.
    """
    _validate_scales(sigma, tau)
    y = float(y)
    if _is_matched(sigma, tau):
        return MarginalEval(
            log_density=float(_hs_matched_logpdf_vec(y, sigma)),
            log_density_deriv=float(_hs_matched_deriv_vec(y, sigma)),
            method=MarginalMethod.CLOSED_FORM,
        )
    h = _FD_REL_STEP * max(1.0, abs(y))
    return MarginalEval(
        log_density=_hs_quad_logpdf(y, sigma, tau),
        log_density_deriv=(
            _hs_quad_logpdf(y + h, sigma, tau) - _hs_quad_logpdf(y - h, sigma, tau)
        )
        / (2.0 * h),
        method=MarginalMethod.QUADRATURE,
    )


def posterior_mean(y, sigma: float, prior: PriorSpec):
    """Tweedie posterior mean y + sigma^2 ell'(y; sigma, tau)."""
    tau = prior.resolve_scale(sigma=sigma)
    deriv = marginal_logpdf_deriv(y, sigma, tau, prior.family)
    return y + sigma * sigma * deriv


def hs_shrinkage(y, sigma: float):
    """Horseshoe shrinkage weight kappa(y) in (0, 1), for tau = sigma."""
    if not (sigma > 0.0):
        raise DomainError("sigma must be > 0")
    y_arr = np.asarray(y, dtype=float)
    out = _hs_matched_kappa_vec(y_arr, sigma)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out
