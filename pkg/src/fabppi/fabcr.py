"""Bayes-assisted confidence regions for the Gaussian location model.

Given an observation y ~ N(beta, sigma^2) and a prior on beta, the optimal
(minimum prior-expected volume) exact 1-alpha region is built by inverting
Neyman-Pearson acceptance intervals

    [beta - sigma z_{1 - alpha w(beta)},  beta + sigma z_{1 - alpha (1 - w(beta))}],

where the spending value w(beta) splits the alpha rejection budget between the
two tails so that the marginal-to-likelihood ratio is equal at both endpoints.
Any w gives exact frequentist size; w only controls volume.

Everything is computed in normalized coordinates u = y/sigma (both supported
prior families are scale families, so regions are exactly scale equivariant).
``fab_cr_batch`` shares one spending table across a whole batch of draws,
which is what makes the Monte Carlo coverage studies affordable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import priors as _priors
from . import specfun
from .errors import ConfigError, DomainError, RegionError
from .priors import PriorFamily, PriorSpec

__all__ = [
    "AcceptanceInterval",
    "ConfidenceRegion",
    "RegionSearch",
    "SpendingDiagnosticWarning",
    "spending_gaussian",
    "spending_numeric",
    "acceptance_interval",
    "fab_cr",
    "fab_cr_batch",
    "hausdorff_distance",
    "interval_region",
]

_W_EPS = 1e-10  # spending search interval is [eps, 1 - eps]
_W_ITERS = 48  # fixed bisection depth: 2^-48 < 4e-15
_R_ITERS = 64  # bisection depth for the Gaussian closed-form solve


class SpendingDiagnosticWarning(RuntimeWarning):
    """Spending solve hit its search boundary or clamped a saturated value."""


@dataclass(frozen=True)
class AcceptanceInterval:
    """Optimal acceptance interval for H0: mean = beta, with its spending value."""

    beta: float
    lower: float
    upper: float
    w: float


@dataclass(frozen=True)
class RegionSearch:
    """Inversion-scan settings (all lengths in units of sigma)."""

    half_width: float = 12.0
    grid_points: int = 2001
    refine_tol: float = 1e-6
    max_expansions: int = 40

    def __post_init__(self):
        if self.half_width <= 0 or self.grid_points < 3 or self.refine_tol <= 0:
            raise ConfigError("invalid region search settings")


class ConfidenceRegion:
    """A finite union of disjoint closed intervals with a confidence level."""

    __slots__ = ("intervals", "level")

    def __init__(self, intervals: Iterable[Sequence[float]], level: float):
        merged: list[list[float]] = []
        for lo, hi in sorted((float(a), float(b)) for a, b in intervals):
            if hi < lo:
                raise DomainError("interval endpoints must satisfy lo <= hi")
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        if not merged:
            raise DomainError("a confidence region must contain at least one interval")
        if not (0.0 < level < 1.0):
            raise DomainError("level must be in (0, 1)")
        object.__setattr__(self, "intervals", tuple((a, b) for a, b in merged))
        object.__setattr__(self, "level", float(level))

    def __setattr__(self, *_):
        raise AttributeError("ConfidenceRegion is immutable")

    def __repr__(self):
        parts = ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in self.intervals)
        return f"ConfidenceRegion({parts}; level={self.level:g})"

    def __eq__(self, other):
        return (
            isinstance(other, ConfidenceRegion)
            and self.intervals == other.intervals
            and self.level == other.level
        )

    def __hash__(self):
        return hash((self.intervals, self.level))

    @property
    def lower(self) -> float:
        return self.intervals[0][0]

    @property
    def upper(self) -> float:
        return self.intervals[-1][1]

    @property
    def volume(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def n_intervals(self) -> int:
        return len(self.intervals)

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    def shift(self, c: float) -> "ConfidenceRegion":
        return ConfidenceRegion(((lo + c, hi + c) for lo, hi in self.intervals), self.level)

    def scale(self, c: float) -> "ConfidenceRegion":
        if c == 0.0:
            raise DomainError("scale factor must be nonzero")
        if c > 0:
            ivs = ((lo * c, hi * c) for lo, hi in self.intervals)
        else:
            ivs = ((hi * c, lo * c) for lo, hi in self.intervals)
        return ConfidenceRegion(ivs, self.level)


def interval_region(lo: float, hi: float, level: float) -> ConfidenceRegion:
    """Single-interval region helper for classical/CLT constructions."""
    return ConfidenceRegion([(lo, hi)], level)


# ----------------------------------------------------------------------------
# Spending solves. All in normalized coordinates (sigma = 1); `rho` is the
# prior scale divided by sigma.


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError("alpha must be in (0, 1)")


def _gaussian_solve_r(t_abs: np.ndarray, alpha: float) -> np.ndarray:
    """Solve Phi(r) + Phi(r - t) = alpha for r, elementwise, with t >= 0.

    r parameterizes the left rejection mass alpha*w = Phi(r). Working in r
    instead of w keeps the acceptance endpoints exact even when 1 - w
    underflows (large t pushes w within 1e-300 of 1).
    """
    lo = np.full_like(t_abs, specfun.norm_quantile(alpha / 2.0))
    hi = np.full_like(t_abs, specfun.norm_quantile(alpha))
    for _ in range(_R_ITERS):
        mid = 0.5 * (lo + hi)
        excess = specfun.norm_cdf(mid) + specfun.norm_cdf(mid - t_abs) - alpha
        high = excess > 0.0
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def _gaussian_endpoints(beta: np.ndarray, rho: float, alpha: float):
    """Acceptance z-offsets and spending value under the Gaussian prior.

    Returns (z_lo, z_up, w, clamped): the interval is
    [beta - z_lo, beta + z_up] in normalized units.
    """
    t = 2.0 * np.asarray(beta, dtype=float) / (rho * rho)
    t_abs = np.abs(t)
    r = _gaussian_solve_r(t_abs, alpha)
    z_plus_lo, z_plus_up = -r, t_abs - r  # offsets for t >= 0
    pos = t >= 0.0
    z_lo = np.where(pos, z_plus_lo, z_plus_up)
    z_up = np.where(pos, z_plus_up, z_plus_lo)
    w_pos = specfun.norm_cdf(r) / alpha
    w = np.where(pos, w_pos, 1.0 - w_pos)
    clamped = (w <= 0.0) | (w >= 1.0)
    w = np.clip(w, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return z_lo, z_up, w, clamped


def _numeric_balance(w, beta, rho: float, alpha: float, family: PriorFamily):
    """Log likelihood-ratio imbalance between the two candidate endpoints."""
    z_lo = specfun.norm_quantile(1.0 - alpha * w)
    z_up = specfun.norm_quantile(1.0 - alpha * (1.0 - w))
    lo = beta - z_lo
    up = beta + z_up
    ell_lo = _priors.marginal_logpdf(lo, 1.0, rho, family)
    ell_up = _priors.marginal_logpdf(up, 1.0, rho, family)
    return (ell_up + 0.5 * z_up * z_up) - (ell_lo + 0.5 * z_lo * z_lo)


def _numeric_endpoints(beta: np.ndarray, rho: float, alpha: float, family: PriorFamily):
    """Spending solve by bisection of the endpoint balance equation."""
    beta = np.asarray(beta, dtype=float)
    lo_w = np.full(beta.shape, _W_EPS)
    hi_w = np.full(beta.shape, 1.0 - _W_EPS)
    f_lo = _numeric_balance(lo_w, beta, rho, alpha, family)
    f_hi = _numeric_balance(hi_w, beta, rho, alpha, family)
    end_lo, end_hi = f_lo, f_hi
    boundary = f_lo * f_hi > 0.0
    for _ in range(_W_ITERS):
        mid = 0.5 * (lo_w + hi_w)
        f_mid = _numeric_balance(mid, beta, rho, alpha, family)
        same = np.sign(f_mid) == np.sign(f_lo)
        move = same & ~boundary
        lo_w = np.where(move, mid, lo_w)
        f_lo = np.where(same, f_mid, f_lo)
        hi_w = np.where(~same & ~boundary, mid, hi_w)
    w = 0.5 * (lo_w + hi_w)
    # One-sided optimum: report the search endpoint closer to balance.
    if np.any(boundary):
        pick_hi = np.abs(end_hi) < np.abs(end_lo)
        w = np.where(boundary, np.where(pick_hi, 1.0 - _W_EPS, _W_EPS), w)
    z_lo = specfun.norm_quantile(1.0 - alpha * w)
    z_up = specfun.norm_quantile(1.0 - alpha * (1.0 - w))
    return z_lo, z_up, w, boundary


def _resolve_ratio(prior: PriorSpec, sigma: float) -> float:
    if not (np.isfinite(sigma) and sigma > 0.0):
        raise DomainError("sigma must be finite and > 0")
    return prior.resolve_scale(sigma=sigma) / sigma


def _endpoints(beta, rho: float, alpha: float, prior: PriorSpec):
    """Normalized acceptance offsets (z_lo, z_up, w, flag) for any prior."""
    if prior.family is PriorFamily.GAUSSIAN:
        return _gaussian_endpoints(beta, rho, alpha)
    return _numeric_endpoints(beta, rho, alpha, prior.family)


# ----------------------------------------------------------------------------
# Public spending/acceptance operations.


def spending_gaussian(beta: float, sigma: float, prior_sd: float, alpha: float) -> float:
    """Spending value under a Gaussian prior with standard deviation ``prior_sd``.

    Solves g_alpha(w) = 2 beta sigma / prior_sd^2 where
    g_alpha(w) = Phi^{-1}(alpha w) - Phi^{-1}(alpha (1 - w)); increasing in
    beta with w(0) = 1/2. Saturated solutions are clamped into (0, 1) and
    reported via :class:`SpendingDiagnosticWarning`.
    """
    _check_alpha(alpha)
    if not (prior_sd > 0.0):
        raise DomainError("prior_sd must be > 0")
    rho = _resolve_ratio(PriorSpec.gaussian(_priors.ScaleRule.FIXED, prior_sd), sigma)
    _, _, w, clamped = _gaussian_endpoints(np.asarray(beta / sigma), rho, alpha)
    if bool(clamped):
        warnings.warn(
            "gaussian spending value saturated and was clamped into (0, 1)",
            SpendingDiagnosticWarning,
            stacklevel=2,
        )
    return float(w)


def spending_numeric(beta: float, sigma: float, prior: PriorSpec, alpha: float) -> float:
    """Spending value for an arbitrary prior, from the Neyman-Pearson balance.

    Roots w of the endpoint balance equation on [1e-10, 1 - 1e-10]; if the
    balance has no sign change there (an effectively one-sided optimal region,
    possible under the Gaussian prior far from the prior mean) the nearer
    search endpoint is returned with a :class:`SpendingDiagnosticWarning`.
    """
    _check_alpha(alpha)
    rho = _resolve_ratio(prior, sigma)
    _, _, w, boundary = _numeric_endpoints(
        np.asarray(beta / sigma), rho, alpha, prior.family
    )
    if bool(boundary):
        warnings.warn(
            "spending balance has no interior root; returning search endpoint",
            SpendingDiagnosticWarning,
            stacklevel=2,
        )
    return float(w)


def acceptance_interval(
    beta: float, sigma: float, prior: PriorSpec, alpha: float
) -> AcceptanceInterval:
    """Optimal acceptance interval at ``beta`` (exact frequentist size 1-alpha)."""
    _check_alpha(alpha)
    rho = _resolve_ratio(prior, sigma)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpendingDiagnosticWarning)
        z_lo, z_up, w, _ = _endpoints(np.asarray(beta / sigma), rho, alpha, prior)
    return AcceptanceInterval(
        beta=float(beta),
        lower=float(beta - sigma * z_lo),
        upper=float(beta + sigma * z_up),
        w=float(w),
    )


# ----------------------------------------------------------------------------
# Region construction by acceptance-interval inversion.


def _refine_boundaries(u, b_in, b_out, rho, alpha, prior, tol):
    """Bisect membership transitions; b_in is inside the region, b_out outside."""
    b_in = np.array(b_in, dtype=float, copy=True)
    b_out = np.array(b_out, dtype=float, copy=True)
    if b_in.size == 0:
        return b_in
    iters = max(1, int(math.ceil(math.log2(np.max(np.abs(b_out - b_in)) / tol))))
    for _ in range(iters):
        mid = 0.5 * (b_in + b_out)
        z_lo, z_up, _, _ = _endpoints(mid, rho, alpha, prior)
        member = (mid - z_lo <= u) & (u <= mid + z_up)
        b_in = np.where(member, mid, b_in)
        b_out = np.where(member, b_out, mid)
    return 0.5 * (b_in + b_out)


def _settle_windows(u, rho, alpha, prior, search):
    """Grow per-item scan half-widths until both window edges are non-members."""
    half = np.full(u.shape, float(search.half_width))
    for _ in range(search.max_expansions):
        edges = np.concatenate([u - half, u + half])
        z_lo, z_up, _, _ = _endpoints(edges, rho, alpha, prior)
        member = (edges - z_lo <= np.tile(u, 2)) & (np.tile(u, 2) <= edges + z_up)
        need = member[: u.size] | member[u.size :]
        if not np.any(need):
            return half
        half = np.where(need, half * 2.0, half)
    raise RegionError("scan window kept expanding; region appears unbounded")


def fab_cr_batch(
    ys,
    sigmas,
    prior: PriorSpec,
    alpha: float,
    search: RegionSearch | None = None,
) -> list[ConfidenceRegion]:
    """Construct the region for each (y, sigma) pair in one vectorized pass.

    All pairs must share the same normalized prior scale (always true for the
    match-sigma rule; a fixed scale requires equal sigmas). Results agree with
    per-call :func:`fab_cr` to within the refinement tolerance.
    """
    _check_alpha(alpha)
    search = search or RegionSearch()
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), ys.shape)
    if not np.all(np.isfinite(ys)):
        raise DomainError("y must be finite")
    if not np.all(sigmas > 0.0):
        raise DomainError("sigma must be > 0")

    if prior.scale_rule is _priors.ScaleRule.MATCH_SIGMA:
        ratios = np.ones_like(sigmas)
    else:
        ratios = prior.resolve_scale(sigma=None) / sigmas
    rho = float(ratios.flat[0])
    if not np.allclose(ratios, rho, rtol=1e-12, atol=0.0):
        # heterogenous normalized scales: fall back to one-at-a-time batches
        return [
            fab_cr_batch([y], [s], prior, alpha, search)[0]
            for y, s in zip(ys, sigmas)
        ]

    u = ys / sigmas
    step = 2.0 * search.half_width / (search.grid_points - 1)
    tol = float(search.refine_tol)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpendingDiagnosticWarning)
        half = _settle_windows(u, rho, alpha, prior, search)

        g_lo = float(np.min(u - half))
        g_hi = float(np.max(u + half))
        n_pts = int(math.ceil((g_hi - g_lo) / step)) + 2
        grid = g_lo + step * np.arange(n_pts)
        z_lo, z_up, _, _ = _endpoints(grid, rho, alpha, prior)
        acc_lo = grid - z_lo
        acc_up = grid + z_up

        # Per-item membership over its own window, including exact edges.
        brackets_in: list[float] = []
        brackets_out: list[float] = []
        brackets_u: list[float] = []
        item_slices: list[tuple[int, int]] = []
        for i in range(u.size):
            w_lo = u[i] - half[i]
            w_hi = u[i] + half[i]
            j0 = int(np.searchsorted(grid, w_lo, side="left"))
            j1 = int(np.searchsorted(grid, w_hi, side="right"))
            pts = np.concatenate([[w_lo], grid[j0:j1], [w_hi]])
            memb = np.empty(pts.shape, dtype=bool)
            memb[0] = memb[-1] = False  # guaranteed by _settle_windows
            memb[1:-1] = (acc_lo[j0:j1] <= u[i]) & (u[i] <= acc_up[j0:j1])
            if not memb.any():
                raise RegionError(
                    "no scan point fell inside the region; this should be impossible"
                )
            flips = np.nonzero(memb[:-1] != memb[1:])[0]
            start = len(brackets_in)
            for k in flips:
                if memb[k]:  # leaving the region
                    brackets_in.append(float(pts[k]))
                    brackets_out.append(float(pts[k + 1]))
                else:  # entering the region
                    brackets_in.append(float(pts[k + 1]))
                    brackets_out.append(float(pts[k]))
                brackets_u.append(float(u[i]))
            item_slices.append((start, len(brackets_in)))

        refined = _refine_boundaries(
            np.asarray(brackets_u),
            np.asarray(brackets_in),
            np.asarray(brackets_out),
            rho,
            alpha,
            prior,
            tol,
        )

    regions: list[ConfidenceRegion] = []
    level = 1.0 - alpha
    for i, (a, b) in enumerate(item_slices):
        bounds = np.sort(refined[a:b])
        if bounds.size % 2 != 0:
            raise RegionError("unpaired region boundary during assembly")
        sig = float(sigmas[i])
        ivs = [
            (sig * bounds[2 * k], sig * bounds[2 * k + 1])
            for k in range(bounds.size // 2)
        ]
        region = ConfidenceRegion(ivs, level)
        if region.n_intervals > 1:
            warnings.warn(
                f"FAB region at y={ys[i]:g} is a union of {region.n_intervals} intervals",
                SpendingDiagnosticWarning,
                stacklevel=2,
            )
        regions.append(region)
    return regions


def fab_cr(
    y: float,
    sigma: float,
    prior: PriorSpec,
    alpha: float,
    search: RegionSearch | None = None,
) -> ConfidenceRegion:
    """The FAB confidence region {beta : y falls in beta's acceptance interval}.

    Scans beta over y +/- ``search.half_width`` * sigma (expanding by doubling
    while a window edge is still a member), refines every membership flip by
    bisection to ``search.refine_tol`` * sigma, and returns the union of
    closed intervals. The Tweedie posterior mean is always contained.
    """
    region = fab_cr_batch([y], [sigma], prior, alpha, search)[0]
    witness = float(_priors.posterior_mean(y, sigma, prior))
    slack = (search or RegionSearch()).refine_tol * sigma
    if not any(lo - slack <= witness <= hi + slack for lo, hi in region.intervals):
        raise RegionError("posterior-mean witness escaped the constructed region")
    return region


def hausdorff_distance(a: ConfidenceRegion, b: ConfidenceRegion) -> float:
    """Exact Hausdorff distance between two unions of closed intervals."""

    def dist_to(x: float, region: ConfidenceRegion) -> float:
        best = math.inf
        for lo, hi in region.intervals:
            if lo <= x <= hi:
                return 0.0
            best = min(best, abs(x - lo), abs(x - hi))
        return best

    def directed(src: ConfidenceRegion, dst: ConfidenceRegion) -> float:
        # sup over src of dist(., dst) is attained at an interval endpoint of
        # src or at a gap midpoint of dst lying inside src.
        gaps = [
            0.5 * (dst.intervals[k][1] + dst.intervals[k + 1][0])
            for k in range(dst.n_intervals - 1)
        ]
        worst = 0.0
        for lo, hi in src.intervals:
            candidates = [lo, hi] + [g for g in gaps if lo < g < hi]
            worst = max(worst, max(dist_to(x, dst) for x in candidates))
        return worst

    return max(directed(a, b), directed(b, a))
