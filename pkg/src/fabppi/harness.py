"""Experiment harness: synthetic coverage/width/MSE studies and CSV studies.

Three scenarios are supported:

* biased: X ~ N(0,1), Y = X + eps, f(X) = X + gamma, infinite unlabelled data
  (the measure of fit is the analytic mean gamma); sweeps gamma.
* noisy: Y ~ N(0,1), f = Y + sigma_y * eps, finite unlabelled sample drawn the
  same way; sweeps sigma_y (and optionally n).
* dataset: a user CSV with header ``y,f`` split uniformly at random into n
  labelled and (rows - n) unlabelled observations per repetition; the truth is
  the full-sample statistic.

Every repetition draws from its own counter-based stream (Philox) keyed by
(master seed, canonical scenario parameters, repetition index), so results are
bit-identical across runs, chunk orders, and worker counts.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ppi as _ppi
from .errors import ConfigError, DegenerateSampleError, DomainError
from .fabcr import RegionSearch, fab_cr_batch
from .ppi import (
    DeltaRule,
    LabelledSample,
    LossModel,
    Method,
    ThetaGrid,
    UnlabelledSample,
    classical_convex,
    fab_ppi_convex,
    fab_ppi_mean,
    mean_stats_batch,
    ppi_convex,
)
from .priors import PriorFamily, PriorSpec, ScaleRule, posterior_mean
from .specfun import norm_quantile

__all__ = [
    "MethodSpec",
    "ExperimentConfig",
    "MetricsRow",
    "seed_stream",
    "run",
    "run_biased_study",
    "run_noisy_study",
    "run_dataset_study",
    "emit",
    "read_dataset_csv",
]

_CHUNK_REPS = 64  # fixed chunk size: results must not depend on worker count
_FAST_REPS = 200

_METHOD_IDS = {
    "classical": Method.CLASSICAL,
    "ppi": Method.PPI,
    "ppi++": Method.PPI_PP,
    "fab-ppi": Method.FAB_PPI,
    "fab-ppi++": Method.FAB_PPI_PP,
}
_PRIOR_IDS = {
    "horseshoe": PriorFamily.HORSESHOE,
    "hs": PriorFamily.HORSESHOE,
    "gaussian": PriorFamily.GAUSSIAN,
}


@dataclass(frozen=True)
class MethodSpec:
    """One estimator to run: method x prior x scale rule x mode."""

    method: Method
    prior: PriorSpec | None = None
    delta_rule: DeltaRule | None = None  # None: use the config-level rule

    def __post_init__(self):
        fab = self.method in (Method.FAB_PPI, Method.FAB_PPI_PP)
        if fab and self.prior is None:
            raise ConfigError(f"{self.method.value} requires a prior")
        if not fab and self.prior is not None:
            raise ConfigError(f"{self.method.value} does not take a prior")

    @property
    def power_tuned(self) -> bool:
        return self.method in (Method.PPI_PP, Method.FAB_PPI_PP)

    @property
    def prior_label(self) -> str:
        return "" if self.prior is None else self.prior.label

    @classmethod
    def from_dict(cls, entry: dict) -> "MethodSpec":
        if "method" not in entry:
            raise ConfigError("method descriptor needs a 'method' key")
        method_id = str(entry["method"]).lower()
        if method_id not in _METHOD_IDS:
            raise ConfigError(f"unknown method id {method_id!r}")
        method = _METHOD_IDS[method_id]
        prior = None
        if "prior" in entry and entry["prior"] is not None:
            family_id = str(entry["prior"]).lower()
            if family_id not in _PRIOR_IDS:
                raise ConfigError(f"unknown prior {entry['prior']!r}")
            rule, value = _parse_scale_rule(entry.get("scale_rule", "match_sigma"))
            prior = PriorSpec(_PRIOR_IDS[family_id], rule, value)
        elif "scale_rule" in entry:
            raise ConfigError("scale_rule given without a prior")
        delta_rule = (
            _parse_delta_rule(entry["delta_rule"]) if "delta_rule" in entry else None
        )
        return cls(method=method, prior=prior, delta_rule=delta_rule)


def _parse_scale_rule(raw) -> tuple[ScaleRule, float | None]:
    if isinstance(raw, str):
        try:
            return ScaleRule(raw.lower()), None
        except ValueError as exc:
            raise ConfigError(f"unknown scale rule {raw!r}") from exc
    if isinstance(raw, dict) and set(raw) == {"fixed"}:
        return ScaleRule.FIXED, float(raw["fixed"])
    raise ConfigError(f"cannot parse scale rule {raw!r}")


def _parse_delta_rule(raw) -> DeltaRule:
    if raw is None or raw == "known_m":
        return DeltaRule.known_m()
    if raw == "full":
        return DeltaRule.full()
    if isinstance(raw, str) and raw.startswith("full:"):
        return DeltaRule.full(float(raw.split(":", 1)[1]))
    if isinstance(raw, dict) and set(raw) == {"full"}:
        value = raw["full"]
        return DeltaRule.full(None if value is None else float(value))
    raise ConfigError(f"cannot parse delta rule {raw!r}")


def _parse_target(raw):
    if raw is None or raw == "mean":
        return ("mean", None)
    if isinstance(raw, dict) and set(raw) == {"quantile"}:
        q = float(raw["quantile"])
        if not (0.0 < q < 1.0):
            raise ConfigError("quantile level must be in (0, 1)")
        return ("quantile", q)
    raise ConfigError(f"cannot parse target {raw!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative study description (mirrors the JSON config format)."""

    scenario: str
    methods: tuple[MethodSpec, ...]
    alpha: float = 0.1
    delta_rule: DeltaRule = field(default_factory=DeltaRule.known_m)
    repetitions: int = 1000
    master_seed: int = 0
    n: tuple[int, ...] = (200,)
    N: int | None = None  # None means infinite (analytic measure of fit)
    gamma_grid: tuple[float, ...] = ()
    sigma_y_list: tuple[float, ...] = ()
    dataset_path: str | None = None
    target: str = "mean"
    quantile: float | None = None
    theta_grid: ThetaGrid | None = None

    def __post_init__(self):
        if self.scenario not in ("biased", "noisy", "dataset"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must be in (0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if any(n < 2 for n in self.n):
            raise ConfigError("n must be >= 2")
        if self.scenario == "biased":
            if not self.gamma_grid:
                raise ConfigError("biased scenario needs gamma_grid")
            if self.N is not None:
                raise ConfigError("biased scenario assumes infinite N")
            for rule in self._rules():
                if not rule.is_known_m:
                    raise ConfigError("biased scenario supports only known_m mode")
        if self.scenario == "noisy":
            if not self.sigma_y_list:
                raise ConfigError("noisy scenario needs sigma_y_list")
            if self.N is None or self.N < 2:
                raise ConfigError("noisy scenario needs finite N >= 2")
        if self.scenario == "dataset":
            if not self.dataset_path:
                raise ConfigError("dataset scenario needs dataset_path")
            if self.target == "quantile" and self.quantile is None:
                raise ConfigError("quantile target needs its level")

    def _rules(self):
        return [spec.delta_rule or self.delta_rule for spec in self.methods]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {
            "scenario",
            "n",
            "N",
            "gamma_grid",
            "sigma_y_list",
            "dataset_path",
            "target",
            "methods",
            "alpha",
            "delta_rule",
            "repetitions",
            "master_seed",
            "theta_grid",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in raw or "methods" not in raw:
            raise ConfigError("config needs 'scenario' and 'methods'")
        n_raw = raw.get("n", 200)
        n = tuple(int(v) for v in (n_raw if isinstance(n_raw, list) else [n_raw]))
        N_raw = raw.get("N", "infinite" if raw["scenario"] == "biased" else None)
        if N_raw in (None, "infinite"):
            N = None
        else:
            N = int(N_raw)
        target, quantile = _parse_target(raw.get("target"))
        grid_raw = raw.get("theta_grid")
        if grid_raw is None:
            theta_grid = None
        elif isinstance(grid_raw, list) and len(grid_raw) in (2, 3):
            theta_grid = ThetaGrid(
                float(grid_raw[0]),
                float(grid_raw[1]),
                int(grid_raw[2]) if len(grid_raw) == 3 else 2001,
            )
        else:
            raise ConfigError("theta_grid must be [lo, hi] or [lo, hi, count]")
        return cls(
            scenario=str(raw["scenario"]),
            methods=tuple(MethodSpec.from_dict(m) for m in raw["methods"]),
            alpha=float(raw.get("alpha", 0.1)),
            delta_rule=_parse_delta_rule(raw.get("delta_rule")),
            repetitions=int(raw.get("repetitions", 1000)),
            master_seed=int(raw.get("master_seed", 0)),
            n=n,
            N=N,
            gamma_grid=tuple(float(g) for g in raw.get("gamma_grid", [])),
            sigma_y_list=tuple(float(s) for s in raw.get("sigma_y_list", [])),
            dataset_path=raw.get("dataset_path"),
            target=target,
            quantile=quantile,
            theta_grid=theta_grid,
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)


@dataclass(frozen=True)
class MetricsRow:
    """One aggregated (scenario point x method) result."""

    scenario: str
    param: str
    n: int
    N: int | None
    method: str
    prior: str
    mode: str
    mse: float
    avg_volume: float
    coverage: float
    reps: int
    truth: float

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "param": self.param,
            "n": self.n,
            "N": "infinite" if self.N is None else self.N,
            "method": self.method,
            "prior": self.prior,
            "mode": self.mode,
            "mse": self.mse,
            "avg_volume": self.avg_volume,
            "coverage": self.coverage,
            "reps": self.reps,
            "truth": self.truth,
        }


def seed_stream(master_seed: int, scenario_params: str, rep_index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, canonical params, repetition)."""
    digest = hashlib.blake2b(
        str(scenario_params).encode("utf-8"), digest_size=8
    ).digest()
    entropy = [
        int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        int.from_bytes(digest, "little"),
        int(rep_index) & 0xFFFFFFFFFFFFFFFF,
    ]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _worker_count() -> int:
    raw = os.environ.get("FABPPI_THREADS", "0")
    try:
        requested = int(raw)
    except ValueError as exc:
        raise ConfigError("FABPPI_THREADS must be an integer") from exc
    if requested < 0:
        raise ConfigError("FABPPI_THREADS must be >= 0")
    if requested == 0:
        return min(8, os.cpu_count() or 1)
    return requested


def _run_chunks(n_reps: int, work, workers: int):
    """Run ``work(start, stop)`` over fixed chunks, assembling by index."""
    chunks = [
        (start, min(start + _CHUNK_REPS, n_reps))
        for start in range(0, n_reps, _CHUNK_REPS)
    ]
    if workers <= 1 or len(chunks) == 1:
        for start, stop in chunks:
            work(start, stop)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(work, start, stop) for start, stop in chunks]
        for fut in futures:
            fut.result()


# ----------------------------------------------------------------------------
# Mean-target execution (vectorized across repetitions).


@dataclass
class _MethodAccumulator:
    spec: MethodSpec
    points: np.ndarray
    widths: np.ndarray
    covered: np.ndarray


def _fab_metrics_batch(stats, spec, rule, alpha, truth, n):
    """Points, widths, and coverage for a FAB method over a chunk of reps."""
    prior = spec.prior.resolve(n)
    delta_level = rule.resolve_delta(alpha)
    if np.any(stats.sigma == 0.0):
        raise DegenerateSampleError(
            "a repetition produced a zero-variance rectifier; FAB is undefined"
        )
    if prior.scale_rule is ScaleRule.MATCH_SIGMA:
        u = stats.delta / stats.sigma
        points = stats.theta_f - stats.sigma * np.asarray(
            posterior_mean(u, 1.0, prior), dtype=float
        )
    else:
        points = stats.theta_f - np.array(
            [posterior_mean(d, s, prior) for d, s in zip(stats.delta, stats.sigma)]
        )
    regions = fab_cr_batch(stats.delta, stats.sigma, prior, delta_level)
    if rule.is_known_m:
        widths = np.array([r.volume for r in regions])
        shifted_truth = stats.theta_f - truth
        covered = np.array(
            [r.contains(float(t)) for r, t in zip(regions, shifted_truth)]
        )
    else:
        pad = norm_quantile(1.0 - (alpha - delta_level) / 2.0) * stats.sigma_f
        lo = stats.theta_f - pad - np.array([r.upper for r in regions])
        hi = stats.theta_f + pad - np.array([r.lower for r in regions])
        widths = hi - lo
        covered = (lo <= truth) & (truth <= hi)
    return points, widths, covered


def _clt_metrics_batch(stats, rule, alpha, truth):
    points = stats.theta_f - stats.delta
    delta_level = rule.resolve_delta(alpha)
    if rule.is_known_m:
        half = norm_quantile(1.0 - alpha / 2.0) * stats.sigma
    else:
        half = (
            norm_quantile(1.0 - delta_level / 2.0) * stats.sigma
            + norm_quantile(1.0 - (alpha - delta_level) / 2.0) * stats.sigma_f
        )
    covered = np.abs(points - truth) <= half
    return points, 2.0 * half, covered


def _classical_metrics_batch(y2, alpha, truth):
    points = y2.mean(axis=1)
    sd = np.std(y2, axis=1, ddof=1) / math.sqrt(y2.shape[1])
    half = norm_quantile(1.0 - alpha / 2.0) * sd
    covered = np.abs(points - truth) <= half
    return points, 2.0 * half, covered


def _execute_mean_study(cfg, scenario_key, param_str, n, N, truth, gen, reps, workers):
    """Shared executor: gen(rng) -> (y, fx, fu-or-None, analytic_mean-or-None)."""
    accs = [
        _MethodAccumulator(
            spec=spec,
            points=np.empty(reps),
            widths=np.empty(reps),
            covered=np.empty(reps, dtype=bool),
        )
        for spec in cfg.methods
    ]
    analytic = N is None

    def work(start, stop):
        rows = stop - start
        y2 = np.empty((rows, n))
        f2 = np.empty((rows, n))
        fu2 = None if analytic else np.empty((rows, N))
        mu = np.empty(rows) if analytic else None
        for i, rep in enumerate(range(start, stop)):
            rng = seed_stream(cfg.master_seed, param_str, rep)
            y, fx, fu, analytic_mean = gen(rng)
            y2[i] = y
            f2[i] = fx
            if analytic:
                mu[i] = analytic_mean
            else:
                fu2[i] = fu
        stats_plain = None
        stats_tuned = None
        for acc in accs:
            spec = acc.spec
            rule = spec.delta_rule or cfg.delta_rule
            if spec.method is Method.CLASSICAL:
                res = _classical_metrics_batch(y2, cfg.alpha, truth)
            else:
                if spec.power_tuned:
                    if stats_tuned is None:
                        stats_tuned = mean_stats_batch(
                            y2, f2, fu2, analytic_mean=mu, power_tuned=True
                        )
                    stats = stats_tuned
                else:
                    if stats_plain is None:
                        stats_plain = mean_stats_batch(
                            y2, f2, fu2, analytic_mean=mu, power_tuned=False
                        )
                    stats = stats_plain
                if spec.method in (Method.PPI, Method.PPI_PP):
                    res = _clt_metrics_batch(stats, rule, cfg.alpha, truth)
                else:
                    res = _fab_metrics_batch(stats, spec, rule, cfg.alpha, truth, n)
            acc.points[start:stop], acc.widths[start:stop], acc.covered[start:stop] = res

    _run_chunks(reps, work, workers)

    rows = []
    for acc in accs:
        spec = acc.spec
        rule = spec.delta_rule or cfg.delta_rule
        rows.append(
            MetricsRow(
                scenario=scenario_key,
                param=param_str_value(param_str),
                n=n,
                N=N,
                method=spec.method.value,
                prior=spec.prior_label,
                mode=rule.label,
                mse=float(np.mean((acc.points - truth) ** 2)),
                avg_volume=float(np.mean(acc.widths)),
                coverage=float(np.mean(acc.covered)),
                reps=reps,
                truth=float(truth),
            )
        )
    return rows


def param_str_value(param_str: str) -> str:
    """The human-facing param column: strip the canonical key prefix."""
    return param_str.split("|")[-1]


def _reps(cfg: ExperimentConfig, fast: bool) -> int:
    return min(cfg.repetitions, _FAST_REPS) if fast else cfg.repetitions


def run_biased_study(cfg: ExperimentConfig, fast: bool = False) -> list[MetricsRow]:
    """Biased-predictions sweep: f(X) = X + gamma, infinite unlabelled data."""
    if cfg.scenario != "biased":
        raise ConfigError("config scenario is not 'biased'")
    reps = _reps(cfg, fast)
    workers = _worker_count()
    rows: list[MetricsRow] = []
    for n in cfg.n:
        for gamma in cfg.gamma_grid:
            param = f"biased|n={n}|gamma={gamma:.12g}"

            def gen(rng, gamma=gamma, n=n):
                x = rng.standard_normal(n)
                eps = rng.standard_normal(n)
                return x + eps, x + gamma, None, gamma

            rows.extend(
                _execute_mean_study(
                    cfg, "biased", param, n, None, 0.0, gen, reps, workers
                )
            )
    return rows


def run_noisy_study(cfg: ExperimentConfig, fast: bool = False) -> list[MetricsRow]:
    """Noisy-predictions sweep: f = Y + sigma_y * eps with finite N."""
    if cfg.scenario != "noisy":
        raise ConfigError("config scenario is not 'noisy'")
    reps = _reps(cfg, fast)
    workers = _worker_count()
    rows: list[MetricsRow] = []
    for n in cfg.n:
        for sigma_y in cfg.sigma_y_list:
            param = f"noisy|n={n}|N={cfg.N}|sigma_y={sigma_y:.12g}"

            def gen(rng, sigma_y=sigma_y, n=n, N=cfg.N):
                y = rng.standard_normal(n)
                fx = y + sigma_y * rng.standard_normal(n)
                yu = rng.standard_normal(N)
                fu = yu + sigma_y * rng.standard_normal(N)
                return y, fx, fu, None

            rows.extend(
                _execute_mean_study(
                    cfg, "noisy", param, n, cfg.N, 0.0, gen, reps, workers
                )
            )
    return rows


# ----------------------------------------------------------------------------
# Dataset studies.


def read_dataset_csv(path, allow_unlabelled: bool = False):
    """Parse a ``y,f`` CSV; returns (y, f) plus unlabelled predictions if allowed.

    Rows with an empty ``y`` field are treated as unlabelled predictions when
    ``allow_unlabelled`` is set, and rejected otherwise. Malformed rows raise
    :class:`DomainError` with their line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DomainError(f"{path}: empty file") from None
    if [h.strip() for h in header] != ["y", "f"]:
        raise DomainError(f"{path}: line 1: header must be exactly 'y,f'")
    ys: list[float] = []
    fs: list[float] = []
    fu: list[float] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise DomainError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
        y_txt, f_txt = row[0].strip(), row[1].strip()
        try:
            f_val = float(f_txt)
        except ValueError:
            raise DomainError(f"{path}: line {lineno}: bad prediction {f_txt!r}") from None
        if y_txt == "":
            if not allow_unlabelled:
                raise DomainError(f"{path}: line {lineno}: missing label")
            fu.append(f_val)
            continue
        try:
            y_val = float(y_txt)
        except ValueError:
            raise DomainError(f"{path}: line {lineno}: bad label {y_txt!r}") from None
        if not (math.isfinite(y_val) and math.isfinite(f_val)):
            raise DomainError(f"{path}: line {lineno}: non-finite value")
        ys.append(y_val)
        fs.append(f_val)
    y_arr = np.asarray(ys, dtype=float)
    f_arr = np.asarray(fs, dtype=float)
    if allow_unlabelled:
        return y_arr, f_arr, np.asarray(fu, dtype=float)
    return y_arr, f_arr


def _default_quantile_grid(y: np.ndarray) -> ThetaGrid:
    lo, hi = float(np.min(y)), float(np.max(y))
    pad = 0.05 * (hi - lo) + 1e-9
    return ThetaGrid(lo - pad, hi + pad, 2001)


def _dataset_quantile_rep(cfg, spec, rule, lab, unl, grid):
    loss = LossModel.pinball(cfg.quantile)
    if spec.method is Method.CLASSICAL:
        return classical_convex(lab.y, loss, cfg.alpha, grid)
    if spec.method in (Method.PPI, Method.PPI_PP):
        return ppi_convex(
            lab, unl, loss, cfg.alpha, delta_rule=rule,
            power_tuned=spec.power_tuned, theta_grid=grid,
        )
    return fab_ppi_convex(
        lab, unl, loss, spec.prior, cfg.alpha, delta_rule=rule,
        power_tuned=spec.power_tuned, theta_grid=grid,
    )


def run_dataset_study(cfg: ExperimentConfig, fast: bool = False) -> list[MetricsRow]:
    """Split-and-repeat study on a user CSV; truth is the full-sample target."""
    if cfg.scenario != "dataset":
        raise ConfigError("config scenario is not 'dataset'")
    y_all, f_all = read_dataset_csv(cfg.dataset_path)
    total = y_all.size
    reps = _reps(cfg, fast)
    workers = _worker_count()
    tag = Path(cfg.dataset_path).stem
    rows: list[MetricsRow] = []
    for n in cfg.n:
        if n + 2 > total:
            raise SampleError_ish(n, total)
        N = total - n
        param = f"dataset|{tag}|n={n}"
        if cfg.target == "mean":
            truth = float(y_all.mean())

            def gen(rng, n=n):
                perm = rng.permutation(total)
                lab_idx, unl_idx = perm[:n], perm[n:]
                return y_all[lab_idx], f_all[lab_idx], f_all[unl_idx], None

            rows.extend(
                _execute_mean_study(
                    cfg, "dataset", param, n, N, truth, gen, reps, workers
                )
            )
        else:
            truth = float(np.quantile(y_all, cfg.quantile))
            grid = cfg.theta_grid or _default_quantile_grid(y_all)
            rows.extend(
                _dataset_quantile_study(
                    cfg, param, tag, n, N, truth, y_all, f_all, grid, reps, workers
                )
            )
    return rows


def SampleError_ish(n, total):
    from .errors import SampleSizeError

    return SampleSizeError(f"need at least n + 2 = {n + 2} rows, dataset has {total}")


def _dataset_quantile_study(cfg, param, tag, n, N, truth, y_all, f_all, grid, reps, workers):
    total = y_all.size
    accs = [
        _MethodAccumulator(
            spec=spec,
            points=np.empty(reps),
            widths=np.empty(reps),
            covered=np.empty(reps, dtype=bool),
        )
        for spec in cfg.methods
    ]

    def work(start, stop):
        for rep in range(start, stop):
            rng = seed_stream(cfg.master_seed, param, rep)
            perm = rng.permutation(total)
            lab = LabelledSample(y_all[perm[:n]], f_all[perm[:n]])
            unl = UnlabelledSample.from_predictions(f_all[perm[n:]])
            for acc in accs:
                rule = acc.spec.delta_rule or cfg.delta_rule
                rep_out = _dataset_quantile_rep(cfg, acc.spec, rule, lab, unl, grid)
                acc.points[rep] = rep_out.point
                acc.widths[rep] = rep_out.region.volume
                acc.covered[rep] = rep_out.region.contains(truth)

    _run_chunks(reps, work, workers)

    rows = []
    for acc in accs:
        rule = acc.spec.delta_rule or cfg.delta_rule
        rows.append(
            MetricsRow(
                scenario="dataset",
                param=param_str_value(param),
                n=n,
                N=N,
                method=acc.spec.method.value,
                prior=acc.spec.prior_label,
                mode=rule.label,
                mse=float(np.mean((acc.points - truth) ** 2)),
                avg_volume=float(np.mean(acc.widths)),
                coverage=float(np.mean(acc.covered)),
                reps=reps,
                truth=truth,
            )
        )
    return rows


def run(cfg: ExperimentConfig, fast: bool = False) -> list[MetricsRow]:
    """Dispatch to the scenario runner."""
    if cfg.scenario == "biased":
        return run_biased_study(cfg, fast)
    if cfg.scenario == "noisy":
        return run_noisy_study(cfg, fast)
    return run_dataset_study(cfg, fast)


# ----------------------------------------------------------------------------
# Emission.

_CSV_COLUMNS = [
    "scenario",
    "param",
    "n",
    "N",
    "method",
    "prior",
    "mode",
    "mse",
    "avg_volume",
    "coverage",
    "reps",
    "truth",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def render(rows: list[MetricsRow], fmt: str = "csv") -> str:
    """Render rows to the canonical CSV or JSON text (byte-deterministic)."""
    if not rows:
        raise DomainError("no rows to emit")
    if fmt == "csv":
        lines = [",".join(_CSV_COLUMNS)]
        for row in rows:
            record = row.as_dict()
            lines.append(",".join(_fmt(record[col]) for col in _CSV_COLUMNS))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        return json.dumps([row.as_dict() for row in rows], indent=2) + "\n"
    raise ConfigError(f"unknown output format {fmt!r}")


def emit(rows: list[MetricsRow], fmt: str, path) -> None:
    """Write rows to ``path`` (CSV or JSON); identical inputs, identical bytes."""
    text = render(rows, fmt)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot write {path}: {exc}") from exc
