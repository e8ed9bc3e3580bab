"""Correlation and robustness machinery for the two-source analysis.

Conventions fixed here: Spearman uses average ranks for ties and the
large-sample t approximation for p-values (flagged below n = 10);
bootstrap intervals are seeded 95% percentile intervals with a
deterministic per-resample seed schedule; quantile normalization uses
the Hazen plotting position (rank - 0.5) / n with average ranks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from .rng import rng_for

BOOTSTRAP_DEFAULT_B = 1000
LOG_TRANSFORM_EPS = 1e-6
REPORT_COLUMNS = ("group", "n", "spearman", "pearson", "p_value", "ci_low", "ci_high")


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class CorrReport:
    rho: float
    n: int
    p_value: float
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    degenerate: bool = False
    small_n: bool = False


@dataclass(frozen=True)
class CellKey:
    """Grouping key for normalization schemes: (environment, config)."""

    environment: str
    backbone: str

    def __post_init__(self) -> None:
        if not self.environment or not self.backbone:
            raise StatsError("cell key components must be non-empty")


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties replaced by their average rank."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson_core(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        return None
    return float(dx @ dy / math.sqrt(vx * vy))


def _t_approx_p(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(2.0 * sps.t.sf(abs(t), n - 2))


def _validate_xy(x: Sequence[float], y: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 3:
        raise StatsError(f"need at least 3 pairs, got {len(x)}")
    return x, y


def _corr_report(
    x: np.ndarray, y: np.ndarray, kind: str,
    ci: bool, b: int, seed: int,
) -> CorrReport:
    core = _pearson_core(average_ranks(x), average_ranks(y)) if kind == "spearman" else _pearson_core(x, y)
    n = len(x)
    if core is None:
        return CorrReport(rho=float("nan"), n=n, p_value=float("nan"), degenerate=True, small_n=n < 10)
    report = CorrReport(rho=core, n=n, p_value=_t_approx_p(core, n), small_n=n < 10)
    if ci:
        low, high = bootstrap_ci(list(zip(x, y)), stat=kind, b=b, seed=seed)
        report = CorrReport(
            rho=report.rho, n=n, p_value=report.p_value,
            ci_low=low, ci_high=high, small_n=report.small_n,
        )
    return report


def spearman(x: Sequence[float], y: Sequence[float], *, ci: bool = False,
             b: int = BOOTSTRAP_DEFAULT_B, seed: int = 0) -> CorrReport:
    """Spearman rho: Pearson of average ranks; constant input is flagged
    degenerate rather than raising."""
    x, y = _validate_xy(x, y)
    return _corr_report(x, y, "spearman", ci, b, seed)


def pearson(x: Sequence[float], y: Sequence[float], *, ci: bool = False,
            b: int = BOOTSTRAP_DEFAULT_B, seed: int = 0) -> CorrReport:
    x, y = _validate_xy(x, y)
    return _corr_report(x, y, "pearson", ci, b, seed)


def bootstrap_ci(
    pairs: Sequence[Tuple[float, float]],
    stat: str = "spearman",
    b: int = BOOTSTRAP_DEFAULT_B,
    seed: int = 0,
) -> Tuple[float, float]:
    """Seeded 95% percentile interval over b resamples with replacement.

    Each resample draws its indices from its own derived stream, so the
    set of resample statistics does not depend on evaluation order.
    Degenerate resamples (constant columns) are skipped; if every
    resample is degenerate the interval is undefined.
    """
    if b < 100:
        raise StatsError(f"need at least 100 resamples, got {b}")
    if stat not in ("spearman", "pearson"):
        raise StatsError(f"unknown statistic {stat!r}")
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise StatsError("pairs must be an (n >= 3, 2) array")
    n = arr.shape[0]
    values = []
    for i in range(b):
        idx = rng_for(seed, "resample", i).integers(0, n, n)
        xs, ys = arr[idx, 0], arr[idx, 1]
        core = (
            _pearson_core(average_ranks(xs), average_ranks(ys))
            if stat == "spearman"
            else _pearson_core(xs, ys)
        )
        if core is not None:
            values.append(core)
    if not values:
        raise StatsError("all bootstrap resamples were degenerate")
    low, high = np.percentile(values, [2.5, 97.5])
    return float(low), float(high)


# -- quantile normalization -----------------------------------------------------

SCHEMES = ("S1_per_cell", "S2_per_backbone", "S3_per_environment")


def quantile_normalize(
    values: Sequence[float],
    keys: Sequence[CellKey],
    scheme: str = "S1_per_cell",
) -> np.ndarray:
    """Replace each value with its Hazen quantile rank within the
    scheme's pool: Q = (average rank - 0.5) / pool size."""
    if scheme not in SCHEMES:
        raise StatsError(f"unknown scheme {scheme!r}")
    if len(values) != len(keys):
        raise StatsError("values and keys misaligned")
    values = np.asarray(values, dtype=float)
    if scheme == "S1_per_cell":
        pool_of = lambda k: (k.environment, k.backbone)  # noqa: E731
    elif scheme == "S2_per_backbone":
        pool_of = lambda k: k.backbone  # noqa: E731
    else:
        pool_of = lambda k: k.environment  # noqa: E731
    out = np.empty(len(values))
    pools: Dict[Any, List[int]] = {}
    for i, key in enumerate(keys):
        pools.setdefault(pool_of(key), []).append(i)
    for idx in pools.values():
        idx = np.asarray(idx)
        ranks = average_ranks(values[idx])
        out[idx] = (ranks - 0.5) / len(idx)
    return out


# -- transform robustness ----------------------------------------------------------


def transform_suite(
    sigma: Sequence[float],
    u: Sequence[float],
    *,
    t_scale: float = 2.0,
    u_scale: float = 2.0,
    log_eps: float = LOG_TRANSFORM_EPS,
) -> List[Dict[str, Any]]:
    """Correlations under monotone signal/utility transforms.

    Rows: raw, sigma^0.5, sigma^2, log(sigma + eps), sigma / T, u * a
    (a > 0), and u * -1. Spearman must match raw on all positive
    monotone signal rows and flip sign under the negation row.
    """
    sigma = np.asarray(sigma, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(sigma < 0):
        raise StatsError("signal transforms need nonnegative values")
    if log_eps <= 0 and np.any(sigma == 0):
        raise StatsError("log transform needs a positive offset when signals hit zero")
    if t_scale <= 0 or u_scale <= 0:
        raise StatsError("scale factors must be positive")
    rows = [
        ("raw", sigma, u),
        ("sigma_pow_0.5", np.sqrt(sigma), u),
        ("sigma_pow_2", sigma**2, u),
        ("sigma_log", np.log(sigma + log_eps), u),
        ("sigma_div_t", sigma / t_scale, u),
        ("u_scaled", sigma, u_scale * u),
        ("u_negated", sigma, -u),
    ]
    out = []
    for name, xs, ys in rows:
        out.append(
            {
                "transform": name,
                "spearman": spearman(xs, ys).rho,
                "pearson": pearson(xs, ys).rho,
            }
        )
    return out


# -- temporal and mixture structure ---------------------------------------------------


def temporal_split_rho(records: Iterable[Any]) -> Tuple[CorrReport, CorrReport, float]:
    """Early/late signal-label correlation around the median step index
    of the labeled records (early: step <= median)."""
    labeled = [r for r in records if getattr(r, "utility_label", None) is not None]
    if not labeled:
        raise StatsError("no labeled records")
    steps = np.array([r.step_index for r in labeled], dtype=float)
    median = float(np.median(steps))
    early = [r for r in labeled if r.step_index <= median]
    late = [r for r in labeled if r.step_index > median]
    if len(early) < 3 or len(late) < 3:
        raise StatsError(
            f"temporal split needs >= 3 labeled records per bucket, got {len(early)}/{len(late)}"
        )
    early_report = spearman([r.signal for r in early], [r.utility_label for r in early])
    late_report = spearman([r.signal for r in late], [r.utility_label for r in late])
    return early_report, late_report, float(late_report.rho - early_report.rho)


@dataclass(frozen=True)
class MixturePrediction:
    """Sign-level direction prediction for a two-source mixture. The
    linear blend is a sign predictor, not an estimator of Spearman rho."""

    value: float
    crossing: float


def predicted_rho(alpha: float, beta: float, p_i: float) -> MixturePrediction:
    if alpha <= 0 or beta <= 0:
        raise StatsError("slopes must be positive")
    if not 0.0 <= p_i <= 1.0:
        raise StatsError(f"p_i must lie in [0, 1], got {p_i}")
    return MixturePrediction(
        value=float(beta - (alpha + beta) * p_i),
        crossing=float(beta / (alpha + beta)),
    )


@dataclass(frozen=True)
class SimpsonReport:
    within_i: CorrReport
    within_d: CorrReport
    aggregate: CorrReport


def simpson_decomposition(records: Iterable[Any]) -> SimpsonReport:
    """Within-type and aggregate signal-utility correlations over one
    sample. Needs the simulator's debug channel (latent type plus the
    continuous hidden utility); binary labels cannot expose the exact
    within-type monotonicity."""
    rows = [
        r
        for r in records
        if getattr(r, "latent_type_debug", None) is not None
        and getattr(r, "true_utility_debug", None) is not None
    ]
    if not rows:
        raise StatsError("records carry no latent-type debug fields (not simulator data?)")
    group_i = [r for r in rows if r.latent_type_debug == "I"]
    group_d = [r for r in rows if r.latent_type_debug == "D"]
    if len(group_i) < 3 or len(group_d) < 3:
        raise StatsError("need >= 3 records of each latent type")
    return SimpsonReport(
        within_i=spearman([r.signal for r in group_i], [r.true_utility_debug for r in group_i]),
        within_d=spearman([r.signal for r in group_d], [r.true_utility_debug for r in group_d]),
        aggregate=spearman([r.signal for r in rows], [r.true_utility_debug for r in rows]),
    )


# -- classification ------------------------------------------------------------------


def auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Rank-based (Mann-Whitney) AUC with average-rank tie correction."""
    labels = np.asarray(labels, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape:
        raise StatsError("labels and scores misaligned")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise StatsError("AUC needs both classes present")
    ranks = average_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# -- report emission --------------------------------------------------------------------


def report_row(group: str, sp: CorrReport, pe: CorrReport) -> Dict[str, Any]:
    return {
        "group": group,
        "n": sp.n,
        "spearman": sp.rho,
        "pearson": pe.rho,
        "p_value": sp.p_value,
        "ci_low": sp.ci_low,
        "ci_high": sp.ci_high,
    }


def write_report_csv(path: str, rows: Sequence[Dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in REPORT_COLUMNS})


def write_report_json(path: str, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (CorrReport, SimpsonReport, MixturePrediction)):
        return asdict(value)
    raise TypeError(f"not JSON serializable: {type(value)}")
