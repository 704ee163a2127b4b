"""Metrics, random baselines, cluster-bootstrap comparisons, and reports.

Prediction error is summarized as normalized RMSE: plain RMSE divided by the
7-unit width of the theoretical score range (-3.5 to 3.5), so 0 is perfect
and values near 1 are maximally wrong. Agreement is the sample Pearson
correlation.

Model differences are compared with a cluster bootstrap: every replicate
resamples subjects (clusters) with replacement, pools the clips of the drawn
subjects, and recomputes each model's NRMSE and correlation. Percentile
confidence intervals and a sign-based two-tailed p-value (floored at
1/n_resamples) are taken over the replicates. Replicates in which one side
collapses to zero variance are skipped and counted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._validate import as_vector
from .errors import (
    LengthMismatch,
    SingleCluster,
    ValidationError,
    ZeroVariance,
)

__all__ = [
    "SCORE_RANGE_HALF",
    "SCORE_RANGE_WIDTH",
    "EvalPairs",
    "BootstrapEstimate",
    "BootstrapComparison",
    "nrmse",
    "pearson",
    "uniform_baseline",
    "normal_baseline",
    "model_metrics",
    "cluster_bootstrap",
    "pooled_pairs",
    "score_table",
    "comparison_table",
    "weight_table",
    "write_table_csv",
]

#: Theoretical score range used to normalize RMSE.
SCORE_RANGE_HALF = 3.5
SCORE_RANGE_WIDTH = 2 * SCORE_RANGE_HALF


def nrmse(pred, truth, range_width: float = SCORE_RANGE_WIDTH) -> float:
    """RMSE divided by the width of the theoretical score range."""
    p = as_vector(pred, "pred")
    t = as_vector(truth, "truth")
    if len(p) != len(t):
        raise LengthMismatch(f"pred has {len(p)} entries, truth has {len(t)}")
    if len(p) == 0:
        raise ValidationError("empty prediction vector")
    return float(np.sqrt(np.mean((p - t) ** 2)) / range_width)


def pearson(pred, truth) -> float:
    """Sample Pearson correlation; raises ZeroVariance when either side is constant."""
    p = as_vector(pred, "pred")
    t = as_vector(truth, "truth")
    if len(p) != len(t):
        raise LengthMismatch(f"pred has {len(p)} entries, truth has {len(t)}")
    if len(p) < 2:
        raise ValidationError("need at least 2 pairs for a correlation")
    pc = p - p.mean()
    tc = t - t.mean()
    denom = np.sqrt((pc @ pc) * (tc @ tc))
    if denom == 0.0:
        raise ZeroVariance("zero variance in predictions or truth")
    return float((pc @ tc) / denom)


def uniform_baseline(n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws from Uniform(-3.5, 3.5), deterministic per seed (PCG64)."""
    return np.random.default_rng(seed).uniform(-SCORE_RANGE_HALF, SCORE_RANGE_HALF, size=n)


def normal_baseline(n: int, seed: int) -> np.ndarray:
    """n i.i.d. standard-normal draws, deterministic per seed (PCG64 ziggurat)."""
    return np.random.default_rng(seed).standard_normal(n)


# ---------------------------------------------------------------------------
# Cluster bootstrap
# ---------------------------------------------------------------------------


@dataclass
class EvalPairs:
    """Per-observation (prediction, truth, subject) triples for one model.

    Most models have one observation per clip; the human baseline stacks one
    observation per (rater, clip). Subjects act as the bootstrap clusters.
    """

    pred: np.ndarray
    truth: np.ndarray
    subjects: np.ndarray

    def __post_init__(self):
        self.pred = as_vector(self.pred, "pred")
        self.truth = as_vector(self.truth, "truth")
        self.subjects = np.asarray(self.subjects)
        if not len(self.pred) == len(self.truth) == len(self.subjects):
            raise LengthMismatch(
                f"pred/truth/subjects lengths differ: {len(self.pred)}/{len(self.truth)}/{len(self.subjects)}"
            )
        if len(self.pred) == 0:
            raise ValidationError("empty evaluation pairs")

    @classmethod
    def concat(cls, parts) -> "EvalPairs":
        parts = list(parts)
        return cls(
            pred=np.concatenate([p.pred for p in parts]),
            truth=np.concatenate([p.truth for p in parts]),
            subjects=np.concatenate([p.subjects for p in parts]),
        )


@dataclass(frozen=True)
class BootstrapEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    p_value: float


@dataclass(frozen=True)
class BootstrapComparison:
    """Difference (model A minus model B) in NRMSE and correlation."""

    delta_nrmse: BootstrapEstimate
    delta_corr: BootstrapEstimate
    n_resamples: int
    n_skipped: int
    seed: int


def _cluster_stats(pairs: EvalPairs, cluster_order: np.ndarray) -> np.ndarray:
    """Per-cluster sufficient statistics for NRMSE and correlation.

    Columns: n, sum (p-t)^2, and centered sums p, t, p^2, t^2, p*t (centering
    by the full-sample means keeps the correlation numerically stable; it does
    not change its value).
    """
    p = pairs.pred - pairs.pred.mean()
    t = pairs.truth - pairs.truth.mean()
    sq = (pairs.pred - pairs.truth) ** 2
    stats = np.zeros((len(cluster_order), 7))
    index = {c: i for i, c in enumerate(cluster_order)}
    rows = np.fromiter((index[c] for c in pairs.subjects), count=len(p), dtype=np.int64)
    np.add.at(stats, rows, np.column_stack([np.ones_like(p), sq, p, t, p * p, t * t, p * t]))
    return stats


def _replicate_metrics(stats: np.ndarray, counts: np.ndarray, range_width: float):
    """Vectorized NRMSE/correlation for every replicate from cluster stats."""
    agg = counts @ stats
    n = agg[:, 0]
    mse = agg[:, 1] / n
    mean_p = agg[:, 2] / n
    mean_t = agg[:, 3] / n
    var_p = agg[:, 4] / n - mean_p**2
    var_t = agg[:, 5] / n - mean_t**2
    cov = agg[:, 6] / n - mean_p * mean_t
    ok = (var_p > 1e-12) & (var_t > 1e-12)
    corr = np.full(len(n), np.nan)
    corr[ok] = cov[ok] / np.sqrt(var_p[ok] * var_t[ok])
    return np.sqrt(mse) / range_width, corr, ok


def _estimate(deltas: np.ndarray, confidence: float, n_resamples: int, point: float) -> BootstrapEstimate:
    alpha = 1.0 - confidence
    ci_low, ci_high = np.percentile(deltas, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    p = 2.0 * min(float(np.mean(deltas <= 0.0)), float(np.mean(deltas >= 0.0)))
    p = min(max(p, 1.0 / n_resamples), 1.0)
    return BootstrapEstimate(estimate=point, ci_low=float(ci_low), ci_high=float(ci_high), p_value=p)


def _as_members(pairs) -> tuple[EvalPairs, ...]:
    """A model is one EvalPairs or a tuple of them; its metric is the member mean.

    The tuple form carries the human baseline, where each member is one
    rater's predicted/target pairs and the reported metric averages over
    raters.
    """
    if isinstance(pairs, EvalPairs):
        return (pairs,)
    members = tuple(pairs)
    if not members or not all(isinstance(p, EvalPairs) for p in members):
        raise ValidationError("model pairs must be EvalPairs or a non-empty sequence of them")
    return members


def model_metrics(pairs, range_width: float = SCORE_RANGE_WIDTH) -> tuple[float, float]:
    """(NRMSE, correlation) for a model, averaging over members for tuples."""
    members = _as_members(pairs)
    return (
        float(np.mean([nrmse(p.pred, p.truth, range_width) for p in members])),
        float(np.mean([pearson(p.pred, p.truth) for p in members])),
    )


def cluster_bootstrap(
    pairs_a,
    pairs_b,
    n_resamples: int = 2000,
    seed: int = 0,
    confidence: float = 0.95,
    range_width: float = SCORE_RANGE_WIDTH,
) -> BootstrapComparison:
    """Subject-level bootstrap of (NRMSE_A - NRMSE_B, corr_A - corr_B).

    Both models must cover the same subject set (they are resampled jointly).
    Each side may be one EvalPairs or a tuple of them; a tuple's replicate
    metric is the mean over its members, and a replicate is skipped when any
    member degenerates to zero variance. Deterministic for a given seed.
    Raises SingleCluster for fewer than two subjects and ZeroVariance if every
    replicate degenerates.
    """
    members_a = _as_members(pairs_a)
    members_b = _as_members(pairs_b)
    subjects_a = set().union(*(set(p.subjects.tolist()) for p in members_a))
    subjects_b = set().union(*(set(p.subjects.tolist()) for p in members_b))
    if subjects_a != subjects_b:
        raise ValidationError("models must be evaluated over the same subjects")
    if n_resamples < 1:
        raise ValidationError(f"n_resamples must be >= 1, got {n_resamples}")
    cluster_order = np.array(sorted(subjects_a))
    m = len(cluster_order)
    if m < 2:
        raise SingleCluster("cluster bootstrap needs at least two subjects")

    nrmse_a0, corr_a0 = model_metrics(members_a, range_width)
    nrmse_b0, corr_b0 = model_metrics(members_b, range_width)

    rng = np.random.default_rng(seed)
    counts = rng.multinomial(m, np.full(m, 1.0 / m), size=n_resamples).astype(float)

    def replicate_means(members):
        nrmse_sum = np.zeros(n_resamples)
        corr_sum = np.zeros(n_resamples)
        ok = np.ones(n_resamples, dtype=bool)
        for member in members:
            r_nrmse, r_corr, r_ok = _replicate_metrics(
                _cluster_stats(member, cluster_order), counts, range_width
            )
            nrmse_sum += r_nrmse
            corr_sum = np.where(r_ok, corr_sum + r_corr, corr_sum)
            ok &= r_ok
        return nrmse_sum / len(members), corr_sum / len(members), ok

    nrmse_a, corr_a, ok_a = replicate_means(members_a)
    nrmse_b, corr_b, ok_b = replicate_means(members_b)
    keep = ok_a & ok_b
    n_skipped = int(n_resamples - keep.sum())
    if not keep.any():
        raise ZeroVariance("every bootstrap replicate had zero variance")

    return BootstrapComparison(
        delta_nrmse=_estimate((nrmse_a - nrmse_b)[keep], confidence, n_resamples, nrmse_a0 - nrmse_b0),
        delta_corr=_estimate((corr_a - corr_b)[keep], confidence, n_resamples, corr_a0 - corr_b0),
        n_resamples=n_resamples,
        n_skipped=n_skipped,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else _fmt(p)


def pooled_pairs(by_task: dict, tasks):
    """Concatenate a model's per-task pairs into its pooled evaluation set.

    Tuple-valued models (per-rater pairs) are concatenated member-wise, which
    requires the same member count in every task.
    """
    entries = [_as_members(by_task[str(t)]) for t in tasks]
    widths = {len(e) for e in entries}
    if len(widths) != 1:
        raise ValidationError(f"cannot pool: member counts differ across tasks ({sorted(widths)})")
    k = widths.pop()
    pooled = tuple(EvalPairs.concat([entry[r] for entry in entries]) for r in range(k))
    return pooled[0] if k == 1 else pooled


def score_table(models: dict[str, dict], tasks) -> tuple[list[str], list[list[str]]]:
    """Per-model NRMSE and correlation for each task plus the pooled column.

    ``models`` maps a model name to {task: EvalPairs-or-tuple}; the pooled
    cell is computed over the concatenation of the listed tasks. Returns
    (header, rows) ready for :func:`write_table_csv`, one row per model in
    insertion order.
    """
    task_names = [str(t) for t in tasks]
    header = (
        ["model"]
        + [f"nrmse_{t}" for t in task_names]
        + ["nrmse_all"]
        + [f"corr_{t}" for t in task_names]
        + ["corr_all"]
    )
    rows = []
    for name, by_task in models.items():
        missing = [t for t in task_names if t not in by_task]
        if missing:
            raise ValidationError(f"model {name!r} missing tasks {missing}")
        metrics = [model_metrics(by_task[t]) for t in task_names]
        metrics.append(model_metrics(pooled_pairs(by_task, task_names)))
        cells_nrmse = [m[0] for m in metrics]
        cells_corr = [m[1] for m in metrics]
        rows.append([name] + [_fmt(v) for v in cells_nrmse + cells_corr])
    return header, rows


def comparison_table(
    reference: str,
    models: dict[str, object],
    n_resamples: int = 2000,
    seed: int = 0,
    confidence: float = 0.95,
) -> tuple[list[str], list[list[str]], dict[str, BootstrapComparison]]:
    """Bootstrap comparison of the reference model against every other model.

    ``models`` maps model names to pooled EvalPairs (or tuples of them). One
    row per non-reference model, labelled "<reference> - <other>".
    """
    if reference not in models:
        raise ValidationError(f"reference model {reference!r} not among models")
    header = [
        "comparison",
        "nrmse_delta",
        "nrmse_ci_low",
        "nrmse_ci_high",
        "nrmse_p",
        "corr_delta",
        "corr_ci_low",
        "corr_ci_high",
        "corr_p",
    ]
    rows = []
    comparisons: dict[str, BootstrapComparison] = {}
    for name, pairs in models.items():
        if name == reference:
            continue
        comp = cluster_bootstrap(models[reference], pairs, n_resamples=n_resamples, seed=seed, confidence=confidence)
        comparisons[name] = comp
        rows.append(
            [
                f"{reference} - {name}",
                _fmt(comp.delta_nrmse.estimate),
                _fmt(comp.delta_nrmse.ci_low),
                _fmt(comp.delta_nrmse.ci_high),
                _fmt_p(comp.delta_nrmse.p_value),
                _fmt(comp.delta_corr.estimate),
                _fmt(comp.delta_corr.ci_low),
                _fmt(comp.delta_corr.ci_high),
                _fmt_p(comp.delta_corr.p_value),
            ]
        )
    return header, rows, comparisons


def weight_table(weights: dict[str, dict[str, float]]) -> tuple[list[str], list[list[str]]]:
    """Standardized feature weights per model/task, one (task, feature) row each."""
    header = ["task", "feature", "weight"]
    rows = []
    for task_name, by_feature in weights.items():
        for feature, value in by_feature.items():
            rows.append([str(task_name), feature, _fmt(float(value))])
    return header, rows


def write_table_csv(header: list[str], rows: list[list[str]], path, provenance: str | None = None) -> None:
    """Write a pre-formatted report table, optionally with a provenance comment."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
