"""Inter-rater reliability, single-factor scoring, and the human baseline.

The scoring model treats the three question means per clip as indicators of
one latent expressiveness variable with zero mean and unit variance. With
three indicators the model is just identified, so the maximum-likelihood
solution has the closed "triad" form on the sample covariance S::

    lambda_1 = sqrt(s12 * s13 / s23)   (and cyclically for lambda_2, lambda_3)
    eps_i    = s_ii - lambda_i**2

Per-clip scores are weighted-least-squares (Bartlett) estimates of the latent
variable, which are conditionally unbiased:

    score = (L' Psi^-1 L)^-1 L' Psi^-1 (x - mu),   Psi = diag(eps)

Rater agreement is summarized by the one-way random-effects, average-score
intraclass correlation ICC(1,k) = (MSB - MSW) / MSB, with confidence bounds
``1 - F_q / F`` where ``F = MSB / MSW`` and ``F_q`` are the two tail
quantiles of the F distribution on (n - 1, n(k - 1)) degrees of freedom.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import special
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validate import as_matrix
from .errors import (
    AllZeroLoadings,
    DegenerateData,
    HeywoodWarning,
    InsufficientRaters,
    NonPositiveCovariance,
    StandardizationDegenerate,
    ValidationError,
)
from .ingest import QUESTIONS, RatingsTable, Task

__all__ = [
    "IccResult",
    "CfaFit",
    "CfaScorer",
    "HumanBaseline",
    "icc_1k",
    "f_quantile",
    "mean_answers",
    "ratings_matrix",
    "fit_cfa",
    "fit_cfa_cov",
    "bartlett_scores",
    "human_baseline_scores",
    "reliability_table",
    "loading_table",
    "write_report_csv",
]


# ---------------------------------------------------------------------------
# Intraclass correlation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IccResult:
    """ICC(1,k) point estimate with its confidence interval."""

    icc: float
    ci_low: float
    ci_high: float
    n_targets: int
    k_raters: int


def f_quantile(p: float, df1: int, df2: int) -> float:
    """Inverse CDF of the F distribution via regularized-incomplete-beta inversion.

    Uses the identity that F ~ F(df1, df2) iff df1*F / (df1*F + df2) follows a
    Beta(df1/2, df2/2) law, so the quantile is recovered from ``betaincinv``.
    """
    if not 0.0 < p < 1.0:
        raise ValidationError(f"p must be in (0, 1), got {p}")
    if df1 < 1 or df2 < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    x = special.betaincinv(df1 / 2.0, df2 / 2.0, p)
    if x >= 1.0:
        return float("inf")
    return float(df2 * x / (df1 * (1.0 - x)))


def icc_1k(ratings, confidence: float = 0.95) -> IccResult:
    """One-way random-effects, average-of-k-raters intraclass correlation.

    ``ratings`` is an (n_targets, k_raters) matrix with no missing cells.
    Raises DegenerateData when all target means coincide (MSB = 0). When the
    raters agree perfectly within every target (MSW = 0) the ICC is exactly 1
    with a degenerate [1, 1] interval.
    """
    x = as_matrix(ratings, "ratings")
    n, k = x.shape
    if n < 2 or k < 2:
        raise ValidationError(f"need at least 2 targets and 2 raters, got {x.shape}")
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must be in (0, 1), got {confidence}")

    row_means = x.mean(axis=1)
    grand = x.mean()
    msb = k * np.sum((row_means - grand) ** 2) / (n - 1)
    msw = np.sum((x - row_means[:, None]) ** 2) / (n * (k - 1))
    if msb == 0.0:
        raise DegenerateData("all target means are equal; ICC undefined")
    if msw == 0.0:
        return IccResult(icc=1.0, ci_low=1.0, ci_high=1.0, n_targets=n, k_raters=k)

    icc = (msb - msw) / msb
    f_obs = msb / msw
    alpha = 1.0 - confidence
    df1, df2 = n - 1, n * (k - 1)
    ci_low = 1.0 - f_quantile(1.0 - alpha / 2.0, df1, df2) / f_obs
    ci_high = 1.0 - f_quantile(alpha / 2.0, df1, df2) / f_obs
    return IccResult(icc=float(icc), ci_low=float(ci_low), ci_high=float(ci_high), n_targets=n, k_raters=k)


# ---------------------------------------------------------------------------
# Question means and rater matrices
# ---------------------------------------------------------------------------


def mean_answers(table: RatingsTable) -> pd.DataFrame:
    """Per-clip mean of each question across raters.

    Returns a frame with columns ``clip_id, subject_id, task, q1, q2, q3``
    sorted by clip_id.
    """
    df = table.df
    grouped = df.groupby(["clip_id", "subject_id", "task"], as_index=False)[list(QUESTIONS)].mean()
    return grouped.sort_values("clip_id", kind="stable").reset_index(drop=True)


def ratings_matrix(table: RatingsTable, question: str, task: Task | str | None = None) -> np.ndarray:
    """(n_clips, k) matrix of one question's answers, raters sorted within clip.

    All selected clips must share the same rater count; otherwise
    InsufficientRaters is raised. Rater columns line up across clips when the
    rater pool is consistent (rows are ordered by rater_id within each clip).
    """
    if question not in QUESTIONS:
        raise ValidationError(f"unknown question {question!r}")
    df = table.df
    if task is not None:
        name = task.value if isinstance(task, Task) else str(task)
        df = df[df["task"] == name]
    if df.empty:
        raise ValidationError("no ratings selected")
    counts = df.groupby("clip_id").size()
    k_values = counts.unique()
    if len(k_values) != 1:
        raise InsufficientRaters(f"clips have differing rater counts: {sorted(k_values)}")
    k = int(k_values[0])
    ordered = df.sort_values(["clip_id", "rater_id"], kind="stable")
    return ordered[question].to_numpy(dtype=float).reshape(-1, k)


# ---------------------------------------------------------------------------
# Single-factor model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CfaFit:
    """Parameters of the single-factor, three-indicator model.

    ``residual_vars`` are clamped at zero when a fitted value is negative
    (the ``heywood`` flag records that this happened). ``model_cov`` rebuilds
    the model-implied covariance, which for this just-identified model equals
    the sample covariance.
    """

    loadings: np.ndarray        # (3,) raw loadings, indicator units
    residual_vars: np.ndarray   # (3,) >= 0
    means: np.ndarray           # (3,)
    indicator_sds: np.ndarray   # (3,) > 0
    heywood: bool = False
    n_obs: int | None = None

    @property
    def std_loadings(self) -> np.ndarray:
        return self.loadings / self.indicator_sds

    @property
    def std_residual_vars(self) -> np.ndarray:
        return self.residual_vars / self.indicator_sds**2

    def model_cov(self) -> np.ndarray:
        sigma = np.outer(self.loadings, self.loadings)
        np.fill_diagonal(sigma, self.indicator_sds**2)
        return sigma


def fit_cfa_cov(cov, means=None, n_obs: int | None = None) -> CfaFit:
    """Fit the single-factor model directly from a 3x3 covariance matrix.

    The covariance must be positive definite with positive off-diagonals,
    otherwise NonPositiveCovariance is raised. A negative fitted residual
    variance is clamped to zero and flagged with :class:`HeywoodWarning`.
    """
    s = as_matrix(cov, "cov", n_cols=3)
    if s.shape != (3, 3):
        raise ValidationError(f"cov must be 3x3, got {s.shape}")
    if not np.allclose(s, s.T):
        raise ValidationError("cov must be symmetric")
    if np.linalg.eigvalsh(s)[0] <= 0.0:
        raise NonPositiveCovariance("covariance matrix is not positive definite")
    s12, s13, s23 = s[0, 1], s[0, 2], s[1, 2]
    if min(s12, s13, s23) <= 0.0:
        raise NonPositiveCovariance("all pairwise covariances must be positive for the triad solution")

    loadings = np.array(
        [
            np.sqrt(s12 * s13 / s23),
            np.sqrt(s12 * s23 / s13),
            np.sqrt(s13 * s23 / s12),
        ]
    )
    residual = np.diag(s) - loadings**2
    heywood = bool((residual < 0.0).any())
    if heywood:
        worst = float(residual.min())
        warnings.warn(
            f"negative residual variance ({worst:.4g}) clamped to zero",
            HeywoodWarning,
            stacklevel=2,
        )
        residual = np.clip(residual, 0.0, None)
    mu = np.zeros(3) if means is None else np.asarray(means, dtype=float)
    return CfaFit(
        loadings=loadings,
        residual_vars=residual,
        means=mu,
        indicator_sds=np.sqrt(np.diag(s)),
        heywood=heywood,
        n_obs=n_obs,
    )


def fit_cfa(question_means) -> CfaFit:
    """Fit the single-factor model to an (n, 3) matrix of question means."""
    x = as_matrix(question_means, "question_means", n_cols=3)
    n = x.shape[0]
    if n < 10:
        raise ValidationError(f"need at least 10 observations to fit, got {n}")
    cov = np.cov(x, rowvar=False, ddof=1)
    return fit_cfa_cov(cov, means=x.mean(axis=0), n_obs=n)


def bartlett_scores(fit: CfaFit, question_means) -> np.ndarray:
    """Weighted-least-squares latent-score estimates for each row.

    When some residual variance is exactly zero, that indicator determines the
    score in the limit: the score is (x_i - mu_i) / lambda_i, averaged over
    such exact indicators if there are several.
    """
    x = as_matrix(question_means, "question_means", n_cols=3)
    lam = fit.loadings
    eps = fit.residual_vars
    centered = x - fit.means

    exact = (eps == 0.0) & (lam != 0.0)
    if exact.any():
        return (centered[:, exact] / lam[exact]).mean(axis=1)
    if np.all(lam == 0.0):
        raise AllZeroLoadings("every loading is zero; scores undefined")
    weights = lam / eps
    denom = float(np.sum(lam**2 / eps))
    if denom == 0.0:
        raise AllZeroLoadings("zero precision; scores undefined")
    return centered @ weights / denom


class CfaScorer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: fit the single-factor model, transform to scores.

    ``fit`` expects an (n, 3) matrix of per-clip question means; ``transform``
    returns the corresponding latent-score estimates as a 1-D array, so the
    scorer composes with scikit-learn pipelines.
    """

    def fit(self, X, y=None):
        self.cfa_ = fit_cfa(X)
        self.loadings_ = self.cfa_.loadings
        self.residual_vars_ = self.cfa_.residual_vars
        self.means_ = self.cfa_.means
        self.indicator_sds_ = self.cfa_.indicator_sds
        self.heywood_ = self.cfa_.heywood
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "cfa_"):
            raise NotFittedError("CfaScorer is not fitted")
        return bartlett_scores(self.cfa_, X)


# ---------------------------------------------------------------------------
# Human baseline
# ---------------------------------------------------------------------------


@dataclass
class HumanBaseline:
    """Per-rater predicted/target score pairs for the human baseline.

    ``preds[r]`` holds rater slot r's standardized weighted answer sums across
    clips; ``targets[r]`` holds the standardized mean of the other raters'
    sums. Metrics are computed per rater and averaged to summarize the
    performance of one randomly chosen rater.
    """

    clip_ids: list[str]
    subject_ids: list[str]
    preds: np.ndarray    # (k, n_clips)
    targets: np.ndarray  # (k, n_clips)

    @property
    def k_raters(self) -> int:
        return self.preds.shape[0]


def _standardize(values: np.ndarray, label: str) -> np.ndarray:
    sd = values.std()
    if sd == 0.0:
        raise StandardizationDegenerate(f"{label} has zero variance across clips")
    return (values - values.mean()) / sd


def human_baseline_scores(table: RatingsTable, fit: CfaFit) -> HumanBaseline:
    """Leave-one-rater-out score pairs, weighting answers by the standardized loadings.

    Every clip must carry the same rater count (canonically six); raters are
    aligned across clips by sorted rater_id within each clip.
    """
    df = table.df.sort_values(["clip_id", "rater_id"], kind="stable")
    counts = df.groupby("clip_id").size()
    k_values = counts.unique()
    if len(k_values) != 1 or int(k_values[0]) < 2:
        raise InsufficientRaters(f"need a uniform rater count >= 2 per clip, got {sorted(k_values)}")
    k = int(k_values[0])

    answers = df[list(QUESTIONS)].to_numpy(dtype=float).reshape(-1, k, 3)
    weighted = answers @ fit.std_loadings  # (n_clips, k)
    n_clips = weighted.shape[0]
    if n_clips < 2:
        raise ValidationError("need at least 2 clips for the human baseline")

    clip_meta = df.drop_duplicates("clip_id")[["clip_id", "subject_id"]]
    preds = np.empty((k, n_clips))
    targets = np.empty((k, n_clips))
    totals = weighted.sum(axis=1)
    for r in range(k):
        preds[r] = _standardize(weighted[:, r], f"rater slot {r}")
        loo_mean = (totals - weighted[:, r]) / (k - 1)
        targets[r] = _standardize(loo_mean, f"target for rater slot {r}")
    return HumanBaseline(
        clip_ids=clip_meta["clip_id"].tolist(),
        subject_ids=clip_meta["subject_id"].tolist(),
        preds=preds,
        targets=targets,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def reliability_table(table: RatingsTable, tasks=None, confidence: float = 0.95) -> pd.DataFrame:
    """Per-task and pooled ICC(1,k) for each question.

    Rows: (task, question, estimate, ci_low, ci_high) for each task in
    ``tasks`` (defaulting to the tasks present) plus a pooled "all" block.
    """
    if tasks is None:
        tasks = sorted(table.df["task"].unique())
    names = [t.value if isinstance(t, Task) else str(t) for t in tasks]
    rows = []
    for task_name in [*names, "all"]:
        selector = None if task_name == "all" else task_name
        for question in QUESTIONS:
            result = icc_1k(ratings_matrix(table, question, task=selector), confidence=confidence)
            rows.append((task_name, question, result.icc, result.ci_low, result.ci_high))
    return pd.DataFrame(rows, columns=["task", "question", "estimate", "ci_low", "ci_high"])


#: parameter names in the loading report, per question
_LOADING_PARAMS = ("loading_std", "residual_std", "loading", "residual_var", "mean")


def loading_table(fits: dict[str, CfaFit]) -> pd.DataFrame:
    """Long-format parameter estimates for each fitted scope.

    ``fits`` maps a task name (or "all") to its fit. One row per (task,
    question, parameter); standardized values carry the ``_std`` suffix and
    ``mean`` is the indicator mean used for scoring.
    """
    rows = []
    for task_name, fit in fits.items():
        for i, question in enumerate(QUESTIONS):
            values = {
                "loading_std": fit.std_loadings[i],
                "residual_std": fit.std_residual_vars[i],
                "loading": fit.loadings[i],
                "residual_var": fit.residual_vars[i],
                "mean": fit.means[i],
            }
            for parameter in _LOADING_PARAMS:
                rows.append((task_name, question, parameter, values[parameter]))
    return pd.DataFrame(rows, columns=["task", "question", "parameter", "estimate"])


def write_report_csv(frame: pd.DataFrame, path, provenance: str | None = None) -> None:
    """Write a report CSV with 6-significant-digit floats.

    ``provenance`` (config hash, seed) is embedded as a leading ``#`` comment
    so reruns with the same inputs are byte-identical.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(frame.columns))
        for row in frame.itertuples(index=False):
            writer.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])
