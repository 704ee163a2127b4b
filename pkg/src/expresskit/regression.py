"""Elastic-net linear prediction with subject-disjoint splits.

The solver minimizes, over z-scored features X and centered targets y,

    (1/2n) ||y - X b||^2 + alpha * (l1_ratio * ||b||_1
                                    + (1 - l1_ratio)/2 * ||b||^2)

by cyclic coordinate descent with the soft-threshold update

    b_j <- S(rho_j, alpha * l1_ratio) / (m_j + alpha * (1 - l1_ratio))

where rho_j = x_j'(r + x_j b_j)/n, m_j = x_j'x_j / n and
S(z, t) = sign(z) * max(|z| - t, 0). l1_ratio 0 is ridge, 1 is lasso. The
penalized objective is non-increasing across sweeps and its per-sweep values
are recorded on the returned fit.

Hyperparameters follow a fixed grid (five penalty strengths, eleven L1
fractions) selected by validation RMSE with ties broken toward the stronger,
sparser penalty. Splits are made per subject so no subject's clips appear in
more than one of train/validation/test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from ._validate import as_matrix, as_vector
from .errors import DimensionMismatch, TooFewSubjects, ValidationError

__all__ = [
    "Split",
    "SplitAssignment",
    "HyperGrid",
    "ElasticNetFit",
    "GridSearchResult",
    "ElasticNetRegressor",
    "make_splits",
    "fit_elastic_net",
    "predict",
    "grid_search",
    "save_model",
    "load_model",
]


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class SplitAssignment:
    """Subject -> split mapping, deterministic for a given seed."""

    assignment: dict[str, Split]
    seed: int
    proportions: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def subjects(self, split: Split) -> list[str]:
        return [s for s, sp in self.assignment.items() if sp is split]


def make_splits(subjects, seed: int, proportions: tuple[float, float, float] = (0.6, 0.2, 0.2)) -> SplitAssignment:
    """Randomly partition subjects into train/val/test.

    Sizes are the rounded proportions (within one subject of exact), and the
    shuffle is a seeded permutation of the sorted subject list so the result
    is independent of input order.
    """
    unique = sorted(set(subjects))
    if len(unique) < 5:
        raise TooFewSubjects(f"need at least 5 subjects, got {len(unique)}")
    if abs(sum(proportions) - 1.0) > 1e-9 or min(proportions) <= 0:
        raise ValidationError(f"proportions must be positive and sum to 1, got {proportions}")
    n = len(unique)
    n_train = min(math.floor(n * proportions[0] + 0.5), n - 2)
    n_val = math.floor(n * proportions[1] + 0.5)
    n_val = min(max(n_val, 1), n - n_train - 1)  # leave room for >= 1 val and test subject
    order = np.random.default_rng(seed).permutation(unique)
    assignment: dict[str, Split] = {}
    for i, subject in enumerate(order):
        if i < n_train:
            assignment[str(subject)] = Split.TRAIN
        elif i < n_train + n_val:
            assignment[str(subject)] = Split.VAL
        else:
            assignment[str(subject)] = Split.TEST
    return SplitAssignment(assignment=assignment, seed=seed, proportions=proportions)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperGrid:
    """The fixed hyperparameter search grid (55 cells)."""

    alphas: tuple[float, ...] = (0.01, 0.05, 0.1, 0.5, 1.0)
    l1_ratios: tuple[float, ...] = tuple(i / 10 for i in range(11))


@dataclass
class ElasticNetFit:
    """Fitted coefficients in standardized feature space plus the z-scoring stats."""

    coef: np.ndarray           # (p,) standardized space
    intercept: float
    feature_means: np.ndarray  # (p,)
    feature_sds: np.ndarray    # (p,) > 0 (zero-variance features dropped, coef 0)
    alpha: float
    l1_ratio: float
    n_iters: int
    converged: bool = True
    objective_path: list[float] = field(default_factory=list)


def _soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def fit_elastic_net(
    X,
    y,
    alpha: float,
    l1_ratio: float,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> ElasticNetFit:
    """Cyclic coordinate descent on z-scored features and a centered target.

    Standardization statistics come from the given data (population SD);
    zero-variance columns are dropped with coefficient 0 and a stored SD of 1.
    Convergence means the largest coefficient change in a sweep fell below
    ``tol``; if ``max_iter`` sweeps pass first the best-so-far fit is returned
    with ``converged=False`` and a RuntimeWarning.
    """
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    n, p = X.shape
    if n != len(y):
        raise ValidationError(f"X has {n} rows but y has {len(y)}")
    if n < 2:
        raise ValidationError("need at least 2 rows to fit")
    if alpha < 0 or not 0.0 <= l1_ratio <= 1.0:
        raise ValidationError(f"bad penalty (alpha={alpha}, l1_ratio={l1_ratio})")

    means = X.mean(axis=0)
    sds = X.std(axis=0)
    active = sds > 0.0
    safe_sds = np.where(active, sds, 1.0)
    Xs = (X - means) / safe_sds
    Xs[:, ~active] = 0.0
    intercept = float(y.mean())
    yc = y - intercept

    beta = np.zeros(p)
    resid = yc.copy()
    m = (Xs * Xs).sum(axis=0) / n
    l1_pen = alpha * l1_ratio
    l2_pen = alpha * (1.0 - l1_ratio)
    active_idx = np.where(active)[0]

    def objective() -> float:
        penalty = l1_pen * np.abs(beta).sum() + 0.5 * l2_pen * float(beta @ beta)
        return 0.5 * float(resid @ resid) / n + penalty

    path = [objective()]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in active_idx:
            old = beta[j]
            if old != 0.0:
                resid += Xs[:, j] * old
            rho = float(Xs[:, j] @ resid) / n
            new = _soft_threshold(rho, l1_pen) / (m[j] + l2_pen)
            beta[j] = new
            if new != 0.0:
                resid -= Xs[:, j] * new
            max_delta = max(max_delta, abs(new - old))
        path.append(objective())
        if max_delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"coordinate descent did not converge in {max_iter} sweeps (last change {max_delta:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )

    return ElasticNetFit(
        coef=beta,
        intercept=intercept,
        feature_means=means,
        feature_sds=safe_sds,
        alpha=float(alpha),
        l1_ratio=float(l1_ratio),
        n_iters=sweeps,
        converged=converged,
        objective_path=path,
    )


def predict(fit: ElasticNetFit, X) -> np.ndarray:
    """Predictions ((X - means)/sds) @ coef + intercept."""
    X = as_matrix(X, "X")
    if X.shape[1] != len(fit.coef):
        raise DimensionMismatch(f"X has {X.shape[1]} columns, model expects {len(fit.coef)}")
    return ((X - fit.feature_means) / fit.feature_sds) @ fit.coef + fit.intercept


@dataclass
class GridSearchResult:
    alpha: float
    l1_ratio: float
    fit: ElasticNetFit
    val_rmse: float
    table: list[tuple[float, float, float]]  # (alpha, l1_ratio, val_rmse)


def grid_search(
    X_train,
    y_train,
    X_val,
    y_val,
    grid: HyperGrid = HyperGrid(),
    tol: float = 1e-6,
    max_iter: int = 10_000,
    subjects_train=None,
    subjects_val=None,
    refit_with_validation: bool = False,
) -> GridSearchResult:
    """Pick the grid cell with minimal validation RMSE.

    Exact ties go to the larger alpha, then the larger l1_ratio (stronger,
    sparser penalty). When subject lists are supplied, train/validation
    disjointness is enforced. The winning cell is refit on the training data
    alone unless ``refit_with_validation`` is set.
    """
    if subjects_train is not None and subjects_val is not None:
        overlap = set(subjects_train) & set(subjects_val)
        if overlap:
            raise ValidationError(f"train and validation share subjects: {sorted(overlap)[:5]}")
    X_val = as_matrix(X_val, "X_val")
    y_val = as_vector(y_val, "y_val")

    best: tuple[float, float, ElasticNetFit] | None = None
    best_rmse = np.inf
    table = []
    for alpha in sorted(grid.alphas):
        for l1_ratio in sorted(grid.l1_ratios):
            fit = fit_elastic_net(X_train, y_train, alpha, l1_ratio, tol=tol, max_iter=max_iter)
            rmse = float(np.sqrt(np.mean((predict(fit, X_val) - y_val) ** 2)))
            table.append((alpha, l1_ratio, rmse))
            if rmse <= best_rmse:  # ascending scan: later equal cells win the tie
                best_rmse = rmse
                best = (alpha, l1_ratio, fit)
    assert best is not None
    alpha, l1_ratio, fit = best
    if refit_with_validation:
        X_all = np.vstack([as_matrix(X_train, "X_train"), X_val])
        y_all = np.concatenate([as_vector(y_train, "y_train"), y_val])
        fit = fit_elastic_net(X_all, y_all, alpha, l1_ratio, tol=tol, max_iter=max_iter)
    return GridSearchResult(alpha=alpha, l1_ratio=l1_ratio, fit=fit, val_rmse=best_rmse, table=table)


class ElasticNetRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn style wrapper around :func:`fit_elastic_net`."""

    def __init__(self, alpha: float = 0.05, l1_ratio: float = 0.5, tol: float = 1e-6, max_iter: int = 10_000):
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self.fit_ = fit_elastic_net(X, y, self.alpha, self.l1_ratio, tol=self.tol, max_iter=self.max_iter)
        self.coef_ = self.fit_.coef
        self.intercept_ = self.fit_.intercept
        self.n_iter_ = self.fit_.n_iters
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "fit_"):
            raise NotFittedError("ElasticNetRegressor is not fitted")
        return predict(self.fit_, X)


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------

MODEL_FORMAT = "expresskit-model/1"


def save_model(fit: ElasticNetFit, path, feature_names, seed: int | None = None) -> None:
    """Plain-text key/value model file (versioned, round-trip exact)."""
    names = list(feature_names)
    if len(names) != len(fit.coef):
        raise DimensionMismatch(f"{len(names)} feature names for {len(fit.coef)} coefficients")
    lines = [
        f"format = {MODEL_FORMAT}",
        f"alpha = {fit.alpha!r}",
        f"l1_ratio = {fit.l1_ratio!r}",
        f"seed = {'' if seed is None else seed}",
        f"intercept = {fit.intercept!r}",
        f"n_iters = {fit.n_iters}",
        f"converged = {str(fit.converged).lower()}",
    ]
    for prefix, values in (("coef", fit.coef), ("mean", fit.feature_means), ("sd", fit.feature_sds)):
        lines.extend(f"{prefix}.{name} = {float(v)!r}" for name, v in zip(names, values))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> tuple[ElasticNetFit, list[str], int | None]:
    """Read a model file back into (fit, feature_names, seed)."""
    pairs: dict[str, str] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValidationError(f"{path}: bad model line {line!r}")
            key = key.strip()
            pairs[key] = value.strip()
            if key.startswith("coef."):
                order.append(key[len("coef."):])
    if pairs.get("format") != MODEL_FORMAT:
        raise ValidationError(f"{path}: unsupported model format {pairs.get('format')!r}")
    if not order:
        raise ValidationError(f"{path}: no coefficients")
    seed = int(pairs["seed"]) if pairs.get("seed") else None
    fit = ElasticNetFit(
        coef=np.array([float(pairs[f"coef.{n}"]) for n in order]),
        intercept=float(pairs["intercept"]),
        feature_means=np.array([float(pairs[f"mean.{n}"]) for n in order]),
        feature_sds=np.array([float(pairs[f"sd.{n}"]) for n in order]),
        alpha=float(pairs["alpha"]),
        l1_ratio=float(pairs["l1_ratio"]),
        n_iters=int(pairs["n_iters"]),
        converged=pairs.get("converged", "true") == "true",
    )
    return fit, order, seed
