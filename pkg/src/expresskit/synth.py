"""Seeded synthetic data with known ground truth for end-to-end checks.

Per clip, a latent score eta ~ N(0, 1) is tied to a feature vector through a
linear model: the nine features are i.i.d. standard normal and

    eta = (X w + noise_sd * z) / sqrt(||w||^2 + noise_sd^2)

so eta is exactly standard normal and remains linear in the features (the
returned effective weights absorb the normalization). Each rater's answer to
question i is mu_i + lambda_i * eta plus noise with variance
n_raters * eps_i, which leaves the rater-averaged answers with residual
variance eps_i -- the quantity the downstream factor fit estimates. In
discretized mode answers are clipped to the 0..4 scale and rounded; the
continuous mode skips both for exact-recovery tests.

Only statistical structure is modeled; the generated features are not meant
to look like real facial kinematics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidConfig
from .features import FEATURE_NAMES
from .ingest import RatingsTable, Task, write_ratings_csv

__all__ = ["SynthConfig", "SynthData", "generate", "write_synth_csvs"]

_DEFAULT_WEIGHTS = (0.8, -0.4, 0.3, -0.5, 0.2, 0.1, 0.0, 0.6, 0.5)


@dataclass
class SynthConfig:
    n_subjects: int = 100
    clips_per_subject: int = 5
    n_raters: int = 6
    loadings: tuple[float, float, float] = (0.98, 0.97, 0.91)
    residual_vars: tuple[float, float, float] = (0.04, 0.06, 0.18)
    question_means: tuple[float, float, float] = (2.0, 2.0, 2.0)
    feature_weights: tuple[float, ...] = _DEFAULT_WEIGHTS
    feature_noise_sd: float = 0.3
    seed: int = 0
    discretize: bool = True
    tasks: tuple[Task, ...] = (Task.STARTLE, Task.PAIN, Task.DISGUST)
    #: optional per-task weight vectors overriding ``feature_weights``
    weights_by_task: dict[str, tuple[float, ...]] | None = None

    def validate(self) -> None:
        if self.n_subjects < 1 or self.clips_per_subject < 1 or self.n_raters < 1:
            raise InvalidConfig("subject, clip, and rater counts must be positive")
        if len(self.loadings) != 3 or len(self.residual_vars) != 3 or len(self.question_means) != 3:
            raise InvalidConfig("loadings, residual_vars, and question_means must have 3 entries")
        if min(self.loadings) <= 0:
            raise InvalidConfig("loadings must be positive")
        if min(self.residual_vars) < 0:
            raise InvalidConfig("residual variances must be >= 0")
        if self.feature_noise_sd < 0:
            raise InvalidConfig("feature_noise_sd must be >= 0")
        for name, w in self._task_weights().items():
            if len(w) != len(FEATURE_NAMES):
                raise InvalidConfig(f"weights for {name} must have {len(FEATURE_NAMES)} entries")
            if float(np.dot(w, w)) + self.feature_noise_sd**2 == 0.0:
                raise InvalidConfig(f"weights for {name} and noise are all zero")

    def _task_weights(self) -> dict[str, np.ndarray]:
        out = {}
        for task in self.tasks:
            name = task.value if isinstance(task, Task) else str(task)
            chosen = self.feature_weights
            if self.weights_by_task and name in self.weights_by_task:
                chosen = self.weights_by_task[name]
            out[name] = np.asarray(chosen, dtype=float)
        return out


@dataclass
class SynthData:
    ratings: RatingsTable
    features: pd.DataFrame       # clip_id, subject_id, task, the 9 features
    true_scores: pd.DataFrame    # clip_id, subject_id, task, true_score
    true_weights: dict[str, np.ndarray] = field(default_factory=dict)


def generate(cfg: SynthConfig) -> SynthData:
    """Deterministically generate ratings, features, and their ground truth."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    lam = np.asarray(cfg.loadings, dtype=float)
    eps = np.asarray(cfg.residual_vars, dtype=float)
    mu = np.asarray(cfg.question_means, dtype=float)
    rater_noise_sd = np.sqrt(cfg.n_raters * eps)

    subjects = [f"S{i:04d}" for i in range(1, cfg.n_subjects + 1)]
    raters = [f"R{j}" for j in range(1, cfg.n_raters + 1)]
    task_weights = cfg._task_weights()

    rating_frames = []
    feature_frames = []
    truth_frames = []
    true_weights: dict[str, np.ndarray] = {}
    for task_name, w in task_weights.items():
        scale = float(np.sqrt(w @ w + cfg.feature_noise_sd**2))
        true_weights[task_name] = w / scale
        n_clips = cfg.n_subjects * cfg.clips_per_subject

        X = rng.standard_normal((n_clips, len(FEATURE_NAMES)))
        z = rng.standard_normal(n_clips)
        eta = (X @ w + cfg.feature_noise_sd * z) / scale
        noise = rng.standard_normal((n_clips, cfg.n_raters, 3)) * rater_noise_sd
        answers = mu + lam * eta[:, None, None] + noise
        if cfg.discretize:
            answers = np.rint(np.clip(answers, 0.0, 4.0)).astype(np.int64)

        clip_subjects = np.repeat(subjects, cfg.clips_per_subject)
        clip_ids = [
            f"{subject}_{task_name}_{3 * j:02d}-{3 * j + 3:02d}"
            for subject in subjects
            for j in range(1, cfg.clips_per_subject + 1)
        ]
        flat = answers.reshape(n_clips * cfg.n_raters, 3)
        rating_frames.append(
            pd.DataFrame(
                {
                    "clip_id": np.repeat(clip_ids, cfg.n_raters),
                    "subject_id": np.repeat(clip_subjects, cfg.n_raters),
                    "task": task_name,
                    "rater_id": np.tile(raters, n_clips),
                    "q1": flat[:, 0],
                    "q2": flat[:, 1],
                    "q3": flat[:, 2],
                }
            )
        )
        base = pd.DataFrame({"clip_id": clip_ids, "subject_id": clip_subjects, "task": task_name})
        feature_frames.append(pd.concat([base, pd.DataFrame(X, columns=list(FEATURE_NAMES))], axis=1))
        truth_frames.append(base.assign(true_score=eta))

    ratings_df = pd.concat(rating_frames, ignore_index=True)
    if not cfg.discretize:
        # keep raw float answers; bypass the 0..4 integer validation
        ratings_df = ratings_df.sort_values(["clip_id", "rater_id"], kind="stable").reset_index(drop=True)
        ratings = RatingsTable(ratings_df)
    else:
        ratings = RatingsTable.from_frame(ratings_df)
    features = pd.concat(feature_frames, ignore_index=True)
    features = features.sort_values("clip_id", kind="stable").reset_index(drop=True)
    truth = pd.concat(truth_frames, ignore_index=True)
    truth = truth.sort_values("clip_id", kind="stable").reset_index(drop=True)
    return SynthData(ratings=ratings, features=features, true_scores=truth, true_weights=true_weights)


def write_synth_csvs(data: SynthData, out_dir) -> dict[str, Path]:
    """Write ratings/features/truth CSVs in the formats the pipeline consumes.

    The features file carries an empty ``score`` column; scores are joined in
    by the scoring stage. Identical configs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "ratings": out / "ratings.csv",
        "features": out / "features.csv",
        "true_scores": out / "true_scores.csv",
        "true_weights": out / "true_weights.csv",
    }
    write_ratings_csv(data.ratings, paths["ratings"])

    with open(paths["features"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "subject_id", "task", *FEATURE_NAMES, "score"])
        for row in data.features.itertuples(index=False):
            head = [row.clip_id, row.subject_id, row.task]
            writer.writerow(head + [f"{getattr(row, name):.10g}" for name in FEATURE_NAMES] + [""])

    with open(paths["true_scores"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "subject_id", "task", "true_score"])
        for row in data.true_scores.itertuples(index=False):
            writer.writerow([row.clip_id, row.subject_id, row.task, f"{row.true_score:.10g}"])

    with open(paths["true_weights"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["task", "feature", "weight"])
        for task_name, w in data.true_weights.items():
            for feature, value in zip(FEATURE_NAMES, w):
                writer.writerow([task_name, feature, f"{value:.10g}"])
    return paths
