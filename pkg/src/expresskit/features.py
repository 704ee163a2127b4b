"""Clip-level kinematic and action-unit features.

A 75-frame clip slice is reduced to nine numbers:

* ``points_displacement`` / ``points_velocity``: mean per-step landmark
  distance travelled, and the mean first difference of that series;
* ``gaze_delta``: mean per-step Euclidean change of the two gaze angles;
* ``head_displacement``: mean per-step Euclidean change of head translation
  (the depth component doubles as a scale proxy);
* ``pitch_delta`` / ``yaw_delta`` / ``roll_delta``: mean per-step absolute
  rotation change;
* ``au_count`` / ``au_intensity``: number of distinct action units occurring
  anywhere in the clip, and the mean intensity over occurring (frame, AU)
  cells.

Motion features are computed on the 5 Hz stream (every fifth frame) to damp
tracking jitter; AU aggregates use all 75 frames. Steps that touch a padded
(invalid) frame are dropped from both numerator and denominator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import fsum

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import TooFewValidFrames, ValidationError
from .ingest import CLIP_FRAMES, TrackingSequence

__all__ = [
    "FEATURE_NAMES",
    "ClipFeatures",
    "ClipFeatureExtractor",
    "downsample",
    "point_kinematics",
    "pose_gaze_deltas",
    "au_aggregates",
    "clip_features",
    "write_features_csv",
    "read_features_csv",
]

DOWNSAMPLE_STEP = 5

FEATURE_NAMES = (
    "points_displacement",
    "points_velocity",
    "gaze_delta",
    "head_displacement",
    "pitch_delta",
    "yaw_delta",
    "roll_delta",
    "au_count",
    "au_intensity",
)


@dataclass(frozen=True)
class ClipFeatures:
    """The nine per-clip features, in the canonical order of FEATURE_NAMES."""

    points_displacement: float
    points_velocity: float
    gaze_delta: float
    head_displacement: float
    pitch_delta: float
    yaw_delta: float
    roll_delta: float
    au_count: int
    au_intensity: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)


def downsample(clip: TrackingSequence) -> TrackingSequence:
    """Keep frames 0, 5, ..., 70 of a 75-slot clip (25 Hz -> 5 Hz)."""
    if clip.n_frames != CLIP_FRAMES:
        raise ValidationError(f"expected a {CLIP_FRAMES}-frame clip, got {clip.n_frames}")
    return clip.take(np.arange(0, CLIP_FRAMES, DOWNSAMPLE_STEP))


def _valid_steps(valid: np.ndarray) -> np.ndarray:
    return valid[1:] & valid[:-1]


def _step_mean(values: np.ndarray) -> float:
    # exactly-rounded sum so the mean is independent of step order
    return fsum(values) / len(values)


def point_kinematics(clip5hz: TrackingSequence) -> tuple[float, float]:
    """(points_displacement, points_velocity) from the downsampled stream.

    Per step t, d(t) is the mean over the 68 landmarks of the Euclidean
    distance between frame t and t-1; the displacement feature averages d(t)
    over steps with both endpoints valid, and the velocity feature averages
    d(t) - d(t-1) over consecutive valid step pairs.
    """
    valid = clip5hz.valid
    if valid.sum() < 3:
        raise TooFewValidFrames(f"only {int(valid.sum())} valid frames after downsampling")
    steps = _valid_steps(valid)
    if not steps.any():
        raise TooFewValidFrames("no adjacent pair of valid frames")
    diffs = np.linalg.norm(np.diff(clip5hz.landmarks, axis=0), axis=2)  # (n-1, 68)
    d = diffs.mean(axis=1)
    displacement = _step_mean(d[steps])

    pair = steps[1:] & steps[:-1]
    if not pair.any():
        raise TooFewValidFrames("no consecutive valid steps for velocity")
    v = np.diff(d)
    velocity = _step_mean(v[pair])
    return displacement, velocity


def pose_gaze_deltas(clip5hz: TrackingSequence) -> tuple[float, float, float, float, float]:
    """(gaze_delta, head_displacement, pitch_delta, yaw_delta, roll_delta)."""
    valid = clip5hz.valid
    if valid.sum() < 3:
        raise TooFewValidFrames(f"only {int(valid.sum())} valid frames after downsampling")
    steps = _valid_steps(valid)
    if not steps.any():
        raise TooFewValidFrames("no adjacent pair of valid frames")

    gaze_delta = _step_mean(np.linalg.norm(np.diff(clip5hz.gaze, axis=0), axis=1)[steps])
    head_displacement = _step_mean(np.linalg.norm(np.diff(clip5hz.head_pos, axis=0), axis=1)[steps])
    rot = np.abs(np.diff(clip5hz.head_rot, axis=0))[steps]
    pitch, yaw, roll = (_step_mean(rot[:, i]) for i in range(3))
    return gaze_delta, head_displacement, pitch, yaw, roll


def au_aggregates(clip: TrackingSequence) -> tuple[int, float]:
    """(au_count, au_intensity) over all 75 frames.

    ``au_count`` is the number of AU channels whose occurrence flag is set in
    at least one valid frame. ``au_intensity`` is the mean intensity over all
    valid (frame, AU) cells with occurrence = 1 (cells without an intensity
    channel are skipped); it is 0 when nothing occurs.
    """
    occ = clip.au_occurrence[clip.valid] == 1
    inten = clip.au_intensity[clip.valid]
    count = int(occ.any(axis=0).sum())
    cells = occ & np.isfinite(inten)
    intensity = float(inten[cells].mean()) if cells.any() else 0.0
    return count, intensity


def clip_features(clip: TrackingSequence) -> ClipFeatures:
    """All nine features for a padded 75-frame clip slice."""
    clip5hz = downsample(clip)
    displacement, velocity = point_kinematics(clip5hz)
    gaze, head, pitch, yaw, roll = pose_gaze_deltas(clip5hz)
    count, intensity = au_aggregates(clip)
    return ClipFeatures(
        points_displacement=displacement,
        points_velocity=velocity,
        gaze_delta=gaze,
        head_displacement=head,
        pitch_delta=pitch,
        yaw_delta=yaw,
        roll_delta=roll,
        au_count=count,
        au_intensity=intensity,
    )


class ClipFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from clip slices to the (n, 9) feature matrix."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        return np.vstack([clip_features(clip).as_array() for clip in X])


# ---------------------------------------------------------------------------
# Feature matrix CSV
# ---------------------------------------------------------------------------

FEATURES_HEADER = ["clip_id", "subject_id", "task", *FEATURE_NAMES, "score"]


def write_features_csv(rows, path) -> None:
    """Write the feature matrix CSV.

    ``rows`` is an iterable of (clip: ClipId, features: ClipFeatures,
    score: float | None); a missing score is serialized as an empty field so
    a later pipeline stage can join labels in.
    """
    items = sorted(rows, key=lambda item: str(item[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURES_HEADER)
        for clip, feats, score in items:
            values = [f"{v:.10g}" for v in feats.as_array()]
            score_field = "" if score is None or (isinstance(score, float) and np.isnan(score)) else f"{score:.10g}"
            writer.writerow([str(clip), clip.subject, clip.task.value, *values, score_field])


def read_features_csv(path) -> pd.DataFrame:
    """Read a feature matrix CSV back into a DataFrame (score may be NaN)."""
    df = pd.read_csv(path, comment="#")
    missing = [c for c in FEATURES_HEADER if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}: missing feature columns {missing}")
    return df
