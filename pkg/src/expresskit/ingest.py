"""Parsing and segmentation of annotation and facial-tracking CSV files.

Two input formats are consumed:

* a ratings CSV with header ``clip_id,subject_id,task,rater_id,q1,q2,q3``
  holding one rater's integer answers (0..4) to the three expressiveness
  questions for one clip, and
* per-recording tracking CSVs with OpenFace-style column names: ``frame``,
  ``timestamp``, ``gaze_angle_x``/``gaze_angle_y``, ``pose_Tx..pose_Rz``,
  68 landmark columns ``x_0..x_67``/``y_0..y_67``, and action-unit channels
  ``AUxx_r`` (intensity) / ``AUxx_c`` (occurrence).

Recordings are cut into fixed 3-second clips (75 frames at 25 Hz) using
per-task window tables. A window whose start is negative is anchored to the
end of the recording, e.g. (-12, -9) covers the 3 seconds starting 12 seconds
before the recording ends. Frames missing inside a window are padded with
zeroed channels and ``valid=False``; feature extraction treats transitions
into or out of such frames as contributing nothing.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DuplicateRating,
    MalformedRow,
    OutOfRangeAnswer,
    RecordingTooShort,
    ValidationError,
)

FRAME_RATE = 25
CLIP_SECONDS = 3
CLIP_FRAMES = FRAME_RATE * CLIP_SECONDS

RATINGS_HEADER = ["clip_id", "subject_id", "task", "rater_id", "q1", "q2", "q3"]
QUESTIONS = ("q1", "q2", "q3")


class Task(str, Enum):
    """Emotion-elicitation task a recording belongs to.

    Startle, pain, and disgust carry ratings and are scored; sadness and fear
    are supported for segmentation only.
    """

    STARTLE = "startle"
    PAIN = "pain"
    DISGUST = "disgust"
    SADNESS = "sadness"
    FEAR = "fear"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


#: Tasks that carry ratings and participate in scoring and prediction.
CORE_TASKS = (Task.STARTLE, Task.PAIN, Task.DISGUST)

#: Clip windows per task, in seconds. A negative start anchors the window to
#: the recording end (end = start + 3 is then <= 0). Window [a, b) maps to the
#: half-open frame range [25a, 25b): the last frame of a window ending at
#: second 3 is the frame before the first frame of a window starting there.
SEGMENTATION_WINDOWS: dict[Task, tuple[tuple[int, int], ...]] = {
    Task.SADNESS: ((0, 3), (3, 6), (30, 33), (33, 36), (-12, -9), (-9, -6), (-6, -3), (-3, 0)),
    Task.STARTLE: ((3, 6), (6, 9), (9, 12), (12, 15), (15, 18)),
    Task.FEAR: ((0, 3), (3, 6), (6, 9), (9, 12), (12, 15), (15, 18), (18, 21)),
    Task.PAIN: ((0, 3), (3, 6), (6, 9), (-12, -9), (-9, -6), (-6, -3), (-3, 0)),
    Task.DISGUST: ((3, 6), (6, 9), (9, 12), (12, 15)),
}


def _window_token(window: tuple[int, int]) -> str:
    start, end = window
    if start < 0:
        # from-end windows keep the sign on both parts, "-03--00" style
        return f"-{abs(start):02d}--{abs(end):02d}"
    return f"{start:02d}-{end:02d}"


@dataclass(frozen=True)
class ClipId:
    """Identity of one 3-second clip: subject, task, and window in seconds."""

    subject: str
    task: Task
    window: tuple[int, int]

    def __str__(self) -> str:
        return f"{self.subject}_{self.task.value}_{_window_token(self.window)}"


# ---------------------------------------------------------------------------
# Ratings
# ---------------------------------------------------------------------------


@dataclass
class RatingsTable:
    """Validated per-(clip, rater) answers to the three questions.

    Wraps a DataFrame with columns ``clip_id, subject_id, task, rater_id,
    q1, q2, q3`` kept in canonical (clip_id, rater_id) order.
    """

    df: pd.DataFrame

    def __len__(self) -> int:
        return len(self.df)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "RatingsTable":
        missing = [c for c in RATINGS_HEADER if c not in df.columns]
        if missing:
            raise MalformedRow(f"ratings frame missing columns: {missing}")
        out = df.loc[:, RATINGS_HEADER].copy()
        for q in QUESTIONS:
            vals = out[q].to_numpy()
            if not np.isin(vals, (0, 1, 2, 3, 4)).all():
                raise OutOfRangeAnswer(f"{q} contains values outside 0..4")
            out[q] = out[q].astype(np.int64)
        if out.duplicated(["clip_id", "rater_id"]).any():
            raise DuplicateRating("duplicate (clip_id, rater_id) rows")
        out = out.sort_values(["clip_id", "rater_id"], kind="stable").reset_index(drop=True)
        return cls(out)

    def clip_ids(self) -> list[str]:
        return sorted(self.df["clip_id"].unique())

    def for_tasks(self, tasks) -> "RatingsTable":
        names = {t.value if isinstance(t, Task) else str(t) for t in tasks}
        return RatingsTable(self.df[self.df["task"].isin(names)].reset_index(drop=True))


def parse_ratings(path) -> RatingsTable:
    """Read and validate a ratings CSV.

    Raises MalformedRow for a bad header, wrong field count, unparsable
    answers, or a clip that changes subject/task between rows; OutOfRangeAnswer
    for answers outside 0..4; DuplicateRating when a (clip, rater) pair
    repeats.
    """
    rows = []
    seen_pairs: set[tuple[str, str]] = set()
    clip_key: dict[str, tuple[str, str]] = {}
    known_tasks = {t.value for t in Task}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RATINGS_HEADER:
            raise MalformedRow(f"bad ratings header {header!r}, expected {RATINGS_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RATINGS_HEADER):
                raise MalformedRow(f"line {lineno}: expected {len(RATINGS_HEADER)} fields, got {len(row)}")
            clip, subject, task, rater = row[0], row[1], row[2], row[3]
            if not clip or not subject or not rater:
                raise MalformedRow(f"line {lineno}: empty identifier field")
            if task not in known_tasks:
                raise MalformedRow(f"line {lineno}: unknown task {task!r}")
            answers = []
            for q, field in zip(QUESTIONS, row[4:]):
                try:
                    value = int(field)
                except ValueError:
                    raise MalformedRow(f"line {lineno}: {q}={field!r} is not an integer") from None
                if not 0 <= value <= 4:
                    raise OutOfRangeAnswer(f"line {lineno}: {q}={value} outside 0..4")
                answers.append(value)
            if (clip, rater) in seen_pairs:
                raise DuplicateRating(f"line {lineno}: second rating by {rater!r} for clip {clip!r}")
            seen_pairs.add((clip, rater))
            if clip in clip_key and clip_key[clip] != (subject, task):
                raise MalformedRow(f"line {lineno}: clip {clip!r} changes subject or task")
            clip_key[clip] = (subject, task)
            rows.append((clip, subject, task, rater, *answers))
    if not rows:
        raise MalformedRow(f"{path}: no rating rows")
    df = pd.DataFrame(rows, columns=RATINGS_HEADER)
    return RatingsTable.from_frame(df)


def write_ratings_csv(table: RatingsTable, path) -> None:
    """Serialize in canonical (clip_id, rater_id) order; round-trips byte-identically."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATINGS_HEADER)
        for row in table.df.itertuples(index=False):
            writer.writerow([row.clip_id, row.subject_id, row.task, row.rater_id, row.q1, row.q2, row.q3])


# ---------------------------------------------------------------------------
# Tracking sequences
# ---------------------------------------------------------------------------

_BASE_COLUMNS = [
    "frame",
    "timestamp",
    "gaze_angle_x",
    "gaze_angle_y",
    "pose_Tx",
    "pose_Ty",
    "pose_Tz",
    "pose_Rx",
    "pose_Ry",
    "pose_Rz",
]
_LANDMARK_X = [f"x_{i}" for i in range(68)]
_LANDMARK_Y = [f"y_{i}" for i in range(68)]


@dataclass
class TrackingSequence:
    """Per-frame tracking channels for one recording or one clip slice.

    Frame indices are 0-based and strictly increasing. ``valid`` is False for
    frames inserted by padding (their channels are zero).
    """

    frames: np.ndarray          # (n,) int64
    timestamps: np.ndarray      # (n,) float
    gaze: np.ndarray            # (n, 2) radians
    head_pos: np.ndarray        # (n, 3) mm
    head_rot: np.ndarray        # (n, 3) radians: pitch, yaw, roll
    landmarks: np.ndarray       # (n, 68, 2) pixels
    au_intensity: np.ndarray    # (n, k) 0..5, NaN where no intensity channel
    au_occurrence: np.ndarray   # (n, k) int8 in {0, 1}
    au_names: tuple[str, ...]
    valid: np.ndarray           # (n,) bool
    subject: str | None = None
    task: Task | None = None

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def take(self, indices) -> "TrackingSequence":
        idx = np.asarray(indices)
        return replace(
            self,
            frames=self.frames[idx],
            timestamps=self.timestamps[idx],
            gaze=self.gaze[idx],
            head_pos=self.head_pos[idx],
            head_rot=self.head_rot[idx],
            landmarks=self.landmarks[idx],
            au_intensity=self.au_intensity[idx],
            au_occurrence=self.au_occurrence[idx],
            valid=self.valid[idx],
        )


def _infer_subject_task(path) -> tuple[str | None, Task | None]:
    # "<subject>_<task>.csv" naming; anything else leaves both unset
    stem = Path(path).stem
    if "_" in stem:
        subject, _, task_str = stem.rpartition("_")
        try:
            return subject, Task(task_str.lower())
        except ValueError:
            pass
    return stem or None, None


def parse_tracking(path, subject: str | None = None, task: Task | None = None) -> TrackingSequence:
    """Read an OpenFace-style tracking CSV into a :class:`TrackingSequence`.

    Column names are stripped of surrounding whitespace. The set of AU
    channels is taken from the ``AUxx_c`` occurrence columns; an occurrence
    channel without a matching intensity column gets NaN intensities. A
    ``success`` column, when present, marks frames invalid where it is 0.
    Frame numbers starting at 1 (the OpenFace convention) are shifted to the
    0-based indexing used internally. Subject and task default to a
    ``<subject>_<task>.csv`` file-name pattern when not given.
    """
    df = pd.read_csv(path)
    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in _BASE_COLUMNS + _LANDMARK_X + _LANDMARK_Y if c not in df.columns]
    if missing:
        raise MalformedRow(f"{path}: missing tracking columns {missing[:4]}{'...' if len(missing) > 4 else ''}")
    if len(df) == 0:
        raise MalformedRow(f"{path}: no frames")

    frames_raw = df["frame"].to_numpy()
    if not np.isfinite(frames_raw).all() or not (frames_raw == np.round(frames_raw)).all():
        raise MalformedRow(f"{path}: frame column must be integral")
    frames = frames_raw.astype(np.int64)
    if frames.min() == 1:
        frames = frames - 1
    elif frames.min() < 0:
        raise MalformedRow(f"{path}: negative frame index")
    if len(frames) > 1 and not (np.diff(frames) > 0).all():
        raise MalformedRow(f"{path}: frame indices must be strictly increasing")

    occ_cols = sorted(c for c in df.columns if re.fullmatch(r"AU\d+_c", c))
    au_names = tuple(c[:-2] for c in occ_cols)
    n = len(df)
    occurrence = np.zeros((n, len(au_names)), dtype=np.int8)
    intensity = np.full((n, len(au_names)), np.nan)
    for j, name in enumerate(au_names):
        occ = df[f"{name}_c"].to_numpy(dtype=float)
        if not np.isin(occ, (0.0, 1.0)).all():
            raise ValidationError(f"{path}: {name}_c must be binary")
        occurrence[:, j] = occ.astype(np.int8)
        r_col = f"{name}_r"
        if r_col in df.columns:
            intensity[:, j] = df[r_col].to_numpy(dtype=float)

    valid = np.ones(n, dtype=bool)
    if "success" in df.columns:
        valid = df["success"].to_numpy(dtype=float) != 0.0

    if subject is None and task is None:
        subject, task = _infer_subject_task(path)

    return TrackingSequence(
        frames=frames,
        timestamps=df["timestamp"].to_numpy(dtype=float),
        gaze=df[["gaze_angle_x", "gaze_angle_y"]].to_numpy(dtype=float),
        head_pos=df[["pose_Tx", "pose_Ty", "pose_Tz"]].to_numpy(dtype=float),
        head_rot=df[["pose_Rx", "pose_Ry", "pose_Rz"]].to_numpy(dtype=float),
        landmarks=np.stack(
            [df[_LANDMARK_X].to_numpy(dtype=float), df[_LANDMARK_Y].to_numpy(dtype=float)], axis=-1
        ),
        au_intensity=intensity,
        au_occurrence=occurrence,
        au_names=au_names,
        valid=valid,
        subject=subject,
        task=task,
    )


def pad_missing_frames(sliced: TrackingSequence, start_frame: int, n_frames: int = CLIP_FRAMES) -> TrackingSequence:
    """Expand a clip slice to exactly ``n_frames`` slots.

    Frames absent from ``sliced`` (by frame index) are inserted with zeroed
    channels and ``valid=False``. A complete slice is returned unchanged.
    """
    if sliced.n_frames > n_frames:
        raise ValidationError(f"slice has {sliced.n_frames} frames, more than the {n_frames} slots")
    offsets = sliced.frames - start_frame
    if len(offsets) and (offsets.min() < 0 or offsets.max() >= n_frames):
        raise ValidationError("slice contains frames outside the clip window")
    if len(np.unique(offsets)) != len(offsets):
        raise ValidationError("slice contains duplicate frame indices")
    if sliced.n_frames == n_frames:
        return sliced

    k = len(sliced.au_names)
    out = TrackingSequence(
        frames=np.arange(start_frame, start_frame + n_frames, dtype=np.int64),
        timestamps=np.arange(start_frame, start_frame + n_frames, dtype=float) / FRAME_RATE,
        gaze=np.zeros((n_frames, 2)),
        head_pos=np.zeros((n_frames, 3)),
        head_rot=np.zeros((n_frames, 3)),
        landmarks=np.zeros((n_frames, 68, 2)),
        au_intensity=np.zeros((n_frames, k)),
        au_occurrence=np.zeros((n_frames, k), dtype=np.int8),
        au_names=sliced.au_names,
        valid=np.zeros(n_frames, dtype=bool),
        subject=sliced.subject,
        task=sliced.task,
    )
    out.timestamps[offsets] = sliced.timestamps
    out.gaze[offsets] = sliced.gaze
    out.head_pos[offsets] = sliced.head_pos
    out.head_rot[offsets] = sliced.head_rot
    out.landmarks[offsets] = sliced.landmarks
    out.au_intensity[offsets] = sliced.au_intensity
    out.au_occurrence[offsets] = sliced.au_occurrence
    out.valid[offsets] = sliced.valid
    return out


def resolve_windows(task: Task, recording_frames: int) -> list[tuple[tuple[int, int], int]]:
    """Map a task's windows to start frames within a recording of given length.

    Raises RecordingTooShort when any window falls outside the recording or
    two windows would share frames.
    """
    resolved = []
    for window in SEGMENTATION_WINDOWS[task]:
        start_s, _ = window
        if start_s < 0:
            f0 = recording_frames + FRAME_RATE * start_s
        else:
            f0 = FRAME_RATE * start_s
        if f0 < 0 or f0 + CLIP_FRAMES > recording_frames:
            raise RecordingTooShort(
                f"{task.value}: window {window} needs frames [{f0}, {f0 + CLIP_FRAMES}) "
                f"but recording has {recording_frames}"
            )
        resolved.append((window, f0))
    by_start = sorted(resolved, key=lambda item: item[1])
    for (w_a, f_a), (w_b, f_b) in zip(by_start, by_start[1:]):
        if f_a + CLIP_FRAMES > f_b:
            raise RecordingTooShort(
                f"{task.value}: windows {w_a} and {w_b} overlap in a recording of {recording_frames} frames"
            )
    return resolved


def segment_clips(seq: TrackingSequence, task: Task | None = None) -> list[tuple[ClipId, TrackingSequence]]:
    """Cut a recording into the task's canonical 3-second clips.

    Recording length is taken from the maximum frame index (not timestamps).
    Each returned slice has exactly 75 frame slots after padding. Clips are
    returned in the order of the task's window table.
    """
    if task is None:
        task = seq.task
    if task is None:
        raise ValidationError("segment_clips needs a task (none given and none on the sequence)")
    task = Task(task)
    if seq.n_frames == 0:
        raise RecordingTooShort("empty recording")
    recording_frames = int(seq.frames.max()) + 1
    subject = seq.subject or "unknown"

    clips = []
    for window, f0 in resolve_windows(task, recording_frames):
        mask = (seq.frames >= f0) & (seq.frames < f0 + CLIP_FRAMES)
        padded = pad_missing_frames(seq.take(np.where(mask)[0]), f0, CLIP_FRAMES)
        clips.append((ClipId(subject=subject, task=task, window=window), padded))
    return clips
