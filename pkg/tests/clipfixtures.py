"""Builders for synthetic tracking sequences and CSV fixtures used in tests."""

from __future__ import annotations

import csv

import numpy as np

from expresskit.ingest import CLIP_FRAMES, Task, TrackingSequence

DEFAULT_AUS = ("AU01", "AU04", "AU12")


def build_clip(
    n_frames: int = CLIP_FRAMES,
    landmarks=None,
    gaze=None,
    head_pos=None,
    head_rot=None,
    au_occurrence=None,
    au_intensity=None,
    valid=None,
    au_names=DEFAULT_AUS,
    subject: str = "S001",
    task: Task = Task.STARTLE,
    start_frame: int = 0,
) -> TrackingSequence:
    """A TrackingSequence with explicit channels (zeros where not given)."""
    frames = np.arange(start_frame, start_frame + n_frames, dtype=np.int64)
    k = len(au_names)

    def shaped(value, shape):
        if value is None:
            return np.zeros(shape)
        arr = np.asarray(value, dtype=float)
        assert arr.shape == shape, f"expected {shape}, got {arr.shape}"
        return arr

    return TrackingSequence(
        frames=frames,
        timestamps=frames / 25.0,
        gaze=shaped(gaze, (n_frames, 2)),
        head_pos=shaped(head_pos, (n_frames, 3)),
        head_rot=shaped(head_rot, (n_frames, 3)),
        landmarks=shaped(landmarks, (n_frames, 68, 2)),
        au_intensity=shaped(au_intensity, (n_frames, k)),
        au_occurrence=(
            np.zeros((n_frames, k), dtype=np.int8)
            if au_occurrence is None
            else np.asarray(au_occurrence).astype(np.int8)
        ),
        au_names=tuple(au_names),
        valid=np.ones(n_frames, dtype=bool) if valid is None else np.asarray(valid, dtype=bool),
        subject=subject,
        task=task,
    )


def write_tracking_csv(seq: TrackingSequence, path, one_based: bool = False, success_column: bool = True) -> None:
    """Serialize a TrackingSequence in the OpenFace-style CSV layout."""
    header = ["frame", "timestamp"]
    if success_column:
        header.append("success")
    header += ["gaze_angle_x", "gaze_angle_y", "pose_Tx", "pose_Ty", "pose_Tz", "pose_Rx", "pose_Ry", "pose_Rz"]
    header += [f"x_{i}" for i in range(68)] + [f"y_{i}" for i in range(68)]
    for name in seq.au_names:
        header += [f"{name}_r", f"{name}_c"]

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(seq.n_frames):
            row = [int(seq.frames[i]) + (1 if one_based else 0), seq.timestamps[i]]
            if success_column:
                row.append(1 if seq.valid[i] else 0)
            row += list(seq.gaze[i]) + list(seq.head_pos[i]) + list(seq.head_rot[i])
            row += list(seq.landmarks[i, :, 0]) + list(seq.landmarks[i, :, 1])
            for j in range(len(seq.au_names)):
                row += [seq.au_intensity[i, j], int(seq.au_occurrence[i, j])]
            writer.writerow(row)


def ratings_lines(rows) -> str:
    """Join ratings rows (tuples) under the canonical header."""
    out = ["clip_id,subject_id,task,rater_id,q1,q2,q3"]
    out += [",".join(str(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"
