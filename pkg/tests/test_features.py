import numpy as np
import pytest

from clipfixtures import build_clip
from expresskit.errors import TooFewValidFrames, ValidationError
from expresskit.features import (
    FEATURE_NAMES,
    ClipFeatureExtractor,
    au_aggregates,
    clip_features,
    downsample,
    point_kinematics,
    pose_gaze_deltas,
    read_features_csv,
    write_features_csv,
)
from expresskit.ingest import CLIP_FRAMES, ClipId, Task


def ramp_landmarks(scale=1.0):
    """All 68 landmarks at x = scale*frame, y = 0."""
    lm = np.zeros((CLIP_FRAMES, 68, 2))
    lm[:, :, 0] = scale * np.arange(CLIP_FRAMES)[:, None]
    return lm


# ---------------------------------------------------------------------------
# downsample
# ---------------------------------------------------------------------------


def test_downsample_keeps_every_fifth_frame():
    clip = build_clip()
    ds = downsample(clip)
    np.testing.assert_array_equal(ds.frames, np.arange(0, 75, 5))
    assert ds.n_frames == 15


def test_downsample_constant_signal():
    clip = build_clip(landmarks=np.full((CLIP_FRAMES, 68, 2), 3.5))
    ds = downsample(clip)
    assert (ds.landmarks == 3.5).all()


def test_downsample_ramp_values():
    clip = build_clip(landmarks=ramp_landmarks())
    ds = downsample(clip)
    np.testing.assert_array_equal(ds.landmarks[:, 0, 0], np.arange(0, 75, 5, dtype=float))


def test_downsample_rejects_wrong_length():
    with pytest.raises(ValidationError):
        downsample(build_clip(n_frames=60))


# ---------------------------------------------------------------------------
# point kinematics
# ---------------------------------------------------------------------------


def brute_force_kinematics(landmarks15, valid15):
    """Displacement/velocity via explicit loops over landmarks and steps."""
    d = []
    d_ok = []
    for t in range(1, 15):
        dists = [
            np.sqrt(
                (landmarks15[t, l, 0] - landmarks15[t - 1, l, 0]) ** 2
                + (landmarks15[t, l, 1] - landmarks15[t - 1, l, 1]) ** 2
            )
            for l in range(68)
        ]
        d.append(float(np.mean(dists)))
        d_ok.append(bool(valid15[t] and valid15[t - 1]))
    disp = np.mean([d[i] for i in range(14) if d_ok[i]])
    vels = [d[i] - d[i - 1] for i in range(1, 14) if d_ok[i] and d_ok[i - 1]]
    return float(disp), float(np.mean(vels))


def test_stationary_face_zero_kinematics():
    clip = build_clip(landmarks=np.full((CLIP_FRAMES, 68, 2), 7.0))
    assert point_kinematics(downsample(clip)) == (0.0, 0.0)


def test_uniform_translation_two_px_per_step():
    # 0.4 px per raw frame = 2 px per downsampled step
    clip = build_clip(landmarks=ramp_landmarks(scale=0.4))
    disp, vel = point_kinematics(downsample(clip))
    assert disp == pytest.approx(2.0, abs=1e-12)
    assert vel == pytest.approx(0.0, abs=1e-12)


def test_motion_first_half_then_still():
    # 2 px per downsampled step for steps 1..7, then still: mean = 14/14 = 1
    lm = np.zeros((CLIP_FRAMES, 68, 2))
    positions = 2.0 * np.minimum(np.arange(CLIP_FRAMES) // 5, 7)
    lm[:, :, 0] = positions[:, None]
    clip = build_clip(landmarks=lm)
    ds = downsample(clip)
    disp, vel = point_kinematics(ds)
    assert disp == pytest.approx(1.0, abs=1e-12)
    oracle_disp, oracle_vel = brute_force_kinematics(ds.landmarks, ds.valid)
    assert disp == pytest.approx(oracle_disp, abs=1e-12)
    assert vel == pytest.approx(oracle_vel, abs=1e-12)


def test_kinematics_match_brute_force_on_random_motion():
    rng = np.random.default_rng(21)
    for trial in range(5):
        lm = rng.normal(size=(CLIP_FRAMES, 68, 2)).cumsum(axis=0)
        valid = np.ones(CLIP_FRAMES, dtype=bool)
        if trial % 2:
            valid[rng.choice(CLIP_FRAMES, size=10, replace=False)] = False
        clip = build_clip(landmarks=lm, valid=valid)
        ds = downsample(clip)
        if ds.valid.sum() < 3:
            continue
        disp, vel = point_kinematics(ds)
        oracle_disp, oracle_vel = brute_force_kinematics(ds.landmarks, ds.valid)
        assert disp == pytest.approx(oracle_disp, abs=1e-12)
        assert vel == pytest.approx(oracle_vel, abs=1e-12)


def test_invalid_steps_are_dropped_from_both_sides():
    # motion everywhere, but frames 25..49 invalid: their downsampled steps vanish
    lm = ramp_landmarks(scale=1.0)
    valid = np.ones(CLIP_FRAMES, dtype=bool)
    valid[25:50] = False
    clip = build_clip(landmarks=lm, valid=valid)
    ds = downsample(clip)
    disp, _ = point_kinematics(ds)
    oracle_disp, _ = brute_force_kinematics(ds.landmarks, ds.valid)
    assert disp == pytest.approx(oracle_disp, abs=1e-12)
    assert disp == pytest.approx(5.0, abs=1e-12)  # remaining valid steps all move 5 px


def test_too_few_valid_frames():
    valid = np.zeros(CLIP_FRAMES, dtype=bool)
    valid[[0, 5]] = True
    with pytest.raises(TooFewValidFrames):
        point_kinematics(downsample(build_clip(valid=valid)))
    # three valid downsampled frames but none adjacent
    valid = np.zeros(CLIP_FRAMES, dtype=bool)
    valid[[0, 10, 20]] = True
    with pytest.raises(TooFewValidFrames):
        point_kinematics(downsample(build_clip(valid=valid)))


# ---------------------------------------------------------------------------
# pose and gaze deltas
# ---------------------------------------------------------------------------


def test_static_pose_all_zero():
    clip = build_clip()
    assert pose_gaze_deltas(downsample(clip)) == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_head_straight_toward_camera():
    head = np.zeros((CLIP_FRAMES, 3))
    head[:, 2] = 2.0 * np.arange(CLIP_FRAMES)  # 10 mm per downsampled step
    clip = build_clip(head_pos=head)
    gaze, head_disp, pitch, yaw, roll = pose_gaze_deltas(downsample(clip))
    assert head_disp == pytest.approx(10.0, abs=1e-12)
    assert (gaze, pitch, yaw, roll) == (0.0, 0.0, 0.0, 0.0)


def test_sinusoidal_yaw_matches_enumeration():
    amplitude = 0.3
    rot = np.zeros((CLIP_FRAMES, 3))
    ds_index = np.arange(CLIP_FRAMES) // 5
    rot[:, 1] = amplitude * np.sin(2 * np.pi * ds_index / 4)  # period 4 downsampled steps
    clip = build_clip(head_rot=rot)
    ds = downsample(clip)
    _, _, _, yaw_delta, _ = pose_gaze_deltas(ds)
    series = amplitude * np.sin(2 * np.pi * np.arange(15) / 4)
    expected = np.mean([abs(series[t] - series[t - 1]) for t in range(1, 15)])
    assert yaw_delta == pytest.approx(expected, abs=1e-12)


def test_gaze_delta_euclidean():
    gaze = np.zeros((CLIP_FRAMES, 2))
    ds_index = np.arange(CLIP_FRAMES) // 5
    gaze[:, 0] = 0.03 * ds_index
    gaze[:, 1] = 0.04 * ds_index
    clip = build_clip(gaze=gaze)
    delta, *_ = pose_gaze_deltas(downsample(clip))
    assert delta == pytest.approx(0.05, abs=1e-12)  # 3-4-5 triangle per step


# ---------------------------------------------------------------------------
# AU aggregates
# ---------------------------------------------------------------------------


def test_au_nothing_active():
    assert au_aggregates(build_clip()) == (0, 0.0)


def test_au_single_channel_constant():
    occ = np.zeros((CLIP_FRAMES, 3), dtype=int)
    occ[:, 2] = 1  # AU12
    inten = np.zeros((CLIP_FRAMES, 3))
    inten[:, 2] = 3.0
    clip = build_clip(au_occurrence=occ, au_intensity=inten)
    assert au_aggregates(clip) == (1, 3.0)


def test_au_cell_mean_example():
    occ = np.zeros((CLIP_FRAMES, 3), dtype=int)
    occ[:37, 0] = 1  # AU01 in 37 frames
    occ[50, 1] = 1  # AU04 in one frame
    inten = np.zeros((CLIP_FRAMES, 3))
    inten[:37, 0] = 2.0
    inten[50, 1] = 4.0
    clip = build_clip(au_occurrence=occ, au_intensity=inten)
    count, intensity = au_aggregates(clip)
    assert count == 2
    assert intensity == pytest.approx((2.0 * 37 + 4.0 * 1) / 38, abs=1e-12)


def test_au_ignores_non_occurring_intensities():
    occ = np.zeros((CLIP_FRAMES, 3), dtype=int)
    occ[:10, 0] = 1
    inten = np.zeros((CLIP_FRAMES, 3))
    inten[:10, 0] = 2.5
    clip = build_clip(au_occurrence=occ, au_intensity=inten)
    baseline = au_aggregates(clip)
    # perturb intensities where occurrence is 0: no effect
    noisy = inten.copy()
    noisy[occ == 0] = 99.0
    clip2 = build_clip(au_occurrence=occ, au_intensity=noisy)
    assert au_aggregates(clip2) == baseline


def test_au_invalid_frames_excluded():
    occ = np.zeros((CLIP_FRAMES, 3), dtype=int)
    occ[0, 0] = 1
    inten = np.zeros((CLIP_FRAMES, 3))
    inten[0, 0] = 5.0
    valid = np.ones(CLIP_FRAMES, dtype=bool)
    valid[0] = False
    clip = build_clip(au_occurrence=occ, au_intensity=inten, valid=valid)
    assert au_aggregates(clip) == (0, 0.0)


def test_au_nan_intensity_channel_counts_but_skips_mean():
    occ = np.zeros((CLIP_FRAMES, 3), dtype=int)
    occ[:5, 0] = 1
    occ[:5, 1] = 1
    inten = np.zeros((CLIP_FRAMES, 3))
    inten[:, 0] = np.nan  # occurrence-only channel
    inten[:5, 1] = 2.0
    clip = build_clip(au_occurrence=occ, au_intensity=inten)
    count, intensity = au_aggregates(clip)
    assert count == 2
    assert intensity == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# invariances
# ---------------------------------------------------------------------------


def _random_clip(seed=0):
    rng = np.random.default_rng(seed)
    return build_clip(
        landmarks=rng.normal(size=(CLIP_FRAMES, 68, 2)).cumsum(axis=0),
        gaze=rng.normal(size=(CLIP_FRAMES, 2)) * 0.1,
        head_pos=rng.normal(size=(CLIP_FRAMES, 3)),
        head_rot=rng.normal(size=(CLIP_FRAMES, 3)) * 0.05,
        au_occurrence=rng.integers(0, 2, size=(CLIP_FRAMES, 3)),
        au_intensity=rng.uniform(0, 5, size=(CLIP_FRAMES, 3)),
    )


def _integer_landmark_clip(seed):
    # integer-valued coordinates keep offset/scale arithmetic exact in floats
    rng = np.random.default_rng(seed)
    lm = rng.integers(-5, 6, size=(CLIP_FRAMES, 68, 2)).cumsum(axis=0).astype(float)
    return build_clip(landmarks=lm)


def test_translation_invariance_exact():
    clip = _integer_landmark_clip(31)
    shifted = build_clip(landmarks=clip.landmarks + np.array([123.0, -45.0]))
    assert point_kinematics(downsample(clip)) == point_kinematics(downsample(shifted))


def test_scaling_landmarks_scales_displacement_exactly():
    clip = _integer_landmark_clip(32)
    scaled = build_clip(landmarks=2.0 * clip.landmarks)
    d1, _ = point_kinematics(downsample(clip))
    d2, _ = point_kinematics(downsample(scaled))
    assert d2 == 2.0 * d1


def test_time_reversal_preserves_displacement_exactly():
    # reversal applies to the 5 Hz slice the kinematics op consumes
    ds = downsample(_random_clip(33))
    reversed_ds = ds.take(np.arange(ds.n_frames)[::-1])
    d_fwd, _ = point_kinematics(ds)
    d_rev, _ = point_kinematics(reversed_ds)
    assert d_fwd == d_rev


# ---------------------------------------------------------------------------
# composition and CSV
# ---------------------------------------------------------------------------


def test_clip_features_fields_finite_and_nonnegative():
    feats = clip_features(_random_clip(34))
    vec = feats.as_array()
    assert np.isfinite(vec).all()
    names = list(FEATURE_NAMES)
    signed = names.index("points_velocity")
    assert (np.delete(vec, signed) >= 0).all()
    assert isinstance(feats.au_count, int)


def test_extractor_matches_function():
    clips = [_random_clip(s) for s in (40, 41, 42)]
    matrix = ClipFeatureExtractor().fit_transform(clips)
    assert matrix.shape == (3, 9)
    np.testing.assert_allclose(matrix[1], clip_features(clips[1]).as_array())


def test_features_csv_round_trip(tmp_path):
    clips = [_random_clip(s) for s in (50, 51)]
    rows = [
        (ClipId("S001", Task.STARTLE, (3, 6)), clip_features(clips[0]), 0.25),
        (ClipId("S002", Task.STARTLE, (3, 6)), clip_features(clips[1]), None),
    ]
    path = tmp_path / "features.csv"
    write_features_csv(rows, path)
    df = read_features_csv(path)
    assert len(df) == 2
    assert df.loc[0, "clip_id"] == "S001_startle_03-06"
    assert df.loc[0, "score"] == pytest.approx(0.25)
    assert np.isnan(df.loc[1, "score"])
    np.testing.assert_allclose(
        df.loc[0, list(FEATURE_NAMES)].to_numpy(dtype=float),
        clip_features(clips[0]).as_array(),
        rtol=1e-9,
    )
