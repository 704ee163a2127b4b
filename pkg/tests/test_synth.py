import numpy as np
import pytest

from expresskit.errors import InvalidConfig
from expresskit.features import FEATURE_NAMES
from expresskit.ingest import QUESTIONS, Task, parse_ratings
from expresskit.psychometrics import icc_1k, ratings_matrix
from expresskit.regression import fit_elastic_net
from expresskit.synth import SynthConfig, generate, write_synth_csvs


def test_same_seed_byte_identical_files(tmp_path):
    cfg = SynthConfig(n_subjects=8, clips_per_subject=2, seed=42)
    paths_a = write_synth_csvs(generate(cfg), tmp_path / "a")
    paths_b = write_synth_csvs(generate(cfg), tmp_path / "b")
    for name in paths_a:
        assert paths_a[name].read_bytes() == paths_b[name].read_bytes()


def test_different_seed_differs(tmp_path):
    a = generate(SynthConfig(n_subjects=6, clips_per_subject=2, seed=1))
    b = generate(SynthConfig(n_subjects=6, clips_per_subject=2, seed=2))
    assert not a.features[list(FEATURE_NAMES)].equals(b.features[list(FEATURE_NAMES)])


def test_discretized_answers_on_scale():
    data = generate(SynthConfig(n_subjects=30, clips_per_subject=3, seed=3))
    values = data.ratings.df[list(QUESTIONS)].to_numpy()
    assert np.isin(values, [0, 1, 2, 3, 4]).all()


def test_continuous_noiseless_raters_agree_exactly():
    cfg = SynthConfig(
        n_subjects=10,
        clips_per_subject=3,
        seed=4,
        discretize=False,
        residual_vars=(0.0, 0.0, 0.0),
        tasks=(Task.STARTLE,),
    )
    data = generate(cfg)
    for question in QUESTIONS:
        matrix = ratings_matrix(data.ratings, question)
        assert (matrix == matrix[:, :1]).all()
        assert icc_1k(matrix).icc == 1.0


def test_generated_files_parse_back(tmp_path):
    cfg = SynthConfig(n_subjects=6, clips_per_subject=2, seed=5)
    paths = write_synth_csvs(generate(cfg), tmp_path)
    table = parse_ratings(paths["ratings"])
    assert len(table) == 6 * 2 * 3 * 6  # subjects x clips x tasks x raters


def test_effective_weights_unit_norm_with_noise():
    cfg = SynthConfig(seed=6)
    data = generate(cfg)
    for w_eff in data.true_weights.values():
        total = float(w_eff @ w_eff) + (cfg.feature_noise_sd / np.sqrt(
            np.dot(cfg.feature_weights, cfg.feature_weights) + cfg.feature_noise_sd**2
        )) ** 2
        assert total == pytest.approx(1.0, abs=1e-12)


def test_latent_scores_standard_normal_shape():
    data = generate(SynthConfig(n_subjects=400, clips_per_subject=5, seed=7, tasks=(Task.PAIN,)))
    eta = data.true_scores["true_score"].to_numpy()
    assert eta.mean() == pytest.approx(0.0, abs=0.05)
    assert eta.var() == pytest.approx(1.0, abs=0.08)


def test_single_support_weight_recovered_by_lasso():
    weights = tuple(1.0 if i == 4 else 0.0 for i in range(9))
    cfg = SynthConfig(
        n_subjects=120,
        clips_per_subject=4,
        seed=8,
        feature_weights=weights,
        feature_noise_sd=0.1,
        tasks=(Task.DISGUST,),
    )
    data = generate(cfg)
    X = data.features[list(FEATURE_NAMES)].to_numpy()
    y = data.true_scores["true_score"].to_numpy()
    fit = fit_elastic_net(X, y, alpha=0.02, l1_ratio=1.0)
    support = np.flatnonzero(np.abs(fit.coef) > 0.05)
    assert list(support) == [4]


def test_per_task_weights_applied():
    cfg = SynthConfig(
        n_subjects=10,
        clips_per_subject=2,
        seed=9,
        tasks=(Task.STARTLE, Task.PAIN),
        weights_by_task={
            "startle": tuple(1.0 if i == 0 else 0.0 for i in range(9)),
            "pain": tuple(1.0 if i == 8 else 0.0 for i in range(9)),
        },
    )
    data = generate(cfg)
    assert data.true_weights["startle"][0] > 0.9
    assert data.true_weights["pain"][8] > 0.9


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_subjects": 0},
        {"loadings": (0.9, 0.9)},
        {"residual_vars": (-0.1, 0.1, 0.1)},
        {"feature_weights": (1.0, 2.0)},
        {"feature_weights": tuple(0.0 for _ in range(9)), "feature_noise_sd": 0.0},
    ],
)
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(InvalidConfig):
        generate(SynthConfig(**kwargs))
