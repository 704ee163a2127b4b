"""Command-line pipeline: synth -> score -> featurize -> train-eval.

Each subcommand reads its inputs from files and writes its outputs under the
configured output directory, so any stage can resume from the previous
stage's files alone:

* ``synth``      writes ratings.csv, features.csv, true_scores.csv,
  true_weights.csv from the seeded generator;
* ``score``      turns ratings.csv into expressiveness_scores.csv plus the
  rater_reliability.csv and factor_loadings.csv reports;
* ``featurize``  turns a directory of ``<subject>_<task>.csv`` tracking files
  into features.csv (joining scores when available);
* ``train-eval`` trains the regularized linear model per the configured
  regime, evaluates it against the baselines, and writes model files,
  feature_weights.csv, model_performance.csv, and model_comparisons.csv.

Configuration is a plain ``key = value`` file (``#`` comments allowed;
commas separate list values) with CLI flags taking precedence. Every report
embeds a provenance comment with the seed and a hash of the statistical
configuration. Exit codes: 0 success, 2 validation error, 3 numerical
failure.

Config keys: ratings, tracking_dir, features, scores, out, tasks, regime
(per-task | all-tasks), seed, resamples, confidence, refit (train |
train+val), alphas, l1_ratios, predictions (name=path pairs separated by
";"), and the synth_* block (subjects, clips_per_subject, raters, loadings,
residual_vars, weights, weights_<task>, noise_sd, continuous).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import evaluation, features, ingest, psychometrics, regression, synth
from .errors import InvalidConfig, NumericalError, ValidationError
from .evaluation import EvalPairs
from .features import FEATURE_NAMES
from .ingest import Task

DEFAULT_GRID = regression.HyperGrid()


@dataclass
class PipelineConfig:
    ratings: str | None = None
    tracking_dir: str | None = None
    features: str | None = None
    scores: str | None = None
    out: str = "out"
    tasks: tuple[str, ...] = ("startle", "pain", "disgust")
    regime: str = "per-task"
    seed: int = 0
    resamples: int = 2000
    confidence: float = 0.95
    refit: str = "train"
    alphas: tuple[float, ...] = DEFAULT_GRID.alphas
    l1_ratios: tuple[float, ...] = DEFAULT_GRID.l1_ratios
    predictions: dict[str, str] = field(default_factory=dict)

    synth_subjects: int = 100
    synth_clips_per_subject: int = 5
    synth_raters: int = 6
    synth_loadings: tuple[float, float, float] = (0.98, 0.97, 0.91)
    synth_residual_vars: tuple[float, float, float] = (0.04, 0.06, 0.18)
    synth_weights: tuple[float, ...] = synth.SynthConfig.feature_weights
    synth_weights_by_task: dict[str, tuple[float, ...]] = field(default_factory=dict)
    synth_noise_sd: float = 0.3
    synth_continuous: bool = False

    def validate(self) -> None:
        if self.regime not in ("per-task", "all-tasks"):
            raise InvalidConfig(f"regime must be per-task or all-tasks, got {self.regime!r}")
        if self.refit not in ("train", "train+val"):
            raise InvalidConfig(f"refit must be train or train+val, got {self.refit!r}")
        if self.resamples < 1:
            raise InvalidConfig("resamples must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise InvalidConfig("confidence must be in (0, 1)")
        for name in self.tasks:
            try:
                Task(name)
            except ValueError:
                raise InvalidConfig(f"unknown task {name!r}") from None

    def task_enums(self) -> list[Task]:
        return [Task(t) for t in self.tasks]

    def config_hash(self) -> str:
        """Hash of the statistical configuration (paths excluded)."""
        semantic = {
            "tasks": ",".join(self.tasks),
            "regime": self.regime,
            "seed": self.seed,
            "resamples": self.resamples,
            "confidence": self.confidence,
            "refit": self.refit,
            "alphas": ",".join(map(repr, self.alphas)),
            "l1_ratios": ",".join(map(repr, self.l1_ratios)),
            "synth_subjects": self.synth_subjects,
            "synth_clips_per_subject": self.synth_clips_per_subject,
            "synth_raters": self.synth_raters,
            "synth_loadings": ",".join(map(repr, self.synth_loadings)),
            "synth_residual_vars": ",".join(map(repr, self.synth_residual_vars)),
            "synth_weights": ",".join(map(repr, self.synth_weights)),
            "synth_weights_by_task": ";".join(
                f"{k}={','.join(map(repr, v))}" for k, v in sorted(self.synth_weights_by_task.items())
            ),
            "synth_noise_sd": self.synth_noise_sd,
            "synth_continuous": self.synth_continuous,
        }
        text = "\n".join(f"{k}={v}" for k, v in sorted(semantic.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def provenance(self) -> str:
        return f"provenance: config={self.config_hash()} seed={self.seed}"


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise InvalidConfig(f"expected comma-separated numbers, got {text!r}") from None


def parse_config_file(path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidConfig(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            pairs[key.strip()] = value.strip()
    return pairs


def build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        raw = parse_config_file(args.config)
        updates: dict = {}
        weights_by_task: dict[str, tuple[float, ...]] = {}
        for key, value in raw.items():
            if key in ("ratings", "tracking_dir", "features", "scores", "out", "regime", "refit"):
                updates[key] = value
            elif key == "tasks":
                updates["tasks"] = tuple(t.strip() for t in value.split(",") if t.strip())
            elif key in ("seed", "resamples", "synth_subjects", "synth_clips_per_subject", "synth_raters"):
                try:
                    updates[key] = int(value)
                except ValueError:
                    raise InvalidConfig(f"{key} must be an integer, got {value!r}") from None
            elif key in ("confidence", "synth_noise_sd"):
                try:
                    updates[key] = float(value)
                except ValueError:
                    raise InvalidConfig(f"{key} must be a number, got {value!r}") from None
            elif key in ("alphas", "l1_ratios", "synth_weights"):
                updates[key] = _parse_floats(value)
            elif key in ("synth_loadings", "synth_residual_vars"):
                vals = _parse_floats(value)
                if len(vals) != 3:
                    raise InvalidConfig(f"{key} needs 3 values, got {len(vals)}")
                updates[key] = vals
            elif key == "synth_continuous":
                updates[key] = value.lower() in ("1", "true", "yes")
            elif key == "predictions":
                preds = {}
                for item in value.split(";"):
                    if not item.strip():
                        continue
                    name, sep, pred_path = item.partition("=")
                    if not sep:
                        raise InvalidConfig(f"predictions entries must be name=path, got {item!r}")
                    preds[name.strip()] = pred_path.strip()
                updates["predictions"] = preds
            elif key.startswith("synth_weights_"):
                weights_by_task[key[len("synth_weights_"):]] = _parse_floats(value)
            else:
                raise InvalidConfig(f"unknown config key {key!r}")
        if weights_by_task:
            updates["synth_weights_by_task"] = weights_by_task
        cfg = replace(cfg, **updates)

    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "tasks", None):
        cfg = replace(cfg, tasks=tuple(t.strip() for t in args.tasks.split(",") if t.strip()))
    if getattr(args, "regime", None):
        cfg = replace(cfg, regime=args.regime)
    if getattr(args, "resamples", None) is not None:
        cfg = replace(cfg, resamples=args.resamples)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    cfg.validate()
    return cfg


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _default_path(explicit: str | None, out: Path, name: str) -> Path:
    return Path(explicit) if explicit else out / name


def _read_scores_csv(path) -> pd.DataFrame:
    if not Path(path).exists():
        raise ValidationError(f"scores file not found: {path}")
    df = pd.read_csv(path, comment="#")
    for col in ("clip_id", "score"):
        if col not in df.columns:
            raise ValidationError(f"{path}: missing column {col!r}")
    return df


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    synth_cfg = synth.SynthConfig(
        n_subjects=cfg.synth_subjects,
        clips_per_subject=cfg.synth_clips_per_subject,
        n_raters=cfg.synth_raters,
        loadings=cfg.synth_loadings,
        residual_vars=cfg.synth_residual_vars,
        feature_weights=cfg.synth_weights,
        feature_noise_sd=cfg.synth_noise_sd,
        seed=cfg.seed,
        discretize=not cfg.synth_continuous,
        tasks=tuple(cfg.task_enums()),
        weights_by_task=cfg.synth_weights_by_task or None,
    )
    data = synth.generate(synth_cfg)
    paths = synth.write_synth_csvs(data, out)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def _fit_all_regimes(table: ingest.RatingsTable, tasks: list[Task]):
    """Per-task and pooled factor fits from a ratings table."""
    means = psychometrics.mean_answers(table)
    fits: dict[str, psychometrics.CfaFit] = {}
    for task in tasks:
        block = means[means["task"] == task.value]
        fits[task.value] = psychometrics.fit_cfa(block[list(ingest.QUESTIONS)].to_numpy())
    fits["all"] = psychometrics.fit_cfa(means[list(ingest.QUESTIONS)].to_numpy())
    return means, fits


def cmd_score(cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    ratings_path = _default_path(cfg.ratings, out, "ratings.csv")
    if not ratings_path.exists():
        raise ValidationError(f"ratings file not found: {ratings_path}")
    table = ingest.parse_ratings(ratings_path).for_tasks(cfg.task_enums())
    if len(table) == 0:
        raise ValidationError(f"no ratings for tasks {cfg.tasks}")

    means, fits = _fit_all_regimes(table, cfg.task_enums())
    if cfg.regime == "per-task":
        parts = []
        for task in cfg.tasks:
            block = means[means["task"] == task]
            scores = psychometrics.bartlett_scores(fits[task], block[list(ingest.QUESTIONS)].to_numpy())
            parts.append(block[["clip_id", "subject_id", "task"]].assign(score=scores))
        scored = pd.concat(parts).sort_values("clip_id", kind="stable")
    else:
        scores = psychometrics.bartlett_scores(fits["all"], means[list(ingest.QUESTIONS)].to_numpy())
        scored = means[["clip_id", "subject_id", "task"]].assign(score=scores)

    scores_path = _default_path(cfg.scores, out, "expressiveness_scores.csv")
    n_outside = int((scored["score"].abs() > evaluation.SCORE_RANGE_HALF).sum())
    with open(scores_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {cfg.provenance()} regime={cfg.regime}\n")
        if n_outside:
            fh.write(f"# note: {n_outside} scores outside [-3.5, 3.5]\n")
        fh.write("clip_id,subject_id,task,score\n")
        for row in scored.itertuples(index=False):
            fh.write(f"{row.clip_id},{row.subject_id},{row.task},{row.score:.10g}\n")

    reliability = psychometrics.reliability_table(table, cfg.task_enums(), cfg.confidence)
    psychometrics.write_report_csv(reliability, out / "rater_reliability.csv", cfg.provenance())
    loadings = psychometrics.loading_table(fits)
    psychometrics.write_report_csv(loadings, out / "factor_loadings.csv", cfg.provenance())
    print(f"wrote scores: {scores_path}")
    print(f"wrote reports: {out / 'rater_reliability.csv'}, {out / 'factor_loadings.csv'}")
    return 0


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------


def cmd_featurize(cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    if not cfg.tracking_dir:
        raise ValidationError("featurize needs a tracking_dir")
    tracking_dir = Path(cfg.tracking_dir)
    if not tracking_dir.is_dir():
        raise ValidationError(f"tracking_dir not found: {tracking_dir}")

    score_map: dict[str, float] = {}
    scores_path = _default_path(cfg.scores, out, "expressiveness_scores.csv")
    if scores_path.exists():
        scores_df = _read_scores_csv(scores_path)
        score_map = dict(zip(scores_df["clip_id"], scores_df["score"].astype(float)))

    wanted = {t.value for t in cfg.task_enums()}
    rows = []
    n_files = 0
    for path in sorted(tracking_dir.glob("*.csv")):
        seq = ingest.parse_tracking(path)
        if seq.task is None or seq.task.value not in wanted:
            continue
        n_files += 1
        for clip_id, clip in ingest.segment_clips(seq):
            feats = features.clip_features(clip)
            rows.append((clip_id, feats, score_map.get(str(clip_id))))
    if not rows:
        raise ValidationError(f"no tracking files for tasks {sorted(wanted)} in {tracking_dir}")

    features_path = _default_path(cfg.features, out, "features.csv")
    features.write_features_csv(rows, features_path)
    print(f"wrote features for {len(rows)} clips from {n_files} recordings: {features_path}")
    return 0


# ---------------------------------------------------------------------------
# train-eval
# ---------------------------------------------------------------------------


def _split_frames(df: pd.DataFrame, assignment: regression.SplitAssignment):
    split_of = df["subject_id"].map(assignment.assignment)
    return {
        split: df[split_of == split].reset_index(drop=True)
        for split in (regression.Split.TRAIN, regression.Split.VAL, regression.Split.TEST)
    }


def _matrix(df: pd.DataFrame) -> np.ndarray:
    return df[list(FEATURE_NAMES)].to_numpy(dtype=float)


def _train_models(cfg: PipelineConfig, data: pd.DataFrame, assignment, grid):
    """Grid searches per the regime; returns per-task test pairs, weights, fits."""
    en_pairs: dict[str, EvalPairs] = {}
    weights: dict[str, dict[str, float]] = {}
    fits: dict[str, regression.GridSearchResult] = {}
    refit_val = cfg.refit == "train+val"
    scopes = [(t, data[data["task"] == t]) for t in cfg.tasks] if cfg.regime == "per-task" else [("all", data)]
    for label, block in scopes:
        parts = _split_frames(block, assignment)
        train, val, test = parts[regression.Split.TRAIN], parts[regression.Split.VAL], parts[regression.Split.TEST]
        if min(len(train), len(val), len(test)) == 0:
            raise ValidationError(f"empty split for {label!r} (train={len(train)}, val={len(val)}, test={len(test)})")
        result = regression.grid_search(
            _matrix(train),
            train["score"].to_numpy(float),
            _matrix(val),
            val["score"].to_numpy(float),
            grid=grid,
            subjects_train=train["subject_id"],
            subjects_val=val["subject_id"],
            refit_with_validation=refit_val,
        )
        fits[label] = result
        weights[label] = dict(zip(FEATURE_NAMES, result.fit.coef))
        if label == "all":
            for task in cfg.tasks:
                te = parts[regression.Split.TEST]
                te_task = te[te["task"] == task]
                en_pairs[task] = EvalPairs(
                    pred=regression.predict(result.fit, _matrix(te_task)),
                    truth=te_task["score"].to_numpy(float),
                    subjects=te_task["subject_id"].to_numpy(),
                )
        else:
            en_pairs[label] = EvalPairs(
                pred=regression.predict(result.fit, _matrix(test)),
                truth=test["score"].to_numpy(float),
                subjects=test["subject_id"].to_numpy(),
            )
    return en_pairs, weights, fits


def _human_pairs(cfg: PipelineConfig, table: ingest.RatingsTable, fits, test_clips: dict[str, set]):
    """Per-rater EvalPairs tuples for each task's test clips."""
    out: dict[str, tuple[EvalPairs, ...]] = {}
    for task in cfg.tasks:
        sub = table.df[(table.df["task"] == task) & (table.df["clip_id"].isin(test_clips[task]))]
        hb = psychometrics.human_baseline_scores(ingest.RatingsTable(sub.reset_index(drop=True)), fits[task])
        subjects = np.asarray(hb.subject_ids)
        out[task] = tuple(
            EvalPairs(pred=hb.preds[r], truth=hb.targets[r], subjects=subjects) for r in range(hb.k_raters)
        )
    return out


def cmd_train_eval(cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    features_path = _default_path(cfg.features, out, "features.csv")
    if not features_path.exists():
        raise ValidationError(f"features file not found: {features_path}")
    data = features.read_features_csv(features_path)
    data = data[data["task"].isin(cfg.tasks)].reset_index(drop=True)
    if data.empty:
        raise ValidationError(f"no feature rows for tasks {cfg.tasks}")

    scores_path = _default_path(cfg.scores, out, "expressiveness_scores.csv")
    if scores_path.exists():
        scores_df = _read_scores_csv(scores_path)
        data = data.drop(columns=["score"]).merge(scores_df[["clip_id", "score"]], on="clip_id", how="inner")
    if data.empty or data["score"].isna().any():
        raise ValidationError("feature rows lack scores; run the score stage or provide a scores file")
    data = data.sort_values("clip_id", kind="stable").reset_index(drop=True)

    assignment = regression.make_splits(data["subject_id"].unique(), cfg.seed)
    grid = regression.HyperGrid(alphas=cfg.alphas, l1_ratios=cfg.l1_ratios)
    en_pairs, weights, fits = _train_models(cfg, data, assignment, grid)

    # pooled test frame in canonical clip order drives the baselines
    test_mask = data["subject_id"].map(assignment.assignment) == regression.Split.TEST
    test_df = data[test_mask].reset_index(drop=True)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(3)
    u_all = evaluation.uniform_baseline(len(test_df), int(seeds[0]))
    n_all = evaluation.normal_baseline(len(test_df), int(seeds[1]))

    def baseline_by_task(vector: np.ndarray) -> dict[str, EvalPairs]:
        by_task = {}
        for task in cfg.tasks:
            mask = (test_df["task"] == task).to_numpy()
            by_task[task] = EvalPairs(
                pred=vector[mask],
                truth=test_df.loc[mask, "score"].to_numpy(float),
                subjects=test_df.loc[mask, "subject_id"].to_numpy(),
            )
        return by_task

    ratings_path = _default_path(cfg.ratings, out, "ratings.csv")
    if not ratings_path.exists():
        raise ValidationError(f"ratings file (needed for the human baseline) not found: {ratings_path}")
    table = ingest.parse_ratings(ratings_path).for_tasks(cfg.task_enums())
    _, cfa_fits = _fit_all_regimes(table, cfg.task_enums())
    test_clips = {t: set(test_df.loc[test_df["task"] == t, "clip_id"]) for t in cfg.tasks}
    human = _human_pairs(cfg, table, cfa_fits, test_clips)

    models: dict[str, dict] = {
        "Uniform baseline": baseline_by_task(u_all),
        "Normal baseline": baseline_by_task(n_all),
        "Human baseline": human,
    }
    for name in sorted(cfg.predictions):
        pred_df = pd.read_csv(cfg.predictions[name], comment="#")
        if "clip_id" not in pred_df.columns or "prediction" not in pred_df.columns:
            raise ValidationError(f"{cfg.predictions[name]}: predictions need clip_id and prediction columns")
        merged = test_df.merge(pred_df[["clip_id", "prediction"]], on="clip_id", how="left")
        if merged["prediction"].isna().any():
            raise ValidationError(f"model {name!r} is missing predictions for some test clips")
        models[name] = baseline_by_task(merged["prediction"].to_numpy(float))
    models["ElasticNet"] = en_pairs

    header, rows = evaluation.score_table(models, cfg.tasks)
    evaluation.write_table_csv(header, rows, out / "model_performance.csv", cfg.provenance())

    pooled = {name: evaluation.pooled_pairs(by_task, cfg.tasks) for name, by_task in models.items()}
    header4, rows4, _ = evaluation.comparison_table(
        "ElasticNet", pooled, n_resamples=cfg.resamples, seed=int(seeds[2]), confidence=cfg.confidence
    )
    evaluation.write_table_csv(header4, rows4, out / "model_comparisons.csv", cfg.provenance())

    wheader, wrows = evaluation.weight_table(weights)
    evaluation.write_table_csv(wheader, wrows, out / "feature_weights.csv", cfg.provenance())

    for label, result in fits.items():
        model_path = out / f"model_{label}.txt"
        regression.save_model(result.fit, model_path, FEATURE_NAMES, seed=cfg.seed)
        print(
            f"model {label}: alpha={result.alpha} l1_ratio={result.l1_ratio} "
            f"val_rmse={result.val_rmse:.6g} -> {model_path}"
        )
    print(f"wrote reports: {out / 'model_performance.csv'}, {out / 'model_comparisons.csv'}, "
          f"{out / 'feature_weights.csv'}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--seed", type=int, help="override the seed")
    parser.add_argument("--tasks", help="comma-separated task list")
    parser.add_argument("--regime", choices=["per-task", "all-tasks"], help="modeling regime")
    parser.add_argument("--resamples", type=int, help="bootstrap resample count")
    parser.add_argument("--out", help="output directory")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="expresskit", description="expressiveness scoring and prediction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate seeded synthetic ratings and features"),
        ("score", "aggregate ratings into per-clip expressiveness scores"),
        ("featurize", "extract clip features from tracking CSVs"),
        ("train-eval", "train the linear model and evaluate against baselines"),
    ):
        _add_common_flags(sub.add_parser(name, help=help_text))

    args = parser.parse_args(argv)
    commands = {
        "synth": cmd_synth,
        "score": cmd_score,
        "featurize": cmd_featurize,
        "train-eval": cmd_train_eval,
    }
    try:
        cfg = build_config(args)
        return commands[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
