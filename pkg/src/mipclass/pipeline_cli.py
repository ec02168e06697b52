"""Command-line pipeline: manifest in, metrics out.

Stages are separate subcommands sharing one run directory::

    phantom -> preprocess -> split -> train -> predict -> ensemble/evaluate

Every stage is deterministic given its inputs and seed, writes atomically,
and can be rerun to byte-identical outputs.  Per-study problems during
preprocessing are collected and reported rather than aborting the run;
the exit code is 0 only when nothing failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import phantom
from .augment2d import AugmentPolicy, augment, default_policy, derive_seed, identity_policy
from .classhead import (
    DEFAULT_POOL_GRID,
    ClassWeights,
    HeadParams,
    TrainConfig,
    class_weights,
    extract_features,
    forward,
    lr_schedule,
    sgd_epoch,
    train_head,
    uniform_weights,
    weighted_ce,
)
from .errors import ManifestParse, MipclassError, MissingBlob, SchemaMismatch
from .evalkit import (
    LABEL_STRINGS,
    FoldPlan,
    Prediction,
    ensemble_all,
    evaluate,
    max_label,
    read_predictions_csv,
    stratified_kfold,
    write_predictions_csv,
)
from .mipbuild import (
    SIDES,
    BuildConfig,
    MipStack,
    NormConstants,
    Study,
    build_stack,
    normalize_stack,
    stack_filename,
    stack_from_blob,
    stack_to_blob,
)
from .tensorio import _write_file, read_blob, read_nifti, write_blob

WEIGHTINGS = ("natural", "inverse")

_LABEL_TO_INT = {name: i for i, name in enumerate(LABEL_STRINGS)}


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    pre_path: str
    post_paths: tuple[str, ...]
    mask_path: str | None
    label_left: int
    label_right: int


_MANIFEST_HEADER = (
    "patient_id",
    "pre_path",
    "post_paths",
    "mask_path",
    "label_left",
    "label_right",
)


class Manifest:
    """Study table plus the directory its relative paths resolve against."""

    def __init__(self, rows: Sequence[ManifestRow], base_dir: Path):
        ids = [r.patient_id for r in rows]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestParse(f"duplicate patient ids: {dupes}")
        self.rows = tuple(rows)
        self.base_dir = Path(base_dir)
        self._by_id = {r.patient_id: r for r in rows}

    @classmethod
    def read(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        try:
            with open(path, "r", newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header is None or tuple(header) != _MANIFEST_HEADER:
                    raise ManifestParse(
                        f"manifest header must be {','.join(_MANIFEST_HEADER)}"
                    )
                rows = [cls._parse_row(row, n) for n, row in enumerate(reader, start=2)]
        except OSError as exc:
            raise ManifestParse(f"cannot read manifest {path}: {exc}") from exc
        return cls(rows, path.parent)

    @staticmethod
    def _parse_row(row: list[str], line: int) -> ManifestRow:
        if len(row) != len(_MANIFEST_HEADER):
            raise ManifestParse(f"line {line}: expected 6 fields, got {len(row)}")
        patient_id, pre_path, posts, mask, left, right = (field.strip() for field in row)
        if not patient_id or not pre_path:
            raise ManifestParse(f"line {line}: patient_id and pre_path are required")
        post_paths = tuple(p.strip() for p in posts.split(";") if p.strip())
        if len(post_paths) < 2:
            raise ManifestParse(f"line {line}: need >= 2 post paths, got {posts!r}")
        for name, value in (("label_left", left), ("label_right", right)):
            if value not in _LABEL_TO_INT:
                raise ManifestParse(
                    f"line {line}: {name} must be one of {LABEL_STRINGS}, got {value!r}"
                )
        return ManifestRow(
            patient_id=patient_id,
            pre_path=pre_path,
            post_paths=post_paths,
            mask_path=mask or None,
            label_left=_LABEL_TO_INT[left],
            label_right=_LABEL_TO_INT[right],
        )

    @property
    def patient_ids(self) -> list[str]:
        return [r.patient_id for r in self.rows]

    def row(self, patient_id: str) -> ManifestRow:
        return self._by_id[patient_id]

    def labels_for(self, patient_id: str) -> dict[str, int]:
        """Per-side labels, keyed 'right'/'left'.

        The single label access point: training-time leakage audits wrap
        this method and assert it is never called for validation patients.
        """
        row = self._by_id[patient_id]
        return {"right": row.label_right, "left": row.label_left}

    def load_study(self, patient_id: str) -> Study:
        row = self._by_id[patient_id]
        base = self.base_dir
        mask = read_nifti(base / row.mask_path) if row.mask_path else None
        return Study(
            patient_id=patient_id,
            pre=read_nifti(base / row.pre_path),
            posts=tuple(read_nifti(base / p) for p in row.post_paths),
            mask=mask,
            label_left=row.label_left,
            label_right=row.label_right,
        )


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class PipelineConfig:
    """One bag of knobs for a whole run; defaults reproduce the published setup."""

    build: BuildConfig = BuildConfig()
    norm: NormConstants = NormConstants()
    policy: AugmentPolicy = default_policy()
    train: TrainConfig = TrainConfig()
    k: int = 5
    seed: int = 0
    pool_grid: int = DEFAULT_POOL_GRID

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.pool_grid < 1:
            raise ValueError(f"pool_grid must be >= 1, got {self.pool_grid}")


_CONFIG_SECTIONS = {
    "spacing",
    "shape",
    "row_window",
    "norm_means",
    "norm_stds",
    "augment",
    "train",
    "k",
    "seed",
    "pool_grid",
}


def _replace_from(cls, defaults, overrides: Mapping[str, Any], section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise SchemaMismatch(f"unknown {section} keys in config: {unknown}")
    fixed = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in overrides.items()
    }
    return dataclasses.replace(defaults, **fixed)


def load_config(path: str | Path | None) -> PipelineConfig:
    """Config file (JSON) with full defaulting; None means all defaults."""
    defaults = PipelineConfig()
    if path is None:
        return defaults
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaMismatch("config root must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_SECTIONS)
    if unknown:
        raise SchemaMismatch(f"unknown config keys: {unknown}")

    build = dataclasses.replace(
        defaults.build,
        spacing=tuple(raw.get("spacing", defaults.build.spacing)),
        shape=tuple(raw.get("shape", defaults.build.shape)),
        row_window=raw.get("row_window", defaults.build.row_window),
    )
    norm = NormConstants(
        means=tuple(raw.get("norm_means", defaults.norm.means)),
        stds=tuple(raw.get("norm_stds", defaults.norm.stds)),
    )
    # "augment": null switches augmentation off entirely; an empty or
    # partial section keeps the published defaults for unnamed fields
    augment_raw = raw.get("augment", {})
    if augment_raw is None:
        policy = identity_policy()
    else:
        policy = _replace_from(AugmentPolicy, defaults.policy, augment_raw, "augment")
    train = _replace_from(TrainConfig, defaults.train, raw.get("train", {}), "train")
    return PipelineConfig(
        build=build,
        norm=norm,
        policy=policy,
        train=train,
        k=raw.get("k", defaults.k),
        seed=raw.get("seed", defaults.seed),
        pool_grid=raw.get("pool_grid", defaults.pool_grid),
    )


def _policy_active(policy: AugmentPolicy) -> bool:
    return any(
        getattr(policy, name) > 0.0
        for name in (
            "hflip_p",
            "vflip_p",
            "rotate_p",
            "affine_p",
            "brightness_p",
            "contrast_p",
            "noise_p",
            "blur_p",
            "dropout_p",
        )
    )


# ---------------------------------------------------------------------------
# shared run-directory layout


def _stack_path(out: Path, patient_id: str, side: str) -> Path:
    return out / "stacks" / stack_filename(patient_id, side)


def _load_stack(out: Path, patient_id: str, side: str) -> MipStack:
    path = _stack_path(out, patient_id, side)
    if not path.exists():
        raise MissingBlob(f"no preprocessed stack at {path}; run preprocess first")
    return stack_from_blob(read_blob(path))


def _write_json(path: Path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _write_file(path, text.encode("utf-8"))


def _read_folds(out: Path) -> FoldPlan:
    path = out / "folds.json"
    if not path.exists():
        raise MissingBlob(f"no fold plan at {path}; run split first")
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return FoldPlan(
            k=raw["k"],
            assignment=dict(raw["assignment"]),
            strat_labels=dict(raw["strat_labels"]),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"malformed folds.json: {exc}") from exc


def _model_id(weighting: str, fold: int) -> str:
    return f"{weighting}_fold{fold}"


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(n: int, seed: int, out_dir: str | Path) -> int:
    manifest = phantom.write_cohort(n, seed, out_dir)
    print(f"wrote {n} synthetic studies and {manifest}")
    return 0


def _preprocess_one(manifest: Manifest, patient_id: str, config: PipelineConfig, out: Path):
    study = manifest.load_study(patient_id)
    for side in SIDES:
        stack = build_stack(study, side, config.build)
        stack = normalize_stack(stack, config.norm)
        write_blob(stack_to_blob(stack), _stack_path(out, patient_id, side))


def cmd_preprocess(
    manifest_path: str | Path, config: PipelineConfig, out_dir: str | Path, jobs: int = 1
) -> int:
    manifest = Manifest.read(manifest_path)
    out = Path(out_dir)
    (out / "stacks").mkdir(parents=True, exist_ok=True)

    failures: dict[str, str] = {}

    def run(patient_id: str) -> None:
        try:
            _preprocess_one(manifest, patient_id, config, out)
        except (MipclassError, OSError, ValueError) as exc:
            failures[patient_id] = f"{type(exc).__name__}: {exc}"

    ids = manifest.patient_ids
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, ids))
    else:
        for patient_id in ids:
            run(patient_id)

    report = {
        "n_studies": len(ids),
        "succeeded": sorted(set(ids) - set(failures)),
        "failed": {k: failures[k] for k in sorted(failures)},
    }
    _write_json(out / "preprocess_report.json", report)
    for patient_id in sorted(failures):
        print(f"FAILED {patient_id}: {failures[patient_id]}", file=sys.stderr)
    print(f"preprocessed {len(report['succeeded'])}/{len(ids)} studies -> {out / 'stacks'}")
    return 0 if not failures else 1


def cmd_split(manifest_path: str | Path, config: PipelineConfig, out_dir: str | Path) -> int:
    manifest = Manifest.read(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    patients = manifest.patient_ids
    strat = [
        max_label(manifest.row(p).label_left, manifest.row(p).label_right)
        for p in patients
    ]
    plan = stratified_kfold(patients, strat, k=config.k, seed=config.seed)
    _write_json(
        out / "folds.json",
        {
            "k": plan.k,
            "seed": config.seed,
            "assignment": plan.assignment,
            "strat_labels": plan.strat_labels,
        },
    )
    sizes = [len(plan.patients_in_fold(f)) for f in range(plan.k)]
    print(f"split {len(patients)} patients into folds of sizes {sizes} -> {out / 'folds.json'}")
    return 0


def _training_samples(
    manifest: Manifest, plan: FoldPlan, fold: int, out: Path
) -> tuple[list[MipStack], np.ndarray]:
    """Stacks + labels for the training folds only.

    Labels are looked up per training patient through Manifest.labels_for;
    validation-fold labels are never touched here.
    """
    stacks: list[MipStack] = []
    labels: list[int] = []
    for patient_id in plan.training_patients(fold):
        sides = manifest.labels_for(patient_id)
        for side in SIDES:
            stacks.append(_load_stack(out, patient_id, side))
            labels.append(sides[side])
    return stacks, np.asarray(labels, dtype=np.int64)


def _fold_weights(weighting: str, labels: np.ndarray) -> ClassWeights:
    if weighting == "natural":
        return uniform_weights()
    counts = [int((labels == c).sum()) for c in range(3)]
    return class_weights(counts)


def _train_augmented(
    stacks: Sequence[MipStack],
    labels: np.ndarray,
    cfg: TrainConfig,
    weights: ClassWeights,
    policy: AugmentPolicy,
    augment_seed: int,
    pool_grid: int,
):
    """Training loop that redraws augmentations every epoch.

    Mirrors train_head exactly (zero init, per-epoch permutation from one
    Philox stream, momentum state carried across epochs) but rebuilds the
    feature matrix from freshly augmented stacks before each epoch.
    """
    n = len(stacks)
    dim = 4 * (1 + pool_grid * pool_grid)
    W = np.zeros((dim, 3))
    b = np.zeros(3)
    vW = np.zeros_like(W)
    vb = np.zeros_like(b)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    trace = np.empty(cfg.epochs, dtype=np.float64)
    for epoch in range(cfg.epochs):
        feats = np.stack(
            [
                extract_features(
                    augment(
                        stack,
                        derive_seed(augment_seed, stack.patient_id, stack.side, epoch),
                        policy,
                    ),
                    pool_grid,
                )
                for stack in stacks
            ]
        ).astype(np.float64)
        lr = lr_schedule(epoch, cfg)
        perm = rng.permutation(n)
        sgd_epoch(W, b, vW, vb, feats, labels, weights, lr, cfg.momentum, cfg.batch, perm)
        trace[epoch] = weighted_ce(forward(feats, HeadParams(W, b)), labels, weights).value
    return HeadParams(W, b), trace


def _train_one_fold(
    manifest: Manifest,
    plan: FoldPlan,
    fold: int,
    weighting: str,
    config: PipelineConfig,
    out: Path,
) -> Path:
    stacks, labels = _training_samples(manifest, plan, fold, out)
    weights = _fold_weights(weighting, labels)
    train_seed = derive_seed(config.seed, f"fold{fold}", weighting, 0)
    cfg = dataclasses.replace(config.train, seed=train_seed)

    if _policy_active(config.policy):
        params, trace = _train_augmented(
            stacks, labels, cfg, weights, config.policy, config.seed, config.pool_grid
        )
    else:
        features = np.stack(
            [extract_features(stack, config.pool_grid) for stack in stacks]
        ).astype(np.float64)
        result = train_head(features, labels, cfg, weights)
        params, trace = result.params, result.loss_trace

    record = {
        "model_id": _model_id(weighting, fold),
        "weighting": weighting,
        "fold": fold,
        "pool_grid": config.pool_grid,
        "feature_dim": params.dim,
        "n_train_samples": int(labels.shape[0]),
        # counts/weights come from the training folds only, by construction
        "train_class_counts": [int((labels == c).sum()) for c in range(3)],
        "class_weights": list(weights.w),
        "train_config": dataclasses.asdict(cfg),
        "augmented": _policy_active(config.policy),
        "final_loss": float(trace[-1]),
        "loss_trace": [float(v) for v in trace],
        "W": [[float(v) for v in row] for row in params.W],
        "b": [float(v) for v in params.b],
    }
    path = out / "models" / f"{_model_id(weighting, fold)}.json"
    _write_json(path, record)
    return path


def cmd_train(
    manifest_path: str | Path,
    config: PipelineConfig,
    out_dir: str | Path,
    weighting: str = "both",
    fold: int | None = None,
) -> int:
    manifest = Manifest.read(manifest_path)
    out = Path(out_dir)
    plan = _read_folds(out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    weightings = WEIGHTINGS if weighting == "both" else (weighting,)
    folds = range(plan.k) if fold is None else (fold,)
    for w in weightings:
        for f in folds:
            path = _train_one_fold(manifest, plan, f, w, config, out)
            print(f"trained {path.stem} -> {path}")
    return 0


def _read_model(path: Path) -> tuple[HeadParams, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    missing = {"W", "b", "fold", "model_id", "pool_grid"} - raw.keys()
    if missing:
        raise SchemaMismatch(f"model file {path} lacks keys {sorted(missing)}")
    try:
        params = HeadParams(
            W=np.asarray(raw["W"], dtype=np.float64),
            b=np.asarray(raw["b"], dtype=np.float64),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"malformed model file {path}: {exc}") from exc
    return params, raw


def cmd_predict(
    out_dir: str | Path, weighting: str = "both", fold: int | None = None
) -> int:
    out = Path(out_dir)
    plan = _read_folds(out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    weightings = WEIGHTINGS if weighting == "both" else (weighting,)
    folds = range(plan.k) if fold is None else (fold,)
    for w in weightings:
        for f in folds:
            model_path = out / "models" / f"{_model_id(w, f)}.json"
            if not model_path.exists():
                raise MissingBlob(f"no model at {model_path}; run train first")
            params, record = _read_model(model_path)
            predictions = []
            for patient_id in plan.validation_patients(f):
                for side in SIDES:
                    stack = _load_stack(out, patient_id, side)
                    probs = forward(extract_features(stack, record["pool_grid"]), params)
                    predictions.append(
                        Prediction(patient_id, side, probs, record["model_id"])
                    )
            csv_path = out / "predictions" / f"{record['model_id']}.csv"
            write_predictions_csv(predictions, csv_path)
            print(f"predicted {len(predictions)} breasts -> {csv_path}")
    return 0


def _truths_for(manifest: Manifest, predictions: Sequence[Prediction]) -> np.ndarray:
    truths = []
    for p in predictions:
        try:
            row = manifest.row(p.patient_id)
        except KeyError as exc:
            raise SchemaMismatch(
                f"prediction references patient {p.patient_id!r} not in the manifest"
            ) from exc
        truths.append(row.label_right if p.side == "right" else row.label_left)
    return np.asarray(truths, dtype=np.int64)


def _evaluate_csv(manifest: Manifest, csv_path: Path, out: Path) -> Path:
    predictions = read_predictions_csv(csv_path)
    if not predictions:
        raise SchemaMismatch(f"no prediction rows in {csv_path}")
    probs = np.stack([p.probs for p in predictions])
    truths = _truths_for(manifest, predictions)
    report = evaluate(probs, truths)
    payload = report.to_dict()
    payload["source"] = csv_path.name
    metrics_path = out / "metrics" / f"{csv_path.stem}.json"
    _write_json(metrics_path, payload)
    print(
        f"{csv_path.stem}: auc={report.auc:.4f} sens@90spec={report.sens_at_90spec:.4f} "
        f"spec@90sens={report.spec_at_90sens:.4f} score={report.score:.4f}"
    )
    return metrics_path


def cmd_evaluate(
    manifest_path: str | Path, out_dir: str | Path, csv_paths: Sequence[str | Path]
) -> int:
    manifest = Manifest.read(manifest_path)
    out = Path(out_dir)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    for csv_path in csv_paths:
        _evaluate_csv(manifest, Path(csv_path), out)
    return 0


def cmd_ensemble(
    manifest_path: str | Path, out_dir: str | Path, csv_paths: Sequence[str | Path]
) -> int:
    """Average the listed prediction files per breast, then re-evaluate."""
    manifest = Manifest.read(manifest_path)
    out = Path(out_dir)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    members: list[Prediction] = []
    for csv_path in csv_paths:
        members.extend(read_predictions_csv(csv_path))
    if not members:
        raise SchemaMismatch("no predictions to ensemble")
    merged = ensemble_all(members)
    csv_path = out / "predictions" / "ensemble.csv"
    write_predictions_csv(merged, csv_path)
    print(f"ensembled {len(csv_paths)} files over {len(merged)} breasts -> {csv_path}")
    _evaluate_csv(manifest, csv_path, out)
    return 0


def cmd_augment_preview(stack_path: str | Path, seed: int, out_dir: str | Path) -> int:
    stack_path = Path(stack_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stack = stack_from_blob(read_blob(stack_path))
    augmented = augment(stack, seed, default_policy())
    preview = out / f"{stack_path.stem}_aug{seed}.mct"
    write_blob(stack_to_blob(augmented), preview)
    applied = augmented.meta.get("augment_applied", [])
    print(f"applied {applied or ['nothing']} -> {preview}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mipclass",
        description="Mask-guided MIP classification pipeline for multi-phase breast MRI.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *names: str) -> None:
        if "manifest" in names:
            p.add_argument("--manifest", required=True, help="manifest CSV path")
        if "config" in names:
            p.add_argument("--config", default=None, help="config JSON (defaults if omitted)")
        if "out" in names:
            p.add_argument("--out", required=True, help="run directory")
        if "seed" in names:
            p.add_argument("--seed", type=int, default=None, help="override config seed")
        if "weighting" in names:
            p.add_argument(
                "--weighting",
                choices=WEIGHTINGS + ("both",),
                default="both",
                help="class weighting strategy (default: both)",
            )
        if "fold" in names:
            p.add_argument("--fold", type=int, default=None, help="restrict to one fold")

    p = sub.add_parser("phantom", help="generate a synthetic cohort + manifest")
    p.add_argument("--n", type=int, required=True, help="number of studies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("preprocess", help="standardize studies into stack blobs")
    common(p, "manifest", "config", "out", "seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel studies (default 1)")

    p = sub.add_parser("split", help="write a stratified patient-level fold plan")
    common(p, "manifest", "config", "out", "seed")

    p = sub.add_parser("train", help="train linear heads per fold and weighting")
    common(p, "manifest", "config", "out", "seed", "weighting", "fold")

    p = sub.add_parser("predict", help="predict each fold's validation patients")
    common(p, "config", "out", "weighting", "fold")

    p = sub.add_parser("evaluate", help="score prediction CSVs against the manifest")
    common(p, "manifest", "out")
    p.add_argument("csvs", nargs="+", help="prediction CSV files")

    p = sub.add_parser("ensemble", help="average prediction CSVs and re-evaluate")
    common(p, "manifest", "out")
    p.add_argument("csvs", nargs="+", help="prediction CSV files to average")

    p = sub.add_parser("augment-preview", help="write one augmented copy of a stack blob")
    p.add_argument("--stack", required=True, help="stack blob (.mct) path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "phantom":
            return cmd_phantom(args.n, args.seed, args.out)
        if args.command == "preprocess":
            return cmd_preprocess(args.manifest, _config_from_args(args), args.out, args.jobs)
        if args.command == "split":
            return cmd_split(args.manifest, _config_from_args(args), args.out)
        if args.command == "train":
            return cmd_train(
                args.manifest, _config_from_args(args), args.out, args.weighting, args.fold
            )
        if args.command == "predict":
            return cmd_predict(args.out, args.weighting, args.fold)
        if args.command == "evaluate":
            return cmd_evaluate(args.manifest, args.out, args.csvs)
        if args.command == "ensemble":
            return cmd_ensemble(args.manifest, args.out, args.csvs)
        if args.command == "augment-preview":
            return cmd_augment_preview(args.stack, args.seed, args.out)
    except MipclassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover
