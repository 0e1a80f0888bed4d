"""Test-set evaluation and the representation x transform comparison grid.

Accuracy is integer-exact: 100 * trace(confusion) / total. The grid fixes a
single train/test split for every cell so accuracy differences isolate the
representation/transform choice, and renders each representation only once.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ModelParams, TrainConfig, TrainingCurve, _predict_probs, train
from .errors import ConfigError, DataError, GazeError
from .gaze_data import (
    Diagnosis,
    GazeRecording,
    LabeledDataset,
    LabeledSample,
    SplitSpec,
    split_indices,
)
from .render import Representation, RenderSpec, normalize_unit, render
from .transforms import TransformKind, apply_transform, resize_bilinear

ALL_REPRESENTATIONS = (Representation.HEATMAP, Representation.SCANPATH, Representation.FIXATION_MAP)
ALL_TRANSFORMS = (TransformKind.IDENTITY, TransformKind.FFT_SPECTRUM, TransformKind.HAAR_WAVELET)

_DISPLAY_REP = {
    Representation.HEATMAP: "Heat Maps",
    Representation.SCANPATH: "Scan Paths",
    Representation.FIXATION_MAP: "Fixation Maps",
}
_DISPLAY_TRANSFORM = {
    TransformKind.IDENTITY: "{rep}",
    TransformKind.FFT_SPECTRUM: "FFT of {rep}",
    TransformKind.HAAR_WAVELET: "Haar of {rep}",
}


def cell_id(rep: Representation, kind: TransformKind) -> str:
    return f"{rep.value}:{kind.value}"


def parse_grid(text: str) -> list[tuple[Representation, TransformKind]]:
    """Parse ``rep:transform`` pairs (comma separated) or ``all`` into a grid.

    The full grid is transform-major (all plain rows, then FFT, then Haar),
    matching the layout of the summary table.
    """
    text = (text or "all").strip().lower()
    if text in ("", "all"):
        return [(rep, kind) for kind in ALL_TRANSFORMS for rep in ALL_REPRESENTATIONS]
    cells = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        if len(parts) != 2:
            raise ConfigError(f"grid cell {token!r} must look like rep:transform")
        cells.append((Representation.parse(parts[0]), TransformKind.parse(parts[1])))
    if not cells:
        raise ConfigError("grid is empty")
    return cells


@dataclass
class EvalReport:
    """Accuracy, 2x2 confusion counts, and per-class recall/precision."""

    config_id: str
    accuracy_percent: float
    confusion: np.ndarray
    per_class_recall: np.ndarray
    per_class_precision: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.confusion.sum())


@dataclass
class CellResult:
    """One grid cell: the test report plus training artifacts."""

    config_id: str
    report: EvalReport
    train_accuracy_percent: float
    params: ModelParams
    curve: TrainingCurve


def confusion_matrix(true_idx, pred_idx) -> np.ndarray:
    """2x2 integer counts indexed (true class, predicted class)."""
    counts = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(np.asarray(true_idx), np.asarray(pred_idx)):
        counts[int(t), int(p)] += 1
    return counts


def report_from_confusion(confusion: np.ndarray, config_id: str = "") -> EvalReport:
    total = int(confusion.sum())
    correct = int(np.trace(confusion))
    accuracy = 100.0 * correct / total
    row = confusion.sum(axis=1)
    col = confusion.sum(axis=0)
    recall = np.array(
        [confusion[i, i] / row[i] if row[i] else 0.0 for i in range(2)], dtype=np.float64
    )
    precision = np.array(
        [confusion[i, i] / col[i] if col[i] else 0.0 for i in range(2)], dtype=np.float64
    )
    return EvalReport(
        config_id=config_id,
        accuracy_percent=accuracy,
        confusion=confusion,
        per_class_recall=recall,
        per_class_precision=precision,
    )


def evaluate(params: ModelParams, test_set: LabeledDataset, config_id: str = "") -> EvalReport:
    """Accuracy and confusion matrix of ``params`` on a labeled test set."""
    if len(test_set) == 0:
        raise DataError("test set is empty")
    probs = _predict_probs(params, test_set.images().astype(np.float64, copy=False))
    pred_idx = np.argmax(probs, axis=1)
    confusion = confusion_matrix(test_set.label_indices(), pred_idx)
    return report_from_confusion(confusion, config_id)


def prepare_images(images, kind: TransformKind, input_side: int, levels: int = 1) -> np.ndarray:
    """transform -> resize -> unit-normalize adapter in front of the classifier."""
    out = []
    for img in images:
        t = apply_transform(img, kind, levels=levels)
        t = resize_bilinear(t, input_side, input_side)
        out.append(normalize_unit(t))
    return np.stack(out)


def dataset_from_images(images, recordings: list[GazeRecording]) -> LabeledDataset:
    samples = [
        LabeledSample(
            image=img,
            label=rec.label,
            subject_id=rec.subject_id,
            stimulus_id=rec.stimulus_id,
        )
        for img, rec in zip(images, recordings)
    ]
    return LabeledDataset(samples)


def render_all(recordings, spec: RenderSpec, workers: int = 1) -> np.ndarray:
    """Render every recording under one spec, optionally across threads."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(lambda rec: render(rec, spec), recordings))
    else:
        images = [render(rec, spec) for rec in recordings]
    return np.stack(images)


def run_matrix(
    recordings: list[GazeRecording],
    grid: list[tuple[Representation, TransformKind]],
    cfg: TrainConfig,
    split: SplitSpec,
    render_specs: dict[Representation, RenderSpec] | None = None,
    levels: int = 1,
    workers: int = 1,
) -> list[CellResult]:
    """Train and evaluate one model per grid cell over a shared frozen split.

    Rendered images are cached per representation; every cell sees identical
    train/test membership. Stage failures are re-raised with the cell id.
    """
    if not grid:
        raise ConfigError("grid must contain at least one cell")
    if not recordings:
        raise DataError("no recordings to run the grid on")
    cfg.validate()
    labels = [rec.label for rec in recordings]
    subjects = [rec.subject_id for rec in recordings]
    train_idx, test_idx = split_indices(labels, subjects, split)

    cache: dict[Representation, np.ndarray] = {}
    for rep in {rep for rep, _ in grid}:
        spec = (render_specs or {}).get(rep) or RenderSpec(representation=rep)
        if spec.representation is not rep:
            raise ConfigError(f"render spec for {rep.value} has representation "
                              f"{spec.representation.value}")
        cache[rep] = render_all(recordings, spec, workers=workers)

    def run_cell(cell):
        rep, kind = cell
        cid = cell_id(rep, kind)
        try:
            images = prepare_images(cache[rep], kind, cfg.input_side, levels=levels)
            dataset = dataset_from_images(images, recordings)
            train_set = dataset.subset(train_idx)
            test_set = dataset.subset(test_idx)
            params, curve = train(train_set, cfg)
            report = evaluate(params, test_set, config_id=cid)
        except GazeError as err:
            raise type(err)(f"cell {cid}: {err}") from err
        return CellResult(
            config_id=cid,
            report=report,
            train_accuracy_percent=curve.epoch_train_accuracy[-1][1],
            params=params,
            curve=curve,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            by_id = {result.config_id: result for result in pool.map(run_cell, grid)}
    else:
        by_id = {}
        for cell in grid:
            result = run_cell(cell)
            by_id[result.config_id] = result
    return [by_id[cell_id(rep, kind)] for rep, kind in grid]


def best_cell(results: list[CellResult]) -> CellResult:
    """Highest test accuracy; ties broken by config id (lexicographic)."""
    return min(results, key=lambda r: (-r.report.accuracy_percent, r.config_id))


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------


def write_report_csv(reports: list[EvalReport], path) -> None:
    """One row per cell: config_id, accuracy, and tp/fn/fp/tn (ASD positive)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["config_id", "accuracy_percent", "tp", "fn", "fp", "tn"])
        for rep in reports:
            c = rep.confusion
            writer.writerow(
                [rep.config_id, f"{rep.accuracy_percent:.2f}", c[0, 0], c[0, 1], c[1, 0], c[1, 1]]
            )


def write_confusion_csv(report: EvalReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = [Diagnosis.ASD.value, Diagnosis.TD.value]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["true\\predicted"] + labels)
        for i, name in enumerate(labels):
            writer.writerow([name] + [int(v) for v in report.confusion[i]])


def display_name(config_id: str) -> str:
    rep_token, kind_token = config_id.split(":")
    rep = Representation.parse(rep_token)
    kind = TransformKind.parse(kind_token)
    return _DISPLAY_TRANSFORM[kind].format(rep=_DISPLAY_REP[rep])


def write_markdown_summary(results: list[CellResult], cfg: TrainConfig, n_train: int, path) -> None:
    """Summary table of the grid run, reporting train and test accuracy side by side."""
    iters = -(-n_train // cfg.batch_size)
    lines = [
        "# Training results summary",
        "",
        "| Input Type | Iterations/Epoch | Epochs | Train Accuracy (%) | Test Accuracy (%) |",
        "|---|---|---|---|---|",
    ]
    for result in results:
        lines.append(
            f"| {display_name(result.config_id)} | {iters} | {cfg.epochs} "
            f"| {result.train_accuracy_percent:.2f} | {result.report.accuracy_percent:.2f} |"
        )
    best = best_cell(results)
    lines += [
        "",
        f"Best configuration: {display_name(best.config_id)} "
        f"({best.report.accuracy_percent:.2f}% test accuracy)",
        "",
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines), encoding="utf-8")
