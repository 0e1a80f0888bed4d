"""Fixation data handling: CSV ingestion, synthetic cohorts, train/test splitting.

The on-disk format is a flat UTF-8 CSV with header
``subject_id,stimulus_id,label,onset_ms,x,y,duration_ms``. One recording is
one unique (subject_id, stimulus_id) pair; rows need not be pre-sorted, the
loader orders fixations by onset.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .seeding import derive_seed

DEFAULT_SCREEN_WIDTH = 1280
DEFAULT_SCREEN_HEIGHT = 1024

GAZE_CSV_HEADER = ("subject_id", "stimulus_id", "label", "onset_ms", "x", "y", "duration_ms")

# Dwell and saccade-gap ranges (ms) used by the synthetic generator.
_DURATION_RANGE = (120.0, 400.0)
_GAP_RANGE = (20.0, 80.0)
_AOI_MARGIN = 0.15  # attractor centers stay this fraction away from screen edges


class Diagnosis(Enum):
    """The two classes of the binary task. Class index 0 is ASD, 1 is TD."""

    ASD = "ASD"
    TD = "TD"

    @property
    def index(self) -> int:
        return 0 if self is Diagnosis.ASD else 1

    @classmethod
    def from_index(cls, i: int) -> "Diagnosis":
        if i == 0:
            return cls.ASD
        if i == 1:
            return cls.TD
        raise ValueError(f"class index must be 0 or 1, got {i}")

    @classmethod
    def parse(cls, text) -> "Diagnosis":
        if isinstance(text, Diagnosis):
            return text
        try:
            return cls(str(text).strip().upper())
        except ValueError:
            raise DataError(f"label must be ASD or TD, got {text!r}") from None


@dataclass(frozen=True)
class FixationPoint:
    """A single stationary gaze event in screen pixel coordinates."""

    x: float
    y: float
    onset_ms: float
    duration_ms: float


@dataclass
class GazeRecording:
    """Ordered fixation events for one (subject, stimulus) session."""

    subject_id: str
    stimulus_id: str
    label: Diagnosis
    screen_width: int = DEFAULT_SCREEN_WIDTH
    screen_height: int = DEFAULT_SCREEN_HEIGHT
    points: list[FixationPoint] = field(default_factory=list)

    @property
    def sample_id(self) -> str:
        return f"{self.subject_id}_{self.stimulus_id}"

    def xy(self) -> np.ndarray:
        """Fixation coordinates as an (n, 2) float array in onset order."""
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)

    def durations(self) -> np.ndarray:
        return np.array([p.duration_ms for p in self.points], dtype=np.float64)

    def validate(self) -> "GazeRecording":
        """Check coordinate bounds, positive dwell, and strictly increasing onsets."""
        prev_onset = -math.inf
        for p in self.points:
            if not (0.0 <= p.x < self.screen_width):
                raise DataError(
                    f"recording {self.sample_id}: x={p.x} outside [0, {self.screen_width})"
                )
            if not (0.0 <= p.y < self.screen_height):
                raise DataError(
                    f"recording {self.sample_id}: y={p.y} outside [0, {self.screen_height})"
                )
            if not p.duration_ms > 0:
                raise DataError(f"recording {self.sample_id}: duration_ms must be > 0")
            if not p.onset_ms > prev_onset:
                raise DataError(
                    f"recording {self.sample_id}: onset_ms values must strictly increase"
                )
            prev_onset = p.onset_ms
        return self


@dataclass
class CohortSpec:
    """Parameters of the synthetic two-class cohort generator.

    Class contrast enters only through the per-class spatial dispersion and
    the transition restriction: ASD-labeled recordings scatter more widely
    around attractor regions but revisit fewer of them.
    """

    n_per_class: int = 300
    dispersion_asd: float = 110.0
    dispersion_td: float = 35.0
    n_aoi: int = 5
    path_restriction_asd: float = 0.6
    fixations_per_recording: tuple[int, int] = (8, 20)
    seed: int = 0

    def validate(self) -> "CohortSpec":
        if self.n_per_class < 1:
            raise ConfigError("n_per_class must be >= 1")
        if self.dispersion_asd <= 0 or self.dispersion_td <= 0:
            raise ConfigError("dispersion values must be > 0")
        if not (0.0 <= self.path_restriction_asd <= 1.0):
            raise ConfigError("path_restriction_asd must be in [0, 1]")
        if self.n_aoi < 1:
            raise ConfigError("n_aoi must be >= 1")
        lo, hi = self.fixations_per_recording
        if lo < 1 or hi < lo:
            raise ConfigError("fixations_per_recording must be a non-empty range of counts >= 1")
        return self


@dataclass
class SplitSpec:
    """Train/test split configuration (default 80/20, stratified, sample-level)."""

    train_fraction: float = 0.8
    stratified: bool = True
    group_by_subject: bool = False
    seed: int = 0

    def validate(self) -> "SplitSpec":
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError("train_fraction must be in (0, 1)")
        return self


@dataclass
class LabeledSample:
    """One classifier input: an image plus its label and provenance."""

    image: np.ndarray
    label: Diagnosis
    subject_id: str = ""
    stimulus_id: str = ""


@dataclass
class LabeledDataset:
    """A split-ready collection of labeled images."""

    samples: list[LabeledSample]

    def __len__(self) -> int:
        return len(self.samples)

    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self.samples])

    def labels(self) -> list[Diagnosis]:
        return [s.label for s in self.samples]

    def label_indices(self) -> np.ndarray:
        return np.array([s.label.index for s in self.samples], dtype=np.int64)

    def subjects(self) -> list[str]:
        return [s.subject_id for s in self.samples]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset([self.samples[i] for i in indices])


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def load_recordings(
    path,
    screen_width: int = DEFAULT_SCREEN_WIDTH,
    screen_height: int = DEFAULT_SCREEN_HEIGHT,
) -> list[GazeRecording]:
    """Read a gaze CSV into recordings, one per unique (subject, stimulus) pair.

    Rows are grouped in first-appearance order and sorted by onset within a
    recording. Raises DataError for malformed rows (with line number), label
    conflicts, out-of-bounds coordinates, or an empty file.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"gaze CSV not found: {path}")
    groups: dict[tuple[str, str], list[FixationPoint]] = {}
    labels: dict[tuple[str, str], Diagnosis] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != GAZE_CSV_HEADER:
            raise DataError(f"{path}: line 1: expected header {','.join(GAZE_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(GAZE_CSV_HEADER):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(GAZE_CSV_HEADER)} fields, got {len(row)}"
                )
            subject, stimulus, label_text = row[0], row[1], row[2]
            try:
                onset, x, y, duration = (float(v) for v in row[3:7])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric field") from None
            try:
                label = Diagnosis.parse(label_text)
            except DataError:
                raise DataError(f"{path}: line {lineno}: label must be ASD or TD") from None
            key = (subject, stimulus)
            if key in labels and labels[key] is not label:
                raise DataError(f"{path}: line {lineno}: conflicting label for {subject}/{stimulus}")
            labels[key] = label
            groups.setdefault(key, []).append(FixationPoint(x, y, onset, duration))
    if not groups:
        raise DataError(f"{path}: no data rows")
    recordings = []
    for (subject, stimulus), points in groups.items():
        points.sort(key=lambda p: p.onset_ms)
        rec = GazeRecording(
            subject_id=subject,
            stimulus_id=stimulus,
            label=labels[(subject, stimulus)],
            screen_width=screen_width,
            screen_height=screen_height,
            points=points,
        )
        recordings.append(rec.validate())
    return recordings


def save_recordings(recordings, path) -> None:
    """Write recordings to the gaze CSV format. Floats round-trip exactly via repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(GAZE_CSV_HEADER)
        for rec in recordings:
            for p in rec.points:
                writer.writerow(
                    [
                        rec.subject_id,
                        rec.stimulus_id,
                        rec.label.value,
                        repr(p.onset_ms),
                        repr(p.x),
                        repr(p.y),
                        repr(p.duration_ms),
                    ]
                )


# ---------------------------------------------------------------------------
# Synthetic cohort generation
# ---------------------------------------------------------------------------


def aoi_centers(
    spec: CohortSpec,
    screen_width: int = DEFAULT_SCREEN_WIDTH,
    screen_height: int = DEFAULT_SCREEN_HEIGHT,
) -> np.ndarray:
    """The (n_aoi, 2) attractor layout a cohort spec produces; shared by both classes."""
    rng = np.random.default_rng(derive_seed(spec.seed, "aoi"))
    mx = _AOI_MARGIN * screen_width
    my = _AOI_MARGIN * screen_height
    return rng.uniform([mx, my], [screen_width - mx, screen_height - my], size=(spec.n_aoi, 2))


def _simulate_points(rng, centers, dispersion, restriction, fix_range, width, height):
    n = int(rng.integers(fix_range[0], fix_range[1] + 1))
    aoi = int(rng.integers(len(centers)))
    xmax = np.nextafter(float(width), 0.0)
    ymax = np.nextafter(float(height), 0.0)
    points = []
    t = 0.0
    for k in range(n):
        if k > 0 and rng.random() >= restriction:
            aoi = int(rng.integers(len(centers)))
        offset = rng.normal(0.0, dispersion, size=2)
        x = float(np.clip(centers[aoi, 0] + offset[0], 0.0, xmax))
        y = float(np.clip(centers[aoi, 1] + offset[1], 0.0, ymax))
        duration = float(rng.uniform(*_DURATION_RANGE))
        gap = float(rng.uniform(*_GAP_RANGE))
        points.append(FixationPoint(x, y, t, duration))
        t += duration + gap
    return points


def generate_cohort(
    spec: CohortSpec,
    screen_width: int = DEFAULT_SCREEN_WIDTH,
    screen_height: int = DEFAULT_SCREEN_HEIGHT,
) -> list[GazeRecording]:
    """Generate 2 * n_per_class recordings, ASD block first, then TD.

    Recording i of each class draws from the same per-index stream, so a
    degenerate spec (equal dispersions, zero restriction) yields pairwise
    identical point sequences that differ only in label and subject id.
    """
    spec.validate()
    centers = aoi_centers(spec, screen_width, screen_height)
    class_params = (
        (Diagnosis.ASD, spec.dispersion_asd, spec.path_restriction_asd),
        (Diagnosis.TD, spec.dispersion_td, 0.0),
    )
    recordings = []
    for label, dispersion, restriction in class_params:
        for i in range(spec.n_per_class):
            rng = np.random.default_rng(derive_seed(spec.seed, f"recording:{i}"))
            points = _simulate_points(
                rng, centers, dispersion, restriction,
                spec.fixations_per_recording, screen_width, screen_height,
            )
            rec = GazeRecording(
                subject_id=f"{label.value.lower()}{i:03d}",
                stimulus_id="stim000",
                label=label,
                screen_width=screen_width,
                screen_height=screen_height,
                points=points,
            )
            recordings.append(rec.validate())
    return recordings


# ---------------------------------------------------------------------------
# Train/test splitting
# ---------------------------------------------------------------------------


def _train_total(n: int, fraction: float) -> int:
    # round half up, so e.g. 0.5 of 3 samples puts 2 in train
    return int(math.floor(fraction * n + 0.5))


def _largest_remainder_counts(n_by_class, fraction, total_target):
    quotas = [fraction * n for n in n_by_class]
    base = [math.floor(q) for q in quotas]
    deficit = total_target - sum(base)
    # hand out the remaining units by largest fractional remainder,
    # ties broken by class enumeration order
    order = sorted(range(len(quotas)), key=lambda c: (-(quotas[c] - base[c]), c))
    counts = list(base)
    for c in order[: max(0, deficit)]:
        counts[c] += 1
    return counts


def split_indices(
    labels: list[Diagnosis],
    subjects: list[str],
    spec: SplitSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Compute train/test index arrays over samples given labels and subject ids.

    Output indices are sorted, disjoint, and jointly cover the input. The
    seeded shuffle makes the membership deterministic.
    """
    spec.validate()
    n = len(labels)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    if spec.stratified and spec.group_by_subject:
        seen: dict[str, Diagnosis] = {}
        for subject, label in zip(subjects, labels):
            if subject in seen and seen[subject] is not label:
                raise DataError(
                    f"subject {subject} has samples in both classes; "
                    "cannot stratify a grouped split"
                )
            seen[subject] = label
    rng = np.random.default_rng(spec.seed)
    total_target = _train_total(n, spec.train_fraction)

    if spec.stratified:
        class_indices = [
            [i for i, lab in enumerate(labels) if lab is Diagnosis.ASD],
            [i for i, lab in enumerate(labels) if lab is Diagnosis.TD],
        ]
        if any(len(idx) == 0 for idx in class_indices):
            raise DataError("stratified split requires at least one sample per class")
        counts = _largest_remainder_counts(
            [len(idx) for idx in class_indices], spec.train_fraction, total_target
        )
        train: list[int] = []
        for idx, k in zip(class_indices, counts):
            train.extend(_select(idx, k, subjects, spec.group_by_subject, rng))
    else:
        train = _select(list(range(n)), total_target, subjects, spec.group_by_subject, rng)

    train_set = set(train)
    train_idx = np.array(sorted(train_set), dtype=np.int64)
    test_idx = np.array([i for i in range(n) if i not in train_set], dtype=np.int64)
    return train_idx, test_idx


def _select(indices, k, subjects, group_by_subject, rng):
    if not group_by_subject:
        order = rng.permutation(len(indices))
        return [indices[j] for j in order[:k]]
    by_subject: dict[str, list[int]] = {}
    for i in indices:
        by_subject.setdefault(subjects[i], []).append(i)
    names = list(by_subject)
    order = rng.permutation(len(names))
    chosen: list[int] = []
    for j in order:
        if len(chosen) >= k:
            break
        chosen.extend(by_subject[names[j]])
    return chosen


def split_dataset(samples: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Split a labeled dataset into disjoint train/test parts per the spec."""
    train_idx, test_idx = split_indices(samples.labels(), samples.subjects(), spec)
    return samples.subset(train_idx), samples.subset(test_idx)
