"""Command-line pipeline orchestrator.

Subcommands: ``generate``, ``render``, ``transform``, ``train``, ``evaluate``,
``pipeline``. Configuration resolves with precedence CLI flag > config-file
key > built-in default; the config file is flat ``key=value`` lines with
``#`` comments. All stage randomness derives from the single run seed via
stage-keyed hashing (see seeding.derive_seed with labels "generate", "split",
"train"), so one seed reproduces an entire run bit for bit.

Exit codes: 0 success, 2 usage/config error, 3 data/validation error,
4 numeric/training error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .classifier import TrainConfig, load_curve_csv, load_params, save_params, train
from .errors import ConfigError, DataError, TrainingError
from .evaluation import (
    best_cell,
    cell_id,
    evaluate,
    parse_grid,
    render_all,
    run_matrix,
    write_confusion_csv,
    write_markdown_summary,
    write_report_csv,
)
from .gaze_data import (
    CohortSpec,
    Diagnosis,
    LabeledDataset,
    LabeledSample,
    SplitSpec,
    generate_cohort,
    load_recordings,
    save_recordings,
    split_indices,
)
from .imageio import read_raw, write_pgm, write_raw
from .render import Representation, RenderSpec, normalize_unit
from .seeding import derive_seed
from .transforms import TransformKind, apply_transform, resize_bilinear


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline in one flat, validated namespace."""

    seed: int = 0
    out_dir: str = "out"
    quiet: bool = False
    # synthetic cohort
    per_class: int = 300
    dispersion_asd: float = 110.0
    dispersion_td: float = 35.0
    n_aoi: int = 5
    path_restriction_asd: float = 0.6
    fixations_min: int = 8
    fixations_max: int = 20
    screen_width: int = 1280
    screen_height: int = 1024
    # rendering
    rep_width: int = 64
    rep_height: int = 64
    sigma: float = 2.0
    line_thickness: int = 1
    marker_radius_ms_scale: float = 0.01
    duration_weighted: bool = False
    # transforms
    levels: int = 1
    # training
    epochs: int = 10
    batch_size: int = 10
    learning_rate: float = 0.01
    input_side: int = 64
    # splitting
    train_fraction: float = 0.8
    stratified: bool = True
    group_by_subject: bool = False
    # pipeline
    grid: str = "all"
    input_csv: str = ""
    save_images: bool = False

    def cohort_spec(self) -> CohortSpec:
        return CohortSpec(
            n_per_class=self.per_class,
            dispersion_asd=self.dispersion_asd,
            dispersion_td=self.dispersion_td,
            n_aoi=self.n_aoi,
            path_restriction_asd=self.path_restriction_asd,
            fixations_per_recording=(self.fixations_min, self.fixations_max),
            seed=derive_seed(self.seed, "generate"),
        ).validate()

    def render_spec(self, representation: Representation) -> RenderSpec:
        return RenderSpec(
            representation=representation,
            out_width=self.rep_width,
            out_height=self.rep_height,
            sigma=self.sigma,
            line_thickness=self.line_thickness,
            marker_radius_ms_scale=self.marker_radius_ms_scale,
            duration_weighted=self.duration_weighted,
        ).validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=derive_seed(self.seed, "train"),
            input_side=self.input_side,
        ).validate()

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            train_fraction=self.train_fraction,
            stratified=self.stratified,
            group_by_subject=self.group_by_subject,
            seed=derive_seed(self.seed, "split"),
        ).validate()

    def validate(self) -> "PipelineConfig":
        self.cohort_spec()
        for rep in Representation:
            self.render_spec(rep)
        self.train_config()
        self.split_spec()
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        parse_grid(self.grid)
        return self


_FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(PipelineConfig)}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str):
    target = _FIELD_TYPES[key]
    if target is bool:
        word = raw.lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return target(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: expected {target.__name__}, got {raw!r}") from None


def parse_config_file(path) -> dict:
    """Flat key=value config with # comments; unknown keys are rejected."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, raw = text.split("=", 1)
        values[key.strip()] = raw.strip()
    unknown = sorted(k for k in values if k not in _FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return {k: _coerce(k, v) for k, v in values.items()}


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    return cfg.validate()


def worker_count() -> int:
    """Parallelism cap from GAZE2CLASS_THREADS (0 or unset = auto)."""
    raw = os.environ.get("GAZE2CLASS_THREADS", "0") or "0"
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"GAZE2CLASS_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError("GAZE2CLASS_THREADS must be >= 0")
    return value if value > 0 else (os.cpu_count() or 1)


def _say(cfg: PipelineConfig, message: str) -> None:
    if not cfg.quiet:
        print(message)


# ---------------------------------------------------------------------------
# Shared stage helpers
# ---------------------------------------------------------------------------


def _image_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"image directory not found: {directory}")
    files = sorted(directory.glob("*.gzimg"))
    if not files:
        raise DataError(f"no .gzimg images in {directory}")
    return files


def _load_image_dataset(
    images_dir, recordings_csv, cfg: PipelineConfig, input_side: int
) -> tuple[LabeledDataset, str]:
    """Pair raw images with labels from the gaze CSV; resize + normalize.

    File stems look like ``<subject>_<stimulus>.<rep>[.<transform>].gzimg``;
    the part before the first dot must match a recording's sample id.
    """
    recordings = load_recordings(recordings_csv, cfg.screen_width, cfg.screen_height)
    meta = {rec.sample_id: rec for rec in recordings}
    samples = []
    config_id = "custom:identity"
    for path in _image_files(images_dir):
        fields = path.name.split(".")
        sample_id = fields[0]
        rec = meta.get(sample_id)
        if rec is None:
            raise DataError(f"{path.name}: sample {sample_id!r} not present in {recordings_csv}")
        if len(fields) >= 3:
            kind = fields[2] if len(fields) >= 4 else TransformKind.IDENTITY.value
            config_id = f"{fields[1]}:{kind}"
        img = resize_bilinear(read_raw(path), input_side, input_side)
        samples.append(
            LabeledSample(
                image=normalize_unit(img),
                label=rec.label,
                subject_id=rec.subject_id,
                stimulus_id=rec.stimulus_id,
            )
        )
    return LabeledDataset(samples), config_id


def _write_curve_dat(curve, path) -> None:
    """Gnuplot-friendly curve data: losses in index 0, epoch accuracy in index 1."""
    lines = ["# index 0: global_iteration epoch iteration loss"]
    for step, (epoch, iteration, loss) in enumerate(curve.losses, start=1):
        lines.append(f"{step} {epoch} {iteration} {repr(loss)}")
    lines += ["", "", "# index 1: epoch train_accuracy_percent"]
    for epoch, accuracy in curve.epoch_train_accuracy:
        lines.append(f"{epoch} {repr(accuracy)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args, cfg: PipelineConfig) -> int:
    spec = cfg.cohort_spec()
    recordings = generate_cohort(spec, cfg.screen_width, cfg.screen_height)
    out_path = Path(args.output) if args.output else Path(cfg.out_dir) / "gaze.csv"
    save_recordings(recordings, out_path)
    for label in Diagnosis:
        count = sum(1 for r in recordings if r.label is label)
        _say(cfg, f"{label.value}: {count} recordings")
    _say(cfg, f"wrote {out_path}")
    return 0


def cmd_render(args, cfg: PipelineConfig) -> int:
    recordings = load_recordings(args.input, cfg.screen_width, cfg.screen_height)
    rep = Representation.parse(args.rep)
    spec = cfg.render_spec(rep)
    out_dir = Path(cfg.out_dir)
    images = render_all(recordings, spec, workers=worker_count())
    for rec, img in zip(recordings, images):
        stem = f"{rec.sample_id}.{rep.value}"
        write_pgm(img, out_dir / f"{stem}.pgm")
        write_raw(img, out_dir / f"{stem}.gzimg")
    _say(cfg, f"rendered {len(recordings)} {rep.value} images to {out_dir}")
    return 0


def cmd_transform(args, cfg: PipelineConfig) -> int:
    kind = TransformKind.parse(args.kind)
    out_dir = Path(cfg.out_dir)
    files = _image_files(args.in_dir)
    for path in files:
        img = read_raw(path)
        result = apply_transform(img, kind, levels=cfg.levels)
        stem = f"{path.name[: -len('.gzimg')]}.{kind.value}"
        write_raw(result, out_dir / f"{stem}.gzimg")
        write_pgm(result, out_dir / f"{stem}.pgm")
    _say(cfg, f"transformed {len(files)} images ({kind.value}) to {out_dir}")
    return 0


def cmd_train(args, cfg: PipelineConfig) -> int:
    dataset, config_id = _load_image_dataset(args.images, args.recordings, cfg, cfg.input_side)
    train_idx, test_idx = split_indices(dataset.labels(), dataset.subjects(), cfg.split_spec())
    train_set = dataset.subset(train_idx)
    test_set = dataset.subset(test_idx)
    train_cfg = cfg.train_config()
    iters = -(-len(train_set) // train_cfg.batch_size)
    _say(cfg, f"train/test membership: {len(train_set)}/{len(test_set)}")
    _say(cfg, f"iterations/epoch: {iters}")
    params, curve = train(train_set, train_cfg)
    out_dir = Path(cfg.out_dir)
    save_params(params, out_dir / "model.gzmdl")
    curve.write_csv(out_dir / "curve.csv")
    _say(cfg, f"final train accuracy: {curve.epoch_train_accuracy[-1][1]:.2f}%")
    if len(test_set):
        report = evaluate(params, test_set, config_id=config_id)
        _say(cfg, f"test accuracy: {report.accuracy_percent:.2f}%")
    _say(cfg, f"wrote {out_dir / 'model.gzmdl'} and {out_dir / 'curve.csv'}")
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    params = load_params(args.checkpoint)
    dataset, config_id = _load_image_dataset(args.images, args.recordings, cfg, params.input_side)
    _, test_idx = split_indices(dataset.labels(), dataset.subjects(), cfg.split_spec())
    test_set = dataset.subset(test_idx)
    report = evaluate(params, test_set, config_id=config_id)
    out_dir = Path(cfg.out_dir)
    write_report_csv([report], out_dir / "report.csv")
    write_confusion_csv(report, out_dir / "confusion.csv")
    curve_path = Path(args.curve) if args.curve else Path(args.checkpoint).parent / "curve.csv"
    if curve_path.exists():
        _write_curve_dat(load_curve_csv(curve_path), out_dir / "curve.dat")
    _say(cfg, f"test accuracy: {report.accuracy_percent:.2f}% over {report.n_samples} samples")
    _say(cfg, f"wrote {out_dir / 'report.csv'} and {out_dir / 'confusion.csv'}")
    return 0


def _save_image_stacks(cfg: PipelineConfig, recordings, grid, out_dir: Path) -> None:
    reps = {rep for rep, _ in grid}
    rendered = {}
    for rep in reps:
        spec = cfg.render_spec(rep)
        rendered[rep] = render_all(recordings, spec, workers=worker_count())
        for rec, img in zip(recordings, rendered[rep]):
            stem = f"{rec.sample_id}.{rep.value}"
            write_pgm(img, out_dir / "images" / rep.value / f"{stem}.pgm")
            write_raw(img, out_dir / "images" / rep.value / f"{stem}.gzimg")
    for rep, kind in grid:
        cell_dir = out_dir / "transformed" / cell_id(rep, kind).replace(":", ".")
        for rec, img in zip(recordings, rendered[rep]):
            result = apply_transform(img, kind, levels=cfg.levels)
            stem = f"{rec.sample_id}.{rep.value}.{kind.value}"
            write_raw(result, cell_dir / f"{stem}.gzimg")
            write_pgm(result, cell_dir / f"{stem}.pgm")


def cmd_pipeline(args, cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    if cfg.input_csv:
        recordings = load_recordings(cfg.input_csv, cfg.screen_width, cfg.screen_height)
        _say(cfg, f"loaded {len(recordings)} recordings from {cfg.input_csv}")
    else:
        recordings = generate_cohort(cfg.cohort_spec(), cfg.screen_width, cfg.screen_height)
        save_recordings(recordings, out_dir / "gaze.csv")
        _say(cfg, f"generated {len(recordings)} recordings -> {out_dir / 'gaze.csv'}")
    grid = parse_grid(cfg.grid)
    render_specs = {rep: cfg.render_spec(rep) for rep, _ in grid}
    results = run_matrix(
        recordings,
        grid,
        cfg.train_config(),
        cfg.split_spec(),
        render_specs=render_specs,
        levels=cfg.levels,
        workers=worker_count(),
    )
    n_train = len(split_indices([r.label for r in recordings],
                                [r.subject_id for r in recordings], cfg.split_spec())[0])
    for result in results:
        cell_dir = out_dir / "cells" / result.config_id.replace(":", ".")
        save_params(result.params, cell_dir / "model.gzmdl")
        result.curve.write_csv(cell_dir / "curve.csv")
        write_report_csv([result.report], cell_dir / "report.csv")
        write_confusion_csv(result.report, cell_dir / "confusion.csv")
        _write_curve_dat(result.curve, cell_dir / "curve.dat")
        _say(
            cfg,
            f"cell {result.config_id}: train {result.train_accuracy_percent:.2f}% / "
            f"test {result.report.accuracy_percent:.2f}%",
        )
    write_report_csv([r.report for r in results], out_dir / "reports.csv")
    write_markdown_summary(results, cfg.train_config(), n_train, out_dir / "summary.md")
    if cfg.save_images:
        _save_image_stacks(cfg, recordings, grid, out_dir)
    best = best_cell(results)
    _say(cfg, f"best configuration: {best.config_id} "
              f"({best.report.accuracy_percent:.2f}% test accuracy)")
    _say(cfg, f"completed {len(results)} grid cell(s); reports in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_cohort_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--per-class", dest="per_class", type=int, help="recordings per class")
    parser.add_argument("--dispersion-asd", dest="dispersion_asd", type=float)
    parser.add_argument("--dispersion-td", dest="dispersion_td", type=float)
    parser.add_argument("--n-aoi", dest="n_aoi", type=int)
    parser.add_argument("--path-restriction", dest="path_restriction_asd", type=float)
    parser.add_argument("--fixations-min", dest="fixations_min", type=int)
    parser.add_argument("--fixations-max", dest="fixations_max", type=int)


def _add_screen_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--screen-width", dest="screen_width", type=int)
    parser.add_argument("--screen-height", dest="screen_height", type=int)


def _add_render_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rep-width", dest="rep_width", type=int)
    parser.add_argument("--rep-height", dest="rep_height", type=int)
    parser.add_argument("--sigma", dest="sigma", type=float)
    parser.add_argument("--line-thickness", dest="line_thickness", type=int)
    parser.add_argument("--marker-scale", dest="marker_radius_ms_scale", type=float)
    parser.add_argument(
        "--duration-weighted",
        dest="duration_weighted",
        action=argparse.BooleanOptionalAction,
        default=None,
    )


def _add_split_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    parser.add_argument(
        "--stratified", dest="stratified", action=argparse.BooleanOptionalAction, default=None
    )
    parser.add_argument(
        "--group-by-subject",
        dest="group_by_subject",
        action=argparse.BooleanOptionalAction,
        default=None,
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", dest="epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr", dest="learning_rate", type=float)
    parser.add_argument("--input-side", dest="input_side", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaze2class",
        description="Render gaze recordings to images, transform them, and train a classifier.",
    )
    parser.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--out-dir", dest="out_dir", default=None, help="output directory")
    parser.add_argument(
        "--quiet", dest="quiet", action=argparse.BooleanOptionalAction, default=None
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic gaze CSV cohort")
    _add_cohort_flags(p)
    _add_screen_flags(p)
    p.add_argument("--output", default=None, help="CSV path (default <out-dir>/gaze.csv)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("render", help="rasterize recordings into images")
    p.add_argument("--input", required=True, help="gaze CSV path")
    p.add_argument("--rep", required=True, choices=[r.value for r in Representation])
    _add_screen_flags(p)
    _add_render_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("transform", help="apply an image transform to rendered images")
    p.add_argument("--in-dir", dest="in_dir", required=True, help="directory of .gzimg images")
    p.add_argument("--kind", required=True, choices=[k.value for k in TransformKind])
    p.add_argument("--levels", dest="levels", type=int)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="split, train, and checkpoint the classifier")
    p.add_argument("--images", required=True, help="directory of .gzimg images")
    p.add_argument("--recordings", required=True, help="gaze CSV supplying the labels")
    _add_screen_flags(p)
    _add_split_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the held-out test split")
    p.add_argument("--checkpoint", required=True, help="model.gzmdl path")
    p.add_argument("--images", required=True, help="directory of .gzimg images")
    p.add_argument("--recordings", required=True, help="gaze CSV supplying the labels")
    p.add_argument("--curve", default=None, help="curve.csv to reformat as gnuplot data")
    _add_screen_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the full grid: generate/load -> ... -> report")
    p.add_argument("--grid", dest="grid", default=None, help='cells like "scanpath:haar" or "all"')
    p.add_argument("--input-csv", dest="input_csv", default=None, help="load instead of generate")
    p.add_argument(
        "--save-images",
        dest="save_images",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    _add_cohort_flags(p)
    _add_screen_flags(p)
    _add_render_flags(p)
    _add_split_flags(p)
    _add_train_flags(p)
    p.add_argument("--levels", dest="levels", type=int)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except TrainingError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
