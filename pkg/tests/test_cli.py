import hashlib

import numpy as np
import pytest

from gaze2class import load_params, load_recordings, read_raw
from gaze2class.classifier import init_params, load_curve_csv
from gaze2class.cli import main, parse_config_file, resolve_config, build_parser
from gaze2class.seeding import derive_seed


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def cohort_csv(tmp_path):
    out = tmp_path / "run"
    assert run("--seed", 1, "--out-dir", out, "generate", "--per-class", 14) == 0
    return out / "gaze.csv"


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def test_generate_counts_and_determinism(tmp_path, capsys):
    out = tmp_path / "a"
    assert run("--seed", 1, "--out-dir", out, "generate", "--per-class", 14) == 0
    printed = capsys.readouterr().out
    assert "ASD: 14 recordings" in printed
    assert "TD: 14 recordings" in printed
    recs = load_recordings(out / "gaze.csv")
    assert len(recs) == 28
    out2 = tmp_path / "b"
    assert run("--seed", 1, "--out-dir", out2, "generate", "--per-class", 14) == 0
    assert sha(out / "gaze.csv") == sha(out2 / "gaze.csv")


def test_generate_rejects_zero_per_class(tmp_path):
    assert run("--out-dir", tmp_path, "generate", "--per-class", 0) == 2


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


def test_render_counts_and_idempotence(tmp_path, cohort_csv):
    img_dir = tmp_path / "img"
    assert run("--out-dir", img_dir, "render", "--input", cohort_csv, "--rep", "heatmap") == 0
    pgms = sorted(img_dir.glob("*.pgm"))
    raws = sorted(img_dir.glob("*.gzimg"))
    assert len(pgms) == 28 and len(raws) == 28
    assert pgms[0].name.endswith(".heatmap.pgm")
    hashes = [sha(p) for p in raws]
    img_dir2 = tmp_path / "img2"
    assert run("--out-dir", img_dir2, "render", "--input", cohort_csv, "--rep", "heatmap") == 0
    assert [sha(p) for p in sorted(img_dir2.glob("*.gzimg"))] == hashes


def test_render_unknown_representation_usage_error(tmp_path, cohort_csv):
    with pytest.raises(SystemExit) as err:
        run("--out-dir", tmp_path, "render", "--input", cohort_csv, "--rep", "foo")
    assert err.value.code == 2


def test_render_missing_input_is_data_error(tmp_path):
    assert run("--out-dir", tmp_path, "render", "--input", tmp_path / "no.csv",
               "--rep", "heatmap") == 3


# ---------------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------------


@pytest.fixture
def rendered_dir(tmp_path, cohort_csv):
    img_dir = tmp_path / "img"
    assert run("--out-dir", img_dir, "render", "--input", cohort_csv, "--rep", "scanpath") == 0
    return img_dir


def test_transform_identity_byte_identical(tmp_path, rendered_dir):
    out = tmp_path / "tr"
    assert run("--out-dir", out, "transform", "--in-dir", rendered_dir, "--kind", "identity") == 0
    for src in sorted(rendered_dir.glob("*.gzimg")):
        dst = out / src.name.replace(".gzimg", ".identity.gzimg")
        assert dst.exists()
        assert sha(src) == sha(dst)


def test_transform_haar_shapes(tmp_path, rendered_dir):
    out = tmp_path / "tr"
    assert run("--out-dir", out, "transform", "--in-dir", rendered_dir, "--kind", "haar") == 0
    files = sorted(out.glob("*.haar.gzimg"))
    assert len(files) == 28
    for f in files:
        assert read_raw(f).shape == (64, 64)


def test_transform_fft_center_symmetry(tmp_path, rendered_dir):
    out = tmp_path / "tr"
    assert run("--out-dir", out, "transform", "--in-dir", rendered_dir, "--kind", "fft") == 0
    img = read_raw(sorted(out.glob("*.fft.gzimg"))[0])
    h, w = img.shape
    # magnitude symmetry about the DC bin, checked away from Nyquist edges
    inner = img[1:, 1:]
    assert np.max(np.abs(inner - inner[::-1, ::-1])) < 1e-9


def test_transform_empty_dir_is_data_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("--out-dir", tmp_path, "transform", "--in-dir", empty, "--kind", "fft") == 3


# ---------------------------------------------------------------------------
# train / evaluate
# ---------------------------------------------------------------------------


def test_train_logs_counts_and_reruns_identically(tmp_path, rendered_dir, cohort_csv, capsys):
    out = tmp_path / "model"
    code = run("--seed", 4, "--out-dir", out, "train", "--images", rendered_dir,
               "--recordings", cohort_csv, "--epochs", 2)
    assert code == 0
    printed = capsys.readouterr().out
    assert "train/test membership: 22/6" in printed  # 80/20 of 28, stratified
    assert "iterations/epoch: 3" in printed
    curve = load_curve_csv(out / "curve.csv")
    assert curve.iterations_in_epoch(1) == 3
    out2 = tmp_path / "model2"
    assert run("--seed", 4, "--out-dir", out2, "train", "--images", rendered_dir,
               "--recordings", cohort_csv, "--epochs", 2) == 0
    assert sha(out / "curve.csv") == sha(out2 / "curve.csv")
    assert sha(out / "model.gzmdl") == sha(out2 / "model.gzmdl")


def test_train_zero_lr_checkpoint_equals_init(tmp_path, rendered_dir, cohort_csv):
    out = tmp_path / "model"
    assert run("--seed", 6, "--out-dir", out, "train", "--images", rendered_dir,
               "--recordings", cohort_csv, "--epochs", 1, "--lr", 0) == 0
    params = load_params(out / "model.gzmdl")
    init = init_params(derive_seed(6, "train"), 64)
    for (_, a), (_, b) in zip(params.tensors(), init.tensors()):
        assert np.array_equal(a, b)


def test_evaluate_report_and_recount(tmp_path, rendered_dir, cohort_csv):
    model_dir = tmp_path / "model"
    assert run("--seed", 4, "--out-dir", model_dir, "train", "--images", rendered_dir,
               "--recordings", cohort_csv, "--epochs", 2) == 0
    eval_dir = tmp_path / "eval"
    assert run("--seed", 4, "--out-dir", eval_dir, "evaluate",
               "--checkpoint", model_dir / "model.gzmdl",
               "--images", rendered_dir, "--recordings", cohort_csv) == 0
    report_line = (eval_dir / "report.csv").read_text().splitlines()[1]
    cid, acc, tp, fn, fp, tn = report_line.split(",")
    counts = [int(v) for v in (tp, fn, fp, tn)]
    assert sum(counts) == 6
    assert float(acc) == pytest.approx(100.0 * (counts[0] + counts[3]) / 6, abs=0.005)
    assert (eval_dir / "confusion.csv").exists()
    assert (eval_dir / "curve.dat").exists()


def test_evaluate_missing_checkpoint(tmp_path, rendered_dir, cohort_csv):
    assert run("--out-dir", tmp_path, "evaluate", "--checkpoint", tmp_path / "no.gzmdl",
               "--images", rendered_dir, "--recordings", cohort_csv) == 3


def test_evaluate_always_class0_baseline_gives_50_percent(tmp_path, rendered_dir, cohort_csv):
    # zero weights tie both logits; ties resolve to class 0, so a balanced
    # test split scores exactly 50.00
    import numpy as np

    from gaze2class import ModelParams, save_params
    from gaze2class.classifier import init_params

    params = init_params(0, 64)
    zero = ModelParams(*(np.zeros_like(arr) for _, arr in params.tensors()))
    ckpt = tmp_path / "zero.gzmdl"
    save_params(zero, ckpt)
    out = tmp_path / "eval"
    assert run("--seed", 4, "--out-dir", out, "evaluate", "--checkpoint", ckpt,
               "--images", rendered_dir, "--recordings", cohort_csv) == 0
    line = (out / "report.csv").read_text().splitlines()[1]
    _, acc, tp, fn, fp, tn = line.split(",")
    assert acc == "50.00"
    assert (int(tp), int(fn), int(fp), int(tn)) == (3, 0, 3, 0)


# ---------------------------------------------------------------------------
# pipeline + config handling
# ---------------------------------------------------------------------------


def test_pipeline_single_cell_and_idempotence(tmp_path):
    out = tmp_path / "p1"
    code = run("--seed", 2, "--out-dir", out, "pipeline", "--per-class", 10,
               "--epochs", 2, "--grid", "scanpath:haar")
    assert code == 0
    cells = sorted(p.name for p in (out / "cells").iterdir())
    assert cells == ["scanpath.haar"]
    out2 = tmp_path / "p2"
    assert run("--seed", 2, "--out-dir", out2, "pipeline", "--per-class", 10,
               "--epochs", 2, "--grid", "scanpath:haar") == 0
    for rel in ("reports.csv", "cells/scanpath.haar/curve.csv",
                "cells/scanpath.haar/model.gzmdl"):
        assert sha(out / rel) == sha(out2 / rel)


def test_pipeline_save_images_writes_stacks(tmp_path):
    out = tmp_path / "p"
    assert run("--seed", 3, "--out-dir", out, "pipeline", "--per-class", 4,
               "--epochs", 1, "--grid", "fixmap:fft", "--save-images") == 0
    rendered = sorted((out / "images" / "fixmap").glob("*.gzimg"))
    transformed = sorted((out / "transformed" / "fixmap.fft").glob("*.gzimg"))
    assert len(rendered) == 8
    assert len(transformed) == 8
    assert transformed[0].name.endswith(".fixmap.fft.gzimg")


def test_pipeline_unknown_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("per_class = 5\nwat = 1\n")
    assert run("--config", cfg, "--out-dir", tmp_path, "pipeline") == 2


def test_pipeline_loads_existing_csv_instead_of_generating(tmp_path, cohort_csv):
    out = tmp_path / "p"
    assert run("--seed", 9, "--out-dir", out, "pipeline", "--input-csv", cohort_csv,
               "--epochs", 1, "--grid", "heatmap:identity") == 0
    assert not (out / "gaze.csv").exists()  # loaded, not regenerated
    assert (out / "cells" / "heatmap.identity" / "report.csv").exists()


def test_pipeline_failing_cell_names_the_cell(tmp_path, capsys):
    # per-class 1 leaves an empty test split, so evaluation fails inside the cell
    code = run("--out-dir", tmp_path / "p", "pipeline", "--per-class", 1,
               "--epochs", 1, "--grid", "scanpath:fft")
    assert code == 3
    assert "cell scanpath:fft" in capsys.readouterr().err


def test_config_precedence_flag_over_file_over_default(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment line\nepochs = 3\nsigma = 4.5\n")
    parser = build_parser()

    args = parser.parse_args(["--config", str(cfg_file), "pipeline"])
    cfg = resolve_config(args)
    assert cfg.epochs == 3          # file beats default (10)
    assert cfg.sigma == 4.5
    assert cfg.batch_size == 10     # untouched default

    args = parser.parse_args(["--config", str(cfg_file), "pipeline", "--epochs", "7"])
    cfg = resolve_config(args)
    assert cfg.epochs == 7          # flag beats file


def test_config_file_parsing_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs: 3\n")
    from gaze2class import ConfigError

    with pytest.raises(ConfigError, match="key=value"):
        parse_config_file(bad)
    bad.write_text("epochs = many\n")
    with pytest.raises(ConfigError, match="expected int"):
        parse_config_file(bad)
    bad.write_text("stratified = maybe\n")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config_file(bad)


def test_quiet_suppresses_output(tmp_path, capsys):
    assert run("--quiet", "--out-dir", tmp_path, "generate", "--per-class", 2) == 0
    assert capsys.readouterr().out == ""
