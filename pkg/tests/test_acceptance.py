"""Acceptance suite: every criterion at its stated tolerance, one line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
PASS/FAIL lines. The determinism criterion at the end runs the full
nine-cell pipeline twice and is the slow one (several minutes).
"""

import cmath
import hashlib
import math
import time
from contextlib import contextmanager

import numpy as np

from gaze2class import (
    CohortSpec,
    Diagnosis,
    RenderSpec,
    Representation,
    SplitSpec,
    TrainConfig,
    TransformKind,
    backward,
    cross_entropy,
    dft2,
    evaluate,
    forward,
    gaussian_kernel,
    generate_cohort,
    haar_decompose,
    haar_reconstruct,
    init_params,
    render,
    render_heatmap,
    train,
)
from gaze2class.classifier import _predict_probs
from gaze2class.cli import main
from gaze2class.evaluation import dataset_from_images, prepare_images
from gaze2class.gaze_data import split_indices

from conftest import random_recording


@contextmanager
def criterion(number, description):
    started = time.time()
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {description}")
        raise
    print(f"[PASS] criterion {number}: {description} ({time.time() - started:.1f}s)")


# ---------------------------------------------------------------------------
# 1. Heatmap oracle equivalence
# ---------------------------------------------------------------------------


def test_criterion_1_heatmap_oracle_equivalence():
    with criterion(1, "heatmap matches brute-force kernel sum within 1e-9 relative"):
        started = time.time()
        spec = RenderSpec(out_width=32, out_height=32, sigma=1.5)
        norm = 1.0 / (2.0 * math.pi * spec.sigma**2)
        inv = 1.0 / (2.0 * spec.sigma**2)
        rng = np.random.default_rng(1001)
        worst = 0.0
        for _ in range(100):
            rec = random_recording(rng, int(rng.integers(1, 11)), screen=(32, 32))
            got = render_heatmap(rec, spec, exact=True)
            centers = [(p.x, p.y) for p in rec.points]  # identity affine here
            for py in range(32):
                for px in range(32):
                    want = 0.0
                    for fx, fy in centers:
                        want += norm * math.exp(-((px - fx) ** 2 + (py - fy) ** 2) * inv)
                    worst = max(worst, abs(got[py, px] - want) / want)
        assert worst < 1e-9, f"worst per-pixel relative error {worst}"
        assert time.time() - started < 5.0


# ---------------------------------------------------------------------------
# 2. Gaussian kernel spot values
# ---------------------------------------------------------------------------


def test_criterion_2_gaussian_kernel_spot_values():
    with criterion(2, "kernel spot values at (0,0;1) and (1,0;1) within 1e-12"):
        assert abs(gaussian_kernel(0, 0, 1.0) - 0.15915494309189535) < 1e-12
        assert abs(gaussian_kernel(1, 0, 1.0) - 0.09653235263005391) < 1e-12


# ---------------------------------------------------------------------------
# 3. Haar round-trip and energy conservation
# ---------------------------------------------------------------------------


def test_criterion_3_haar_roundtrip_and_energy():
    with criterion(3, "1000 Haar round-trips < 1e-9 and energy conserved to 1e-9"):
        started = time.time()
        rng = np.random.default_rng(1003)
        for _ in range(1000):
            h = 2 * int(rng.integers(1, 33))
            w = 2 * int(rng.integers(1, 33))
            img = rng.random((h, w))
            dec = haar_decompose(img)
            back = haar_reconstruct(dec)
            assert np.max(np.abs(back - img)) < 1e-9
            energy = sum(np.sum(b**2) for b in (dec.ll, dec.lh, dec.hl, dec.hh))
            ref = np.sum(img**2)
            assert abs(energy - ref) / ref < 1e-9
        assert time.time() - started < 10.0


# ---------------------------------------------------------------------------
# 4. FFT correctness: naive DFT oracle + Parseval
# ---------------------------------------------------------------------------


def _naive_dft2(img):
    h, w = img.shape
    tw_h = [cmath.exp(-2j * cmath.pi * k / h) for k in range(h)]
    tw_w = [cmath.exp(-2j * cmath.pi * k / w) for k in range(w)]
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            total = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    total += img[y, x] * tw_h[(u * y) % h] * tw_w[(v * x) % w]
            out[u, v] = total
    return out


def test_criterion_4_fft_against_naive_dft_and_parseval():
    with criterion(4, "FFT matches naive DFT on sizes 2-16 and Parseval holds"):
        started = time.time()
        rng = np.random.default_rng(1004)
        for h in range(2, 17):
            for w in range(2, 17):
                img = rng.random((h, w))
                got = np.abs(dft2(img))
                want = np.abs(_naive_dft2(img))
                assert np.max(np.abs(got - want)) < 1e-8, f"size {h}x{w}"
        for _ in range(100):
            img = rng.random((32, 32))
            f = dft2(img)
            lhs = float(np.sum(np.abs(f) ** 2))
            rhs = 32 * 32 * float(np.sum(img**2))
            assert abs(lhs - rhs) / rhs < 1e-8
        assert time.time() - started < 30.0


# ---------------------------------------------------------------------------
# 5. Gradient check against central finite differences
# ---------------------------------------------------------------------------


def test_criterion_5_gradient_check():
    with criterion(5, "analytic gradients match central differences (rel < 1e-6)"):
        started = time.time()
        eps = 1e-5
        # fixed draws, chosen clear of ReLU kinks where finite differences
        # measure the wrong one-sided slope
        for pair, seed in enumerate((11, 12, 13, 14, 15)):
            rng = np.random.default_rng(seed)
            params = init_params(seed, 16)
            img = rng.random((16, 16))
            label = Diagnosis.ASD if pair % 2 == 0 else Diagnosis.TD
            _, cache = forward(params, img)
            analytic = dict(backward(params, cache, label).tensors())

            def loss():
                pred, _ = forward(params, img)
                return cross_entropy(pred, label)

            for name, arr in params.tensors():
                flat = arr.ravel()
                numeric = np.zeros_like(flat)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps
                    lp = loss()
                    flat[i] = orig - eps
                    lm = loss()
                    flat[i] = orig
                    numeric[i] = (lp - lm) / (2.0 * eps)
                numeric = numeric.reshape(arr.shape)
                scale = max(np.max(np.abs(analytic[name])), np.max(np.abs(numeric)), 1e-12)
                rel = np.max(np.abs(analytic[name] - numeric)) / scale
                assert rel < 1e-6, f"pair {pair} tensor {name}: rel error {rel}"
        assert time.time() - started < 60.0


# ---------------------------------------------------------------------------
# 6. Training sanity on the separable synthetic cohort
# ---------------------------------------------------------------------------


SEPARABLE_COHORT = CohortSpec(
    n_per_class=100,
    dispersion_asd=120.0,
    dispersion_td=30.0,
    n_aoi=5,
    path_restriction_asd=0.8,
    seed=11,
)


def test_criterion_6_training_sanity():
    with criterion(6, "defaults reach >= 90% test accuracy on the separable cohort"):
        started = time.time()
        recordings = generate_cohort(SEPARABLE_COHORT)
        assert len(recordings) == 200
        spec = RenderSpec(representation=Representation.SCANPATH)
        images = np.stack([render(rec, spec) for rec in recordings])
        prepared = prepare_images(images, TransformKind.IDENTITY, 64)
        dataset = dataset_from_images(prepared, recordings)
        split = SplitSpec(seed=5)
        train_idx, test_idx = split_indices(dataset.labels(), dataset.subjects(), split)

        # separability oracle: nearest-centroid already solves the task
        flat = dataset.images().reshape(len(dataset), -1)
        y = dataset.label_indices()
        mu0 = flat[train_idx][y[train_idx] == 0].mean(axis=0)
        mu1 = flat[train_idx][y[train_idx] == 1].mean(axis=0)
        d0 = ((flat[test_idx] - mu0) ** 2).sum(axis=1)
        d1 = ((flat[test_idx] - mu1) ** 2).sum(axis=1)
        centroid_acc = float(np.mean((d1 < d0).astype(int) == y[test_idx]))
        assert centroid_acc >= 0.8, "cohort is not separable enough to test training"

        cfg = TrainConfig()  # the defaults under test: 10 epochs, batch 10, lr 0.01
        params, curve = train(dataset.subset(train_idx), cfg)
        report = evaluate(params, dataset.subset(test_idx))
        assert report.accuracy_percent >= 90.0, f"test accuracy {report.accuracy_percent}"
        assert curve.epoch_mean_loss(cfg.epochs) < curve.epoch_mean_loss(1)
        assert time.time() - started < 120.0


# ---------------------------------------------------------------------------
# 7. Protocol fidelity: 80/20 of 600, 48 iterations/epoch, exact accuracy
# ---------------------------------------------------------------------------


def test_criterion_7_protocol_fidelity():
    with criterion(7, "600 samples split 480/120, 48 iterations/epoch, exact accuracy"):
        recordings = generate_cohort(CohortSpec())  # defaults: 300 per class
        assert len(recordings) == 600
        spec = RenderSpec(representation=Representation.SCANPATH)
        images = np.stack([render(rec, spec) for rec in recordings])
        dataset = dataset_from_images(
            prepare_images(images, TransformKind.IDENTITY, 64), recordings
        )
        train_idx, test_idx = split_indices(dataset.labels(), dataset.subjects(), SplitSpec())
        assert len(train_idx) == 480
        assert len(test_idx) == 120

        cfg = TrainConfig()
        params, curve = train(dataset.subset(train_idx), cfg)
        for epoch in range(1, cfg.epochs + 1):
            assert curve.iterations_in_epoch(epoch) == 48

        test_set = dataset.subset(test_idx)
        report = evaluate(params, test_set)
        # integer recount oracle over per-sample predictions
        probs = _predict_probs(params, test_set.images())
        pred_idx = np.argmax(probs, axis=1)
        correct = sum(1 for t, p in zip(test_set.label_indices(), pred_idx) if int(t) == int(p))
        assert report.accuracy_percent == 100.0 * correct / 120
        assert int(np.trace(report.confusion)) == correct


# ---------------------------------------------------------------------------
# 8. End-to-end determinism of the nine-cell pipeline
# ---------------------------------------------------------------------------


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_criterion_8_pipeline_determinism(tmp_path):
    with criterion(8, "two seeded pipeline runs are byte-identical across 9 cells"):
        started = time.time()
        outs = []
        for run_dir in ("one", "two"):
            out = tmp_path / run_dir
            code = main(["--seed", "12345", "--quiet", "--out-dir", str(out), "pipeline"])
            assert code == 0
            outs.append(out)
        one, two = outs
        compared = 0
        for rel in sorted(p.relative_to(one) for p in one.rglob("*") if p.is_file()):
            name = rel.name
            if name.endswith(".csv") or name.endswith(".gzmdl"):
                assert _sha(one / rel) == _sha(two / rel), f"{rel} differs"
                compared += 1
        cells = sorted(p.name for p in (one / "cells").iterdir())
        assert len(cells) == 9
        # 9 cells x (report, confusion, curve, checkpoint) + reports.csv + gaze.csv
        assert compared >= 9 * 4 + 2
        assert time.time() - started < 900.0
