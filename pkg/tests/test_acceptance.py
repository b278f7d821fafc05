"""Acceptance criteria, one group of tests per criterion.

A summary line per criterion is printed at the end of the pytest run (see
conftest.py). Criterion 1 and the full-preset gradient checks take several
minutes on one core.
"""
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from olivine import cli
from olivine import model as M
from olivine.augment import IDENTITY, AugmentConfig, augment_sample, flip, rotate
from olivine.dataset import (
    Batch, ManifestRecord, SplitSpec, read_manifest, split_counts, stratified_split, write_manifest,
)
from olivine.evaluate import derive_metrics
from olivine.imageio import Image, read_pnm, write_pnm
from olivine.preprocess import SegmentationError, otsu_threshold
from olivine.rng import make_rng
from olivine.train import TrainConfig, gradient_check, gradient_check_report, train_loop
from oracles import otsu_exhaustive
from test_model import LAYER_CASES, layer_gradient_error

criterion = pytest.mark.criterion
GRAD_TOL = 1e-4


def run_cli(*args):
    code = cli.main([str(a) for a in args])
    assert code == 0, f"olivine {' '.join(map(str, args))} exited {code}"


def read_kv(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


# ------------------------------------------------------------------ criterion 1

@pytest.fixture(scope="module")
def benchmark_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    (root / "run.cfg").write_text("data.image_size = 64\n")
    run_cli("synth", "--out", root / "raw", "--per-class", 100, "--seed", 7)
    run_cli("ingest", "--root", root / "raw", "--manifest", root / "raw.csv")
    run_cli("split", "--manifest", root / "raw.csv", "--seed", 7, "--config", root / "run.cfg")
    run_cli("preprocess", "--manifest", root / "raw.csv", "--out", root / "prep", "--config", root / "run.cfg")
    return root


@pytest.mark.slow
@criterion(1, "synthetic benchmark: efficientnetb0 >= 90%, mobilenetv2 >= 85%, each <= 10 min")
@pytest.mark.parametrize("preset,threshold", [("mini-efficientnetb0", 0.90), ("mini-mobilenetv2", 0.85)])
def test_c1_synthetic_benchmark(benchmark_data, preset, threshold, monkeypatch, capsys):
    monkeypatch.setenv("OLIVINE_THREADS", "0")
    root = benchmark_data
    counts = split_counts(read_manifest((root / "prep" / "manifest.csv").read_bytes()))
    assert all(c == {"train": 80, "val": 10, "test": 10} for c in counts.values())
    ckpt = root / f"{preset}.olwt"
    start = time.perf_counter()
    run_cli("train", "--manifest", root / "prep" / "manifest.csv", "--model", preset,
            "--config", root / "run.cfg", "--out", ckpt)
    elapsed = time.perf_counter() - start
    run_cli("evaluate", "--manifest", root / "prep" / "manifest.csv", "--ckpt", ckpt,
            "--compare-paper", "--kv", root / f"{preset}.kv")
    acc = float(read_kv(root / f"{preset}.kv")["accuracy"])
    with capsys.disabled():
        print(f"\n{preset}: test accuracy {acc:.4f}, training {elapsed:.0f} s")
    assert acc >= threshold
    assert elapsed <= 600


# ------------------------------------------------------------------ criterion 2

def _structured_images():
    out = []
    for i in range(20):
        rng = make_rng(200, i)
        lo, hi = sorted(rng.choice(256, 2, replace=False).tolist())
        arr = np.full((32, 32), lo)
        y0, x0 = rng.integers(0, 16, 2)
        arr[y0 : y0 + rng.integers(4, 16), x0 : x0 + rng.integers(4, 16)] = hi
        out.append(arr)
    return out


@criterion(2, "Otsu equals the exhaustive sigma_b^2 scan; single-level images error")
def test_c2_otsu_oracle():
    images = [make_rng(100, i).integers(0, 256, (32, 32)) for i in range(200)] + _structured_images()
    for arr in images:
        assert otsu_threshold(Image(arr.astype(np.uint8)[:, :, None])) == otsu_exhaustive(arr)
    for level in (0, 17, 255):
        with pytest.raises(SegmentationError):
            otsu_threshold(Image(np.full((32, 32, 1), level, np.uint8)))


# ------------------------------------------------------------------ criterion 3

@criterion(3, "gradient checks <= 1e-4 (layers, both presets at 16x16, float64); fault injection > 0.3")
@pytest.mark.parametrize("case", sorted(LAYER_CASES))
def test_c3_layer_gradients(case):
    assert layer_gradient_error(LAYER_CASES[case]()) <= GRAD_TOL


def _preset_case(preset):
    model = M.build_preset(preset, 5, 3, 16)
    params = M.init_params(model, make_rng(0))
    x = make_rng(0, 1).standard_normal((4, 3, 16, 16))
    return model, params, Batch(x, [0, 1, 2, 3])


@pytest.mark.slow
@criterion(3, "gradient checks <= 1e-4 (layers, both presets at 16x16, float64); fault injection > 0.3")
@pytest.mark.parametrize("preset", M.PRESETS)
def test_c3_preset_gradients_float64(preset, capsys):
    report = gradient_check_report(*_preset_case(preset))
    with capsys.disabled():
        print(f"\n{preset} float64: max rel err {report.max_error:.3e} at {report.worst}, "
              f"{report.checked} checked, {report.skipped_kinks} skipped at kinks")
    assert report.max_error <= GRAD_TOL


@criterion(3, "gradient checks <= 1e-4 (layers, both presets at 16x16, float64); fault injection > 0.3")
def test_c3_fault_injection():
    model, params, batch = _preset_case("mini-efficientnetb0")
    err = gradient_check(model, params, batch, max_params=50, corrupt=("block3.dw.weight", 5))
    assert err > 0.3


# ------------------------------------------------------------------ criterion 4

@criterion(4, "metrics reproduce hand values to 1e-12; diagonal matrices give all ones")
def test_c4_metrics():
    m = derive_metrics(np.array([[8, 2], [1, 9]]))
    p0 = 8 / 9
    assert abs(m.accuracy - 0.85) <= 1e-12
    assert abs(m.precision[0] - p0) <= 1e-12
    assert abs(m.f1[0] - 2 * p0 * 0.8 / (p0 + 0.8)) <= 1e-12
    for diag in ([1, 1], [4, 9, 2], [3, 3, 3, 3, 3]):
        d = derive_metrics(np.diag(diag))
        assert d.accuracy == d.macro_precision == d.macro_recall == d.macro_f1 == 1.0
        assert d.precision == d.recall == d.f1 == [1.0] * len(diag)


# ------------------------------------------------------------------ criterion 5

def _records(n, classes=("a", "b", "c")):
    return [ManifestRecord(f"{c}/{i:04d}.ppm", c, k) for k, c in enumerate(classes) for i in range(n)]


@criterion(5, "split counts 400/50/50 and 4/1/2; seed-determined and input-order independent")
def test_c5_split():
    for n, expected in ((500, (400, 50, 50)), (7, (4, 1, 2))):
        for c in split_counts(stratified_split(_records(n), SplitSpec(), seed=3)).values():
            assert (c["train"], c["val"], c["test"]) == expected
    recs = _records(50)
    a = stratified_split(recs, seed=11)
    b = stratified_split([recs[i] for i in make_rng(5).permutation(len(recs))], seed=11)
    assert sorted(a, key=lambda r: r.path) == sorted(b, key=lambda r: r.path)


# ------------------------------------------------------------------ criterion 6

@criterion(6, "early stopping on [.5,.6,.6,.6,.6,.6,.6] with patience 5 keeps epoch 2")
def test_c6_early_stopping():
    model = M.build_preset("mini-mobilenetv2", 3, 3, 8)
    params = M.init_params(model, make_rng(0))
    batch = Batch(make_rng(1).standard_normal((3, 3, 8, 8)).astype(np.float32), [0, 1, 2])
    script = [.5, .6, .6, .6, .6, .6, .6, .9, .9, .9]
    seen = []

    def evaluate(m, p):
        seen.append(script[len(seen)])
        return 1.0, seen[-1]

    result = train_loop(model, params, lambda e: [batch], lambda: [], TrainConfig(early_stop_patience=5), evaluate)
    # epochs 3..7 bring no improvement, so the loop stops before the .9 is consumed
    assert len(seen) == 7 and len(result.history) == 7
    assert result.best_epoch == 2
    _, meta = M.load_checkpoint(result.checkpoint, model)
    assert meta.epoch == 2 and abs(meta.best_val_metric - 0.6) < 1e-7


# ------------------------------------------------------------------ criterion 7

@pytest.mark.slow
@criterion(7, "after freeze + 5 fine-tune epochs only head entries change")
def test_c7_transfer_freezing(tmp_path, monkeypatch):
    monkeypatch.setenv("OLIVINE_THREADS", "0")
    (tmp_path / "pre.cfg").write_text("data.image_size = 32\ntrain.max_epochs = 2\n")
    (tmp_path / "ft.cfg").write_text("data.image_size = 32\ntrain.max_epochs = 5\ntrain.early_stop_patience = 5\n")
    run_cli("synth", "--out", tmp_path / "raw", "--per-class", 10, "--seed", 3, "--size", 48)
    run_cli("ingest", "--root", tmp_path / "raw", "--manifest", tmp_path / "m.csv")
    run_cli("split", "--manifest", tmp_path / "m.csv", "--seed", 3)
    run_cli("train", "--manifest", tmp_path / "m.csv", "--model", "mini-mobilenetv2",
            "--config", tmp_path / "pre.cfg", "--out", tmp_path / "pre.olwt")
    run_cli("train", "--manifest", tmp_path / "m.csv", "--model", "mini-mobilenetv2", "--freeze",
            "--init", tmp_path / "pre.olwt", "--config", tmp_path / "ft.cfg", "--out", tmp_path / "ft.olwt")
    _, init, _ = M.read_checkpoint((tmp_path / "pre.olwt").read_bytes())
    _, tuned, _ = M.read_checkpoint((tmp_path / "ft.olwt").read_bytes())
    assert list(init) == list(tuned)
    changed = {k for k in init if init[k].tobytes() != tuned[k].tobytes()}
    assert changed == {"classifier.dense.weight", "classifier.dense.bias"}


# ------------------------------------------------------------------ criterion 8

@criterion(8, "PNM, OLWT checkpoint and manifest CSV round trips are identities")
def test_c8_round_trips():
    for i in range(50):
        rng = make_rng(800, i)
        h, w = rng.integers(1, 40, 2)
        img = Image(rng.integers(0, 256, (h, w, rng.choice([1, 3])), dtype=np.uint8))
        data = write_pnm(img)
        assert read_pnm(data) == img
        assert write_pnm(read_pnm(data)) == data
    for preset in M.PRESETS:
        model = M.build_preset(preset, 5, 3, 32)
        params = M.init_params(model, make_rng(8))
        blob = M.save_checkpoint(model, params, M.CheckpointMeta(4, 0.875))
        loaded, meta = M.load_checkpoint(blob, model)
        assert all(loaded[k].tobytes() == params[k].tobytes() for k in params)
        assert M.save_checkpoint(model, loaded, meta) == blob
    recs = stratified_split(_records(9), seed=1)
    data = write_manifest(recs)
    assert read_manifest(data) == recs and write_manifest(read_manifest(data)) == data


# ------------------------------------------------------------------ criterion 9

@criterion(9, "augmentation algebra: flip involution, rotate identities, zero config, determinism")
def test_c9_augmentation_algebra():
    cfg = AugmentConfig()
    for i in range(30):
        rng = make_rng(900, i)
        n = int(rng.integers(1, 24))
        c = int(rng.choice([1, 3]))
        sq = Image(rng.integers(0, 256, (n, n, c), dtype=np.uint8))
        rect = Image(rng.integers(0, 256, (n, n + 3, c), dtype=np.uint8))
        for img in (sq, rect):
            assert flip(flip(img, "horizontal"), "horizontal") == img
            assert flip(flip(img, "vertical"), "vertical") == img
            assert rotate(img, 0.0) == img
            assert augment_sample(img, IDENTITY, make_rng(i)) == img
            assert augment_sample(img, cfg, make_rng(7, i)) == augment_sample(img, cfg, make_rng(7, i))
        turned = sq
        for _ in range(4):
            turned = rotate(turned, 90.0)
        assert turned == sq


# ------------------------------------------------------------------ criterion 10

def _chain(workdir):
    env = dict(os.environ, OLIVINE_THREADS="0")
    workdir.mkdir()
    (workdir / "run.cfg").write_text("data.image_size = 24\ntrain.max_epochs = 3\ntrain.batch_size = 8\n")
    steps = [
        ["synth", "--out", "raw", "--per-class", "8", "--seed", "5", "--size", "48"],
        ["ingest", "--root", "raw", "--manifest", "raw.csv"],
        ["split", "--manifest", "raw.csv", "--seed", "5"],
        ["preprocess", "--manifest", "raw.csv", "--out", "prep", "--config", "run.cfg"],
        ["train", "--manifest", "prep/manifest.csv", "--model", "mini-efficientnetb0",
         "--config", "run.cfg", "--out", "model.olwt"],
        ["evaluate", "--manifest", "prep/manifest.csv", "--ckpt", "model.olwt", "--out", "report.txt"],
    ]
    for step in steps:
        subprocess.run([sys.executable, "-m", "olivine", *step], cwd=workdir, env=env, check=True,
                       capture_output=True)
    return {name: (workdir / name).read_bytes() for name in ("model.olwt", "model.curves.csv", "report.txt")}


@pytest.mark.slow
@criterion(10, "two identical CLI chains give byte-identical checkpoint, curves and report")
def test_c10_end_to_end_determinism(tmp_path):
    first = _chain(tmp_path / "one")
    second = _chain(tmp_path / "two")
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
