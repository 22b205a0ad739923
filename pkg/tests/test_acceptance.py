"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from dfr import cli, keypoint_net, svm
from dfr.data.synth import generate_dataset
from dfr.eval import report as R
from dfr.eval.bench import fps_benchmark
from dfr.eval.metrics import keypoint_errors
from dfr.geometry import angle_between_lines, extract_features, load_schema
from dfr.keypoints import CANONICAL_TEMPLATE, N_KEYPOINTS, KeypointSet
from dfr.nn import functional as F

from gradcheck import gradient_check, small_network
from oracles import conv2d_loops, dense_loops, maxpool_loops, random_conv_case, slope_formula_angle

INSTANCES = json.loads((Path(__file__).parent / "data" / "svm_instances.json").read_text())

END_TO_END_SEED = 7


def test_gradient_correctness(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    net = small_network()
    x = rng.uniform(0, 1, size=(2, 1, 32, 32))
    target = rng.uniform(0, 1, size=(2, 40))
    worst, skipped, total = gradient_check(net, x, target)
    elapsed = time.perf_counter() - start
    criterion(
        "gradient correctness",
        worst <= 1e-3 and elapsed <= 120 and skipped < 0.05 * total,
        f"max relative error {worst:.2e} over {total - skipped}/{total} parameters, {elapsed:.1f} s",
    )


def test_layer_oracles(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        x, w, b, stride, padding = random_conv_case(rng)
        out, _ = F.conv2d_forward(x, w, b, stride, padding)
        worst = max(worst, np.abs(out - conv2d_loops(x, w, b, stride, padding)).max())
        size = int(rng.integers(1, 4))
        xp = rng.normal(size=(2, 2, int(rng.integers(size, 9)), int(rng.integers(size, 9))))
        pooled, _ = F.maxpool2d_forward(xp, size, size)
        worst = max(worst, np.abs(pooled - maxpool_loops(xp, size, size)).max())
        m, k = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        xd, wd, bd = rng.normal(size=(3, k)), rng.normal(size=(m, k)), rng.normal(size=m)
        worst = max(worst, np.abs(F.dense_forward(xd, wd, bd) - dense_loops(xd, wd, bd)).max())
    elapsed = time.perf_counter() - start
    criterion("layer oracles", worst <= 1e-12 and elapsed <= 60, f"max deviation {worst:.1e} on 100 shapes, {elapsed:.1f} s")


def test_keypoint_error_arithmetic(criterion):
    gt = np.zeros((N_KEYPOINTS, 2))
    rep = keypoint_errors([gt + [3.0, 4.0]], [gt])
    ok = (rep.per_keypoint_error == 5.0).all() and rep.mae == 3.5
    criterion("keypoint error arithmetic", ok, f"error {float(rep.per_keypoint_error[0])!r}, MAE {rep.mae!r}")


def test_slope_and_angle_geometry(criterion):
    cases = [
        (((0, 0), (1, 1)), ((0, 0), (1, 0)), 45.0),
        (((0, 0), (1, 2)), ((5, 1), (6, 3)), 0.0),
        (((0, 0), (0, 1)), ((0, 0), (1, 0)), 90.0),
    ]
    unit = max(abs(angle_between_lines(a, b) - want) for a, b, want in cases)
    rng = np.random.default_rng(17)
    worst, checked = 0.0, 0
    while checked < 1000:
        p = rng.uniform(-50, 50, size=(4, 2))
        m1 = (p[1, 1] - p[0, 1]) / (p[1, 0] - p[0, 0])
        m2 = (p[3, 1] - p[2, 1]) / (p[3, 0] - p[2, 0])
        if abs(1 + m1 * m2) < 1e-6:
            continue
        a, b = (tuple(p[0]), tuple(p[1])), (tuple(p[2]), tuple(p[3]))
        worst = max(worst, abs(angle_between_lines(a, b) - slope_formula_angle(a, b)))
        checked += 1
    criterion(
        "slope and angle geometry",
        unit <= 1e-9 and worst <= 1e-9,
        f"unit cases off by {unit:.1e}, 1000 random pairs off by at most {worst:.1e}",
    )


def test_similarity_invariance(criterion):
    rng = np.random.default_rng(123)
    schema = load_schema()
    worst = 0.0
    masks_agree = True
    for _ in range(1000):
        pts = CANONICAL_TEMPLATE * rng.uniform(20, 60) + rng.uniform(0, 96, 2) + rng.normal(0, 1.5, (N_KEYPOINTS, 2))
        kps = KeypointSet(pts, rng.uniform(size=N_KEYPOINTS) > 0.1)
        moved = kps.transformed(
            scale=float(rng.uniform(0.1, 10.0)),
            angle_deg=float(rng.uniform(-180, 180)),
            shift=rng.uniform(-1000, 1000, 2),
            center=rng.uniform(0, 96, 2),
        )
        a, b = extract_features(kps, schema), extract_features(moved, schema)
        masks_agree &= bool(np.array_equal(a.mask, b.mask))
        worst = max(worst, float(np.abs(a.values - b.values).max()))
    criterion("similarity invariance", worst <= 1e-9 and masks_agree, f"max feature change {worst:.1e} over 1000 transforms")


def test_svm_matches_brute_force(criterion):
    start = time.perf_counter()
    failures = []
    for inst in INSTANCES:
        X = np.array(inst["features"], dtype=float)
        params = svm.SvmParams(kernel=inst["kernel"], C=inst["C"], gamma=inst["gamma"])
        first = sorted(set(inst["labels"]))[0]
        y = np.array([1.0 if lab == first else -1.0 for lab in inst["labels"]])
        K = svm.kernel_matrix(X, X, params.kernel, params.gamma or 1.0)
        sol = svm.smo_binary(K, y, params.C, tolerance=1e-3, max_passes=10)
        obj, alpha, bias = svm.brute_force_dual(X, inst["labels"], params, inst["grid_step"])
        n, h = len(y), inst["grid_step"]
        grid_tol = n * h * (1 + n * params.C * np.abs(K).max())
        smo_obj = svm.dual_objective(sol.alpha, K, y)
        same_pred = np.array_equal(np.sign(K @ (sol.alpha * y) + sol.bias), np.sign(K @ (alpha * y) + bias))
        if not (same_pred and abs(smo_obj - obj) <= grid_tol):
            failures.append(inst["name"])
    elapsed = time.perf_counter() - start
    criterion(
        "SVM oracle equivalence",
        not failures and elapsed <= 60,
        f"{len(INSTANCES) - len(failures)}/{len(INSTANCES)} instances agree, {elapsed:.1f} s" + (f"; failed {failures}" if failures else ""),
    )


def _run(*argv):
    code = cli.main([str(a) for a in argv])
    assert code == 0, f"dfr {' '.join(map(str, argv))} exited {code}"


@pytest.mark.slow
def test_end_to_end_synthetic_pipeline(criterion, tmp_path):
    seed = END_TO_END_SEED
    start = time.perf_counter()
    _run("synth", "--out", tmp_path / "data", "--subjects", 10, "--per-subject", 40, "--seed", seed)
    _run("train-kp", "--data", tmp_path / "data", "--out", tmp_path / "kp.dfrm", "--seed", seed)
    _run("train-svm", "--data", tmp_path / "data", "--out", tmp_path / "svm.dfrs",
         "--model", tmp_path / "kp.dfrm", "--seed", seed)
    (tmp_path / "reports").mkdir()
    _run("eval", "--data", tmp_path / "data", "--model", tmp_path / "kp.dfrm", "--svm", tmp_path / "svm.dfrs",
         "--out", tmp_path / "reports", "--seed", seed, "--format", "csv")
    elapsed = time.perf_counter() - start
    rep = R.read_csv(tmp_path / "reports" / "classification.csv", "classification")
    scores = {d: c / n for d, (c, n) in rep.per_disguise.items() if n}
    scarf = {d: a for d, a in scores.items() if "scarf" in d}
    best_plain = max(a for d, a in scores.items() if "scarf" not in d)
    ok = rep.total == 50 and rep.accuracy >= 0.80 and max(scarf.values()) <= best_plain and elapsed <= 20 * 60
    per = ", ".join(f"{d} {100 * a:.0f}%" for d, a in scores.items())
    criterion(
        "end-to-end synthetic pipeline",
        ok,
        f"accuracy {100 * rep.accuracy:.1f}% on {rep.total} held-out samples (needs >= 80%); "
        f"best scarf {100 * max(scarf.values()):.0f}% vs best non-scarf {100 * best_plain:.0f}%; "
        f"{elapsed / 60:.1f} min; per disguise: {per}",
    )


def test_throughput_arithmetic(criterion):
    model = keypoint_net.build_model(keypoint_net.desk_config())
    rng = np.random.default_rng(0)
    machine = svm.train_svm(rng.normal(size=(6, 28)), ["a", "b"] * 3)
    frames = [rng.integers(0, 256, (96, 96), dtype=np.uint8) for _ in range(50)]
    readings = iter([100.0, 102.598, 200.0, 203.0])
    rep = fps_benchmark(model, machine, frames, batch=50, clock=lambda: next(readings))
    ok = abs(rep.fps - 19.3) <= 0.1 and rep.frames == 50 and rep.wall_time == pytest.approx(2.598)
    criterion(
        "throughput arithmetic",
        ok,
        f"{rep.frames} frames / {rep.wall_time:.3f} s = {rep.fps:.3f} fps, {rep.seconds_per_frame:.4f} s/frame",
    )


def test_determinism_and_serialization(criterion, tmp_path):
    checks = {}
    for run in ("a", "b"):
        _run("synth", "--out", tmp_path / f"data-{run}", "--subjects", 2, "--per-subject", 6, "--seed", 3)
    files = sorted(p.relative_to(tmp_path / "data-a") for p in (tmp_path / "data-a").rglob("*") if p.is_file())
    checks["datasets"] = all(
        (tmp_path / "data-a" / f).read_bytes() == (tmp_path / "data-b" / f).read_bytes() for f in files
    )
    for run in ("a", "b"):
        _run("train-kp", "--data", tmp_path / "data-a", "--out", tmp_path / f"kp-{run}.dfrm", "--epochs", 2, "--seed", 3)
        _run("train-svm", "--data", tmp_path / "data-a", "--out", tmp_path / f"svm-{run}.dfrs",
             "--model", tmp_path / f"kp-{run}.dfrm", "--seed", 3)
        (tmp_path / f"rep-{run}").mkdir()
        _run("eval", "--data", tmp_path / "data-a", "--model", tmp_path / f"kp-{run}.dfrm",
             "--svm", tmp_path / f"svm-{run}.dfrs", "--out", tmp_path / f"rep-{run}", "--format", "csv", "--seed", 3)
    checks["models"] = (tmp_path / "kp-a.dfrm").read_bytes() == (tmp_path / "kp-b.dfrm").read_bytes()
    checks["svms"] = (tmp_path / "svm-a.dfrs").read_bytes() == (tmp_path / "svm-b.dfrs").read_bytes()
    checks["reports"] = all(
        (tmp_path / "rep-a" / n).read_bytes() == (tmp_path / "rep-b" / n).read_bytes()
        for n in ("keypoints.csv", "classification.csv")
    )
    model = keypoint_net.load_model(tmp_path / "kp-a.dfrm")
    keypoint_net.save_model(model, tmp_path / "again.dfrm")
    images = np.stack([s.image for s in generate_dataset(2, 3, seed=11, size=96)])
    checks["round trip"] = (
        keypoint_net.predict_flat(keypoint_net.load_model(tmp_path / "again.dfrm"), images).tobytes()
        == keypoint_net.predict_flat(model, images).tobytes()
    )
    failed = [k for k, v in checks.items() if not v]
    criterion(
        "determinism and serialization",
        not failed,
        "byte-identical " + ", ".join(k for k in checks if k != "round trip") + "; bit-identical predictions after save/load"
        if not failed else f"mismatch in {failed}",
    )
