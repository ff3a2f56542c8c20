import math

import numpy as np
import pytest

from tgvd import grid, pipeline
from tgvd.solvers import SolverConfig

FAST = SolverConfig(gap_tol=1e-3, max_iters=20000)


@pytest.fixture(scope="module")
def noisy():
    ref = pipeline.synthetic_image("smooth", 32)
    return ref, pipeline.add_noise(ref, 0.1, "smooth", 0)


def test_noise_is_deterministic_and_keyed():
    u = np.zeros((16, 16))
    a = pipeline.add_noise(u, 0.1, "x", 0)
    np.testing.assert_array_equal(a, pipeline.add_noise(u, 0.1, "x", 0))
    assert not np.array_equal(a, pipeline.add_noise(u, 0.1, "x", 1))
    assert not np.array_equal(a, pipeline.add_noise(u, 0.1, "y", 0))


def test_mad_estimator_recovers_sigma():
    u0 = pipeline.add_noise(np.full((128, 128), 0.5), 0.1, "flat", 0)
    est = pipeline.estimate_noise_mad(u0)
    assert est.sigma == pytest.approx(0.1, rel=0.05)
    assert est.delta1 == pytest.approx(est.sigma * 128)
    with pytest.raises(ValueError):
        pipeline.estimate_noise_mad(np.zeros((3, 3)))


def test_default_params(noisy):
    _, u0 = noisy
    est = pipeline.NoiseEstimate.from_sigma(0.1, u0.shape)
    s = pipeline.default_params("DGTV1", u0, est)
    assert s.delta2 == pytest.approx(0.99 * grid.mixed_norm_l1(grid.grad(u0)))
    assert pipeline.default_params("DGTGV1", u0, est).alpha == 1.0
    m = pipeline.default_params("MTGV", u0, est)
    assert (m.alpha, m.delta1) == (2.0, pytest.approx(0.1 * 32))
    assert pipeline.default_params("MTGV", u0, est, alpha=3.0).alpha == 3.0
    t = pipeline.default_params("TGV", u0, est)
    assert (t.alpha0, t.alpha1) == (pytest.approx(0.2), pytest.approx(0.1))


@pytest.mark.parametrize("method", pipeline.METHODS)
def test_every_method_denoises(noisy, method):
    ref, u0 = noisy
    cfg = FAST if method != "ctgv" else SolverConfig(algorithm="DR_INEXACT", gap_tol=1e-2)
    res = pipeline.denoise(method, u0, cfg)
    assert res.u.shape == ref.shape
    assert pipeline.psnr(res.u, ref) > pipeline.psnr(u0, ref) + 3.0


def test_two_stage_reports(noisy):
    _, u0 = noisy
    res = pipeline.run_two_stage("DGTGV", u0, FAST)
    assert len(res.reports) == 2 and res.converged
    assert res.v.shape == (2,) + u0.shape
    assert res.wall_time == pytest.approx(sum(r.wall_time for r in res.reports))
    with pytest.raises(ValueError):
        pipeline.run_two_stage("TGV", u0)


def test_unknown_method(noisy):
    with pytest.raises(ValueError, match="unknown method"):
        pipeline.denoise("bm3d", noisy[1])


def test_psnr():
    a = np.zeros((4, 4))
    assert pipeline.psnr(a, a) == math.inf
    assert pipeline.format_psnr(math.inf) == "exact"
    assert pipeline.psnr(a + 0.1, a) == pytest.approx(20.0)


def test_benchmark_rows_and_csv(tmp_path):
    images = pipeline.synthetic_set(24, names=("affine", "eye"))
    rows = pipeline.run_benchmark(images, [0.1, 0.05], ["dgtgv", "mtgv"], FAST)
    assert [(r.image, r.factor, r.method) for r in rows] == sorted(
        (r.image, r.factor, r.method) for r in rows)
    assert len(rows) == 8 and all(not r.error for r in rows)
    path = tmp_path / "t.csv"
    pipeline.save_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(pipeline.CSV_HEADER) and len(lines) == 9


def test_benchmark_threads_match_serial(monkeypatch):
    images = pipeline.synthetic_set(16, names=("affine", "smooth"))
    serial = pipeline.run_benchmark(images, [0.1], ["tv", "mtgv"], FAST)
    monkeypatch.setenv("TGVD_THREADS", "3")
    threaded = pipeline.run_benchmark(images, [0.1], ["tv", "mtgv"], FAST)
    assert [r.psnr_db for r in serial] == [r.psnr_db for r in threaded]


def test_benchmark_records_failures():
    images = {"flat": np.zeros((8, 8))}
    bad = SolverConfig(tau=10.0, sigma=10.0)
    rows = pipeline.run_benchmark(images, [0.1], ["mtgv"], bad)
    assert rows[0].error and math.isnan(rows[0].psnr_db)


def test_alpha_sweep():
    images = {"affine": pipeline.synthetic_image("affine", 16)}
    out = pipeline.alpha_sweep("dgtgv", images, [0.1], [0.5, 1.0, 2.0], FAST)
    assert len(out) == 1
    r = out[0]
    assert r.best in (0.5, 1.0, 2.0) and r.best_psnr_db == max(r.psnr_by_value.values())


def test_save_trace(tmp_path, noisy):
    res = pipeline.denoise("tv", noisy[1], FAST)
    path = tmp_path / "trace.csv"
    pipeline.save_trace(res.reports[0], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,relative_gap" and len(lines) == len(res.reports[0].gap_trace) + 1
