"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import hashlib
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import degrade, piecewise_image, stripes
from patchweave.image import NoiseSpec, RegionMask, add_gaussian_noise, psnr
from patchweave.io import read_image, write_image
from patchweave.multiscale import solve_multiscale
from patchweave.oracles import (
    assemble_mstep_system,
    closed_form_weights,
    exact_mstep_oracle,
    gradient_check,
    jacobi_from_system,
    entropic_objective,
    logsum_min_oracle,
)
from patchweave.solver import SolverConfig, solve, solve_decoupled, update_image, weight_domain
from patchweave.weights import SearchConfig, update_weights


def report(n: int, ok: bool, detail: str) -> None:
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_criterion_01_logsum_identity():
    t0 = time.perf_counter()
    worst_gap, worst_margin = 0.0, math.inf
    for seed in range(50):
        rng = np.random.default_rng(seed)
        m, n = rng.integers(1, 9, size=2)
        f = rng.uniform(0.01, 10.0, size=(m, n))
        chk = logsum_min_oracle(f, n_probes=100, seed=seed)
        worst_gap = max(worst_gap, abs(chk.lhs - chk.rhs))
        worst_margin = min(worst_margin, chk.probe_min - chk.rhs)
    elapsed = time.perf_counter() - t0
    ok = worst_gap < 1e-10 and worst_margin >= 0 and elapsed < 5
    report(1, ok, f"max|lhs-rhs|={worst_gap:.2e} min(P(w)-rhs)={worst_margin:.3e} time={elapsed:.2f}s")


def test_criterion_02_softmax_equivalence():
    worst, worst_sum = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0, 255, size=(16, 16))
        hole = np.zeros(u.shape, bool)
        if seed % 2:
            r0, c0 = rng.integers(3, 10, size=2)
            hole[r0:r0 + 3, c0:c0 + 3] = True
        search = SearchConfig(None, None) if seed % 4 < 2 else SearchConfig(5, 16)
        h = 800.0
        mask = RegionMask(hole, 2)
        kernel = SolverConfig(patch_radius=2).kernel()
        field = update_weights(u, mask, kernel, h, search)
        f = np.where(field.cand >= 0, np.exp(-np.where(field.cand >= 0, field.distances, 0.0) / h), 0.0)
        ref = closed_form_weights(f, field.cand, field.shape)
        worst = max(worst, float(np.max(np.abs(field.weights - ref.weights))))
        worst_sum = max(worst_sum, float(np.max(np.abs(field.row_sums() - 1.0))))
    report(2, worst <= 1e-12 and worst_sum <= 1e-9, f"max entry diff={worst:.2e} max |row sum-1|={worst_sum:.2e}")


def test_criterion_03_mstep_consistency():
    worst_jac, worst_grad = 0.0, 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0, 255, size=(8, 8))
        v = rng.uniform(0, 255, size=(8, 8))
        hole = np.zeros(u.shape, bool)
        hole[2:5, 3:6] = True
        cfg = SolverConfig(patch_radius=1, sigma=20.0, search=SearchConfig(3, None))
        mask = RegionMask(hole, 1)
        w = update_weights(u, mask, cfg.kernel(), cfg.resolved_h, cfg.search, domain=weight_domain(mask, cfg))
        sys_ = assemble_mstep_system(u, w, v, mask, cfg)
        worst_jac = max(worst_jac, float(np.max(np.abs(update_image(u, w, v, mask, cfg) - jacobi_from_system(sys_, u)))))
        exact = exact_mstep_oracle(u, w, v, mask, cfg)
        worst_grad = max(worst_grad, float(np.max(np.abs(gradient_check(exact, w, v, mask, cfg)))))
    report(3, worst_jac <= 1e-9 and worst_grad < 1e-8, f"max|sweep-jacobi|={worst_jac:.2e} max|grad|={worst_grad:.2e}")


def test_criterion_04_energy_behavior():
    worst_rise, worst_w = -math.inf, -math.inf
    for seed in range(5):
        v = add_gaussian_noise(piecewise_image(32), NoiseSpec(20.0, seed))
        cfg = SolverConfig(sigma=20.0, tol=1e-300, max_iters=30)
        state = solve(v, np.zeros(v.shape, bool), cfg)
        assert state.iter == 30
        J = [e.total for e in state.trace]
        for a, b in zip(J, J[1:]):
            worst_rise = max(worst_rise, (b - a) / abs(a))
        H = [e.h_objective for e in state.trace]
        Hw = [e.h_objective for e in state.wstep_trace]
        for n in range(len(H) - 1):
            worst_w = max(worst_w, Hw[n + 1] - H[n])
    report(4, worst_rise <= 1e-6 and worst_w <= 1e-9,
           f"max relative J increase={worst_rise:.2e} max w-step H change={worst_w:.3e}")


def test_criterion_05_constant_recovery():
    v = np.full((64, 64), 117.0)
    hole = np.zeros(v.shape, bool)
    hole[24:40, 24:40] = True
    t0 = time.perf_counter()
    state = solve_multiscale(np.where(hole, 255.0, v), hole, SolverConfig())
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(state.u - v)))
    report(5, err <= 1e-6 and elapsed < 30, f"max abs error={err:.2e} time={elapsed:.1f}s")


def test_criterion_06_texture_inpainting():
    clean = stripes(64, 8, 100.0)
    hole = np.zeros(clean.shape, bool)
    hole[24:40, 24:40] = True
    state = solve_multiscale(np.where(hole, 255.0, clean), hole, SolverConfig(), n_levels=3)
    mae = float(np.mean(np.abs(state.u[hole] - clean[hole])))
    report(6, mae <= 2.0, f"hole MAE={mae:.3f} (threshold 2)")


def _restore_setup(seed):
    clean = piecewise_image(64)
    hole = np.zeros(clean.shape, bool)
    hole[26:38, 30:42] = True
    return clean, hole, degrade(clean, hole, 10.0, seed)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_criterion_07_simultaneous_restore(seed):
    clean, hole, v = _restore_setup(seed)
    noisy = psnr(clean, v, ~hole)
    t0 = time.perf_counter()
    state = solve_multiscale(v, hole, SolverConfig(sigma=10.0))
    elapsed = time.perf_counter() - t0
    out = psnr(clean, state.u)
    report(7, out >= noisy + 3.0 and elapsed < 60,
           f"seed={seed} input PSNR(known)={noisy:.2f} output PSNR(all)={out:.2f} gain={out - noisy:.2f}dB time={elapsed:.1f}s")


def test_criterion_08_decoupled_vs_denoising():
    clean, hole, v = _restore_setup(0)
    cfg = SolverConfig(sigma=10.0)
    dec = solve_decoupled(v, hole, cfg)
    den = solve(v, hole, cfg.denoising_stage())
    mae = float(np.mean(np.abs(dec.u[~hole] - den.u[~hole])))
    report(8, mae < 1.0, f"known-region MAE decoupled vs denoising={mae:.3e}")


def _cli(*args, env_threads=None):
    import os
    env = dict(os.environ)
    env.pop("PATCHWEAVE_THREADS", None)
    return subprocess.run([sys.executable, "-m", "patchweave", *args], env=env, capture_output=True, text=True)


def _digest(*paths):
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


def test_criterion_09_reproducibility(tmp_path):
    src = tmp_path / "clean.pgm"
    write_image(src, piecewise_image(40))
    digests = []
    for run, threads in enumerate(["1", "1", "4"]):
        d = tmp_path / f"run{run}"
        d.mkdir()
        deg, m, out, tr = d / "deg.pgm", d / "mask.pgm", d / "out.pgm", d / "trace.csv"
        r1 = _cli("degrade", "--input", str(src), "--output", str(deg), "--mask-out", str(m),
                  "--sigma", "10", "--seed", "7", "--mask-spec", "rect:15,12,8,8")
        r2 = _cli("restore", "--input", str(deg), "--mask", str(m), "--output", str(out),
                  "--sigma", "10", "--trace", str(tr), "--threads", threads)
        assert r1.returncode == 0 and r2.returncode == 0, r1.stderr + r2.stderr
        digests.append(_digest(deg, m, out, tr))
    ok = digests[0] == digests[1] == digests[2]
    report(9, ok, f"artifacts identical across runs and threads 1/4: {ok}")


def test_criterion_10_io_and_exit_codes(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, size=(256, 256), dtype=np.uint8)
    a = tmp_path / "a.pgm"
    a.write_bytes(b"P5\n256 256\n255\n" + raw.tobytes())
    b = tmp_path / "b.pgm"
    img = read_image(a)
    write_image(b, img)
    bit_exact = b.read_bytes() == a.read_bytes() and np.array_equal(img, raw)

    missing = _cli("restore", "--input", str(tmp_path / "missing.pgm"), "--output", str(tmp_path / "o.pgm"))
    small = tmp_path / "small.pgm"
    write_image(small, np.zeros((16, 16)))
    out = tmp_path / "o2.pgm"
    mismatch = _cli("restore", "--input", str(a), "--mask", str(small), "--output", str(out))
    empty_mask = tmp_path / "empty.pgm"
    write_image(empty_mask, np.zeros((256, 256)))
    empty = _cli("metrics", str(a), str(b), "--mask", str(empty_mask), "--region", "hole")
    codes = (missing.returncode, mismatch.returncode, empty.returncode)
    ok = bit_exact and codes == (2, 3, 5) and not out.exists() and "empty region" in empty.stdout
    report(10, ok, f"round-trip bit-exact={bit_exact} exit codes (missing, mismatch, empty)={codes}")
