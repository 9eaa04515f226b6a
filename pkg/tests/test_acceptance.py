"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
Criteria 7 and 8 train real models and take several minutes.
"""

from __future__ import annotations

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from tcmkit.block import TcmConfig, init_tcm_params, param_census, tcm_forward
from tcmkit.correlation import correlate, correlate_oracle, correlation_flops, window_offsets
from tcmkit.match import MatchConfig, estimate_displacements, gaussian_kernel, hard_argmax, kernel_soft_argmax
from tcmkit.correlation import correlate_pairs
from tcmkit.sampling import build_pairs
from tcmkit.synth import ToyNet, ToyNetConfig, accuracy_drop, evaluate, gen_dataset, stride_sweep, train, write_sweep
from tcmkit.tam import attention_param_count, init_tam_params, kernel_size_for
from tcmkit.tensors import Tensor, gradcheck, registered_ops
from tcmkit.tensors.io import decode_tsr1, encode_tsr1, load_bundle, save_bundle

RESULTS: dict = {}

DATA_SEED = 42
TRAIN_SEEDS = (42, 43, 44)
EPOCHS = 30
LR = 0.01
STRIDES = (1, 2, 3, 4)


def record(number: int, passed: bool, detail: str) -> None:
    RESULTS[number] = (passed, detail)
    assert passed, detail


def summary_lines():
    return [f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(RESULTS.items())]


# ------------------------------------------------------------------ 1


def test_criterion_1_correlation_oracle():
    start = time.perf_counter()
    worst = {np.float32: 0.0, np.float64: 0.0}
    n = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        C, H, W, R = (int(v) for v in (rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 9), rng.integers(0, 4)))
        a, b = rng.standard_normal((C, H, W)), rng.standard_normal((C, H, W))
        for dt in worst:
            ta, tb = Tensor(a.astype(dt)), Tensor(b.astype(dt))
            diff = float(np.max(np.abs(correlate(ta, tb, R).data.astype(np.float64) - correlate_oracle(ta, tb, R))))
            worst[dt] = max(worst[dt], diff)
        n += 1
    elapsed = time.perf_counter() - start
    ok = worst[np.float32] < 1e-5 and worst[np.float64] < 1e-10 and elapsed < 10
    record(1, ok, f"{n} instances, max diff f32={worst[np.float32]:.2e} f64={worst[np.float64]:.2e}, "
                  f"{elapsed:.1f}s")


# ------------------------------------------------------------------ 2


def test_criterion_2_gradient_suite():
    start = time.perf_counter()
    reports = [gradcheck(name, tol=1e-4, dtype="f64") for name in registered_ops()]
    elapsed = time.perf_counter() - start
    failed = [r.op for r in reports if not r.passed]
    has_block = any(r.op == "tcm_forward" and r.passed for r in reports)
    worst = max(r.max_error for r in reports)
    ok = not failed and has_block and elapsed < 60
    record(2, ok, f"{len(reports)} ops, worst rel err {worst:.2e}, failed={failed or 'none'}, {elapsed:.1f}s")


# ------------------------------------------------------------------ 3


def test_criterion_3_match_estimation():
    start = time.perf_counter()
    R = 2
    base = np.random.default_rng(0).standard_normal((32, 10, 16))

    static = Tensor(np.repeat(base[:, None], 4, axis=1), dtype=np.float64)
    fast, slow = correlate_pairs(static, build_pairs(4), R)
    maps = estimate_displacements(fast, slow).maps.data
    static_err = max(float(np.abs(maps[c]).mean()) for c in (0, 1, 3, 4))

    moving = Tensor(np.stack([np.roll(base, t, axis=2) for t in range(4)], axis=1), dtype=np.float64)
    fast, slow = correlate_pairs(moving, build_pairs(4), R)
    maps = estimate_displacements(fast, slow).maps.data
    fast_dx = float(maps[0][:, R:-R, R + 3:-R - 3].mean())

    cfg = MatchConfig(tau=1e-4)
    low_temp_err = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        r = 1 + seed % 3
        s = rng.standard_normal((2 * r + 1) ** 2)
        g = gaussian_kernel(hard_argmax(s), r, cfg.sigma)
        dy, dx = window_offsets(r)[int(np.argmax(g * s))]
        d = kernel_soft_argmax(s, cfg).data
        low_temp_err = max(low_temp_err, abs(float(d[0]) - dx), abs(float(d[1]) - dy))
    elapsed = time.perf_counter() - start
    ok = static_err < 0.05 and abs(fast_dx - 1.0) <= 0.1 and low_temp_err < 1e-3 and elapsed < 10
    record(3, ok, f"(a) static mean|d|={static_err:.2e} (b) fast dx={fast_dx:.4f} "
                  f"(c) low-temperature err={low_temp_err:.2e}, {elapsed:.1f}s")


# ------------------------------------------------------------------ 4


def test_criterion_4_constants():
    cfg = MatchConfig()
    checks = {
        "kernel_size_for(8)==3": kernel_size_for(8) == 3,
        "sigma==5": cfg.sigma == 5,
        "tau==0.01": cfg.tau == 0.01,
        "pairs==T-1": all(len(build_pairs(T).fast) == len(build_pairs(T).slow) == T - 1 for T in range(2, 33)),
        "flops==68841472": correlation_flops(8, 64, 28, 28, 14) == 68_841_472,
    }
    failed = [k for k, v in checks.items() if not v]
    record(4, not failed, f"{len(checks)} constants checked, failed={failed or 'none'}")


# ------------------------------------------------------------------ 5


def test_criterion_5_parameter_structure():
    cases = 0
    bad = []
    for T in (2, 3, 4, 5, 8, 9, 16, 32):
        for k in sorted({1, 3, kernel_size_for(T)} & set(range(1, T + 1, 2))):
            expected = {"shared": k, "band": k * T, "full": T * T}
            for mode, n in expected.items():
                tam = init_tam_params(T, c_mid=2, mode=mode, k=k)
                block = init_tcm_params(TcmConfig(channels=4, frames=T, c_mid=2, attention_mode=mode, kernel_size=k))
                census = dict(param_census(block))
                got = (tam.attention.size, census["tam.attn.weight"], attention_param_count(T, k, mode))
                cases += 1
                if got != (n, n, n):
                    bad.append((T, k, mode, got))
    record(5, not bad, f"{cases} (T, k, mode) cases, mismatches={bad or 'none'}")


# ------------------------------------------------------------------ 6


def test_criterion_6_plug_in_identity():
    exact = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        C, T, H, W = (int(v) for v in (rng.integers(1, 9), rng.integers(2, 9), rng.integers(1, 9), rng.integers(1, 9)))
        params = init_tcm_params(TcmConfig(channels=C, frames=T, c_mid=8), rng)
        x = Tensor(rng.standard_normal((C, T, H, W)).astype(np.float32))
        exact += tcm_forward(x, params).data.tobytes() == x.data.tobytes()
    record(6, exact == 20, f"{exact}/20 random inputs reproduced bit-exactly")


# ------------------------------------------------------------------ 7, 8


@pytest.fixture(scope="module")
def tempo_data():
    data = gen_dataset(classes=(0, 1, 2), count=400, T=8, H=32, W=32, seed=DATA_SEED)
    return data[:300], data[300:]


_MODELS: dict = {}


def trained(kind: str, seed: int, tempo_data):
    key = (kind, seed)
    if key not in _MODELS:
        train_set, _ = tempo_data
        start = time.perf_counter()
        model = ToyNet.init(ToyNetConfig(temporal=kind), seed=seed)
        train(model, train_set, epochs=EPOCHS, lr=LR, seed=seed)
        _MODELS[key] = (model, time.perf_counter() - start)
    return _MODELS[key]


def test_criterion_7_tempo_experiment(tempo_data):
    _, test_set = tempo_data
    tcm, t_tcm = trained("tcm", DATA_SEED, tempo_data)
    base, t_base = trained("none", DATA_SEED, tempo_data)
    acc_tcm, acc_base = evaluate(tcm, test_set), evaluate(base, test_set)

    rng = np.random.default_rng(0)
    invariant = True
    for sample in test_set[:30]:
        perm = rng.permutation(sample.video.shape[1])
        shuffled = Tensor(np.ascontiguousarray(sample.video.data[:, perm]))
        invariant &= base.forward(sample.video).data.tobytes() == base.forward(shuffled).data.tobytes()
    elapsed = t_tcm + t_base
    ok = acc_tcm >= 0.80 and acc_tcm - acc_base >= 0.25 and invariant and elapsed < 600
    record(7, ok, f"TCM {acc_tcm:.2%} vs baseline {acc_base:.2%} (gap {100 * (acc_tcm - acc_base):.1f} pts), "
                  f"baseline permutation-invariant={invariant}, train time {elapsed:.0f}s")


def test_criterion_8_robustness(tempo_data, tmp_path_factory):
    _, test_set = tempo_data
    out = tmp_path_factory.mktemp("robustness")
    wins, parts = 0, []
    for seed in TRAIN_SEEDS:
        tcm, _ = trained("tcm", seed, tempo_data)
        conv, _ = trained("conv", seed, tempo_data)
        sweep_tcm = stride_sweep(tcm, test_set, STRIDES)
        sweep_conv = stride_sweep(conv, test_set, STRIDES)
        write_sweep(out / f"tcm_seed{seed}.csv", sweep_tcm)
        write_sweep(out / f"conv_seed{seed}.csv", sweep_conv)
        d_tcm, d_conv = accuracy_drop(sweep_tcm), accuracy_drop(sweep_conv)
        wins += d_tcm <= d_conv
        parts.append(f"seed {seed}: TCM {[round(a, 2) for _, a in sweep_tcm]} drop {d_tcm:.2f} / "
                     f"conv {[round(a, 2) for _, a in sweep_conv]} drop {d_conv:.2f}")
    record(8, wins >= 2, f"{wins}/3 seeds with TCM drop <= conv drop; " + "; ".join(parts) + f"; CSVs in {out}")


# ------------------------------------------------------------------ 9


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "tcmkit.cli", *map(str, args)], cwd=cwd, capture_output=True)


def test_criterion_9_serialization(tmp_path):
    rng = np.random.default_rng(9)
    tsr_ok = all(
        decode_tsr1(encode_tsr1(arr)).tobytes() == arr.tobytes()
        for arr in (rng.standard_normal((3, 4, 5)).astype(np.float32), rng.standard_normal((2, 7)),
                    np.array([np.inf, -0.0, np.nan, 1e-310]))
    )
    params = init_tcm_params(TcmConfig(channels=8, frames=8, c_mid=4), rng).named()
    save_bundle(tmp_path / "bundle", params)
    back = load_bundle(tmp_path / "bundle")
    bundle_ok = list(back) == list(params) and all(back[k].data.tobytes() == params[k].data.tobytes() for k in params)

    video = np.random.default_rng(1).standard_normal((8, 4, 8, 8)).astype(np.float32)
    from tcmkit.tensors.io import save_tsr1

    save_tsr1(tmp_path / "video.tsr", video)
    save_tsr1(tmp_path / "a.tsr", video[:, 0])
    save_tsr1(tmp_path / "b.tsr", video[:, 1])
    digests = []
    for run in range(3):
        d = tmp_path / f"run{run}"
        d.mkdir()
        steps = [
            ["synth", "--count", 12, "--out", d / "data"],
            ["train", "--data", d / "data", "--epochs", 1, "--tcm", "on", "--out", d / "model"],
            ["eval", "--model", d / "model", "--data", d / "data"],
            ["robustness", "--model", d / "model", "--data", d / "data", "--out", d / "sweep.csv"],
            ["correlate", "--a", tmp_path / "a.tsr", "--b", tmp_path / "b.tsr", "--radius", 2, "--out", d / "c.tsr"],
            ["displace", "--video", tmp_path / "video.tsr", "--radius", 2, "--out", d / "d.tsr",
             "--pgm-dir", d / "pgm"],
            ["flops", "--t", 8, "--c", 64, "--h", 28, "--w", 28],
        ]
        blob = []
        for step in steps:
            proc = _cli(step, tmp_path)
            assert proc.returncode == 0, proc.stderr.decode()
            blob.append(proc.stdout.replace(str(d).encode(), b"<run>"))
        for p in sorted(d.rglob("*")):
            if p.is_file():
                blob.append(str(p.relative_to(d)).encode() + b"\0" + p.read_bytes())
        digests.append(b"\n".join(blob))
    cli_ok = digests[0] == digests[1] == digests[2]
    record(9, tsr_ok and bundle_ok and cli_ok,
           f"TSR1 round-trip={tsr_ok}, bundle round-trip={bundle_ok}, CLI byte-identical over 3 runs={cli_ok}")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print("\n".join(summary_lines()))
    sys.exit(code)
