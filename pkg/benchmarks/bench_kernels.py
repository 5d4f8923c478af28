#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Two sections:

  kernels   per-kernel best-of wall times, both implementations loaded in
            this process, plus the largest output difference between them
            as a cross-check that they compute the same thing
  train     end-to-end training throughput under each backend, run as
            subprocesses because the backend is chosen at import time

Usage:
  python benchmarks/bench_kernels.py [--rows N] [--dim D] [--seq T]
                                     [--repeat R] [--skip-train]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def max_diff(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max()) if a.size else 0.0


def kernel_cases(rows: int, dim: int, seq: int):
    """(name, argument builder) pairs; builders return fresh arrays so the
    in-place Adam case starts both implementations from identical state."""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(rows, dim)).astype(np.float32)
    dy = rng.normal(size=(rows, dim)).astype(np.float32)
    scores = rng.normal(size=(rows // seq or 1, seq, seq)).astype(np.float32)
    dscores = rng.normal(size=scores.shape).astype(np.float32)
    gain = rng.normal(size=dim).astype(np.float32)
    bias = rng.normal(size=dim).astype(np.float32)
    flat = rng.normal(size=rows * dim).astype(np.float32)
    grad = rng.normal(size=rows * dim).astype(np.float32)

    def adam_args():
        return (flat.copy(), grad, np.zeros_like(flat), np.zeros_like(flat),
                1e-3, 0.9, 0.999, 1e-8, 1)

    # layer_norm_bwd consumes the forward's saved tensors; build them once
    # with the numpy reference so both sides see identical inputs
    from sbprune import _kernels_py as ref
    _, xhat, rstd = ref.layer_norm_fwd(x, gain, bias, 1e-12)
    y_soft = ref.softmax_last_fwd(scores)

    return [
        ("gelu_fwd", lambda: (x,)),
        ("gelu_bwd", lambda: (x, dy)),
        ("softmax_last_fwd", lambda: (scores,)),
        ("softmax_last_bwd", lambda: (y_soft, dscores)),
        ("layer_norm_fwd", lambda: (x, gain, bias, 1e-12)),
        ("layer_norm_bwd", lambda: (xhat, rstd, gain, dy)),
        ("adam_update", adam_args),
    ]


def run_kernel_section(rows: int, dim: int, seq: int, repeat: int) -> None:
    from sbprune import _kernels_py
    try:
        from sbprune import _kernels
    except ImportError:
        print("compiled extension not available; build it first "
              "(pip install -e . --no-build-isolation)", file=sys.stderr)
        sys.exit(2)

    print(f"shapes: x=({rows},{dim}) scores=({rows // seq or 1},{seq},{seq}) "
          f"adam n={rows * dim}, float32, best of {repeat}")
    header = f"{'kernel':<18} {'cython ms':>10} {'numpy ms':>10} {'speedup':>8} {'max |diff|':>11}"
    print(header)
    print("-" * len(header))
    for name, make_args in kernel_cases(rows, dim, seq):
        fast = getattr(_kernels, name)
        slow = getattr(_kernels_py, name)
        out_fast = fast(*make_args())
        out_slow = slow(*make_args())
        if name == "adam_update":
            # in-place: compare the updated parameter vectors instead
            a_fast, a_slow = make_args(), make_args()
            fast(*a_fast)
            slow(*a_slow)
            diff = max_diff(a_fast[0], a_slow[0])
        elif isinstance(out_fast, tuple):
            diff = max(max_diff(a, b) for a, b in zip(out_fast, out_slow))
        else:
            diff = max_diff(out_fast, out_slow)

        args_fast = make_args()
        args_slow = make_args()
        t_fast = best_of(lambda: fast(*args_fast), repeat)
        t_slow = best_of(lambda: slow(*args_slow), repeat)
        print(f"{name:<18} {t_fast * 1e3:>10.3f} {t_slow * 1e3:>10.3f} "
              f"{t_slow / t_fast:>7.1f}x {diff:>11.2e}")


def train_probe(steps: int) -> None:
    """Time NLI training steps under whatever backend import selected."""
    from sbprune.backend import backend_name
    from sbprune.data import build_vocab, gen_synthetic
    from sbprune.encoder import EncoderConfig, encoder_init
    from sbprune.training import TrainConfig, train_phase

    batch = 16
    nli = gen_synthetic("nli", steps * batch, 3, 60, 3)
    vocab = build_vocab([ex.premise for ex in nli] + [ex.hypothesis for ex in nli], 100)
    cfg = EncoderConfig(vocab_size=len(vocab), hidden_dim=32, num_layers=2,
                        num_heads=4, ffn_dim=64, max_seq_len=32, seed=5)
    model = encoder_init(cfg)
    model.vocab = vocab
    t0 = time.perf_counter()
    train_phase(model, None, nli, "nli",
                TrainConfig(epochs=1, batch_size=batch, seed=5))
    dt = time.perf_counter() - t0
    print(json.dumps({"backend": backend_name(), "steps": steps,
                      "seconds": round(dt, 3),
                      "steps_per_s": round(steps / dt, 2)}))


def run_train_section(steps: int) -> None:
    print(f"\ntraining throughput ({steps} NLI steps, d=32 L=2, batch 16):")
    for label, env_extra in (("cython", {"SBPRUNE_PURE_PYTHON": ""}),
                             ("numpy", {"SBPRUNE_PURE_PYTHON": "1"})):
        env = dict(os.environ, **env_extra)
        p = subprocess.run(
            [sys.executable, __file__, "--train-probe", str(steps)],
            env=env, capture_output=True, text=True)
        if p.returncode != 0:
            print(f"  {label}: probe failed: {p.stderr.strip()}", file=sys.stderr)
            continue
        r = json.loads(p.stdout)
        print(f"  {r['backend']:<8} {r['seconds']:>7.2f}s "
              f"({r['steps_per_s']:.1f} steps/s)")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seq", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=60,
                    help="training steps for the throughput section")
    ap.add_argument("--skip-train", action="store_true")
    ap.add_argument("--train-probe", type=int, metavar="STEPS",
                    help=argparse.SUPPRESS)
    a = ap.parse_args(argv)

    if a.train_probe is not None:
        train_probe(a.train_probe)
        return 0
    run_kernel_section(a.rows, a.dim, a.seq, a.repeat)
    if not a.skip_train:
        run_train_section(a.steps)
    return 0


if __name__ == "__main__":
    sys.exit(main())
