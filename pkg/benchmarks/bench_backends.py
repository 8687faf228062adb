"""Benchmark the compiled kernel backend against the numpy fallback.

Times the individual hot kernels on training-shaped inputs and an
end-to-end training run on a small synthetic stream.  Backend selection is
process-wide, so the end-to-end comparison re-executes this script in a
subprocess with RTGNSVDD_BACKEND=pure.

Run from the repository root:

    python benchmarks/bench_backends.py
    python benchmarks/bench_backends.py --end-to-end
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from rtgnsvdd._kernels import _fast, backend_name, pure


def timeit(fn, *args, repeat=2000):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels():
    rng = np.random.default_rng(0)
    d_m, msg, dh, b = 32, 84, 64, 200
    cases = []

    x1 = rng.normal(size=msg)
    xb = rng.normal(size=(b, msg))
    w = rng.normal(size=(dh, msg))
    bias = rng.normal(size=dh)
    cases.append(("affine_fwd vec", lambda impl: impl.affine_fwd(x1, w, bias), 5000))
    cases.append(("affine_fwd batch", lambda impl: impl.affine_fwd(xb, w, bias), 2000))
    gy = rng.normal(size=(b, dh))
    cases.append(("affine_bwd batch", lambda impl: impl.affine_bwd(gy, xb, w), 1000))

    h1, m1 = rng.uniform(-0.9, 0.9, size=d_m), rng.normal(size=msg)
    hb, mb = rng.uniform(-0.9, 0.9, size=(b, d_m)), rng.normal(size=(b, msg))
    ps = [rng.normal(size=s) for s in [(d_m, msg), (d_m, d_m), (d_m,)] * 3]
    cases.append(("gru_fwd vec", lambda impl: impl.gru_fwd(h1, m1, *ps), 5000))
    cases.append(("gru_fwd batch", lambda impl: impl.gru_fwd(hb, mb, *ps), 500))
    hn, z, r, hbar = pure.gru_fwd(hb, mb, *ps)
    g = rng.normal(size=(b, d_m))
    ws = [ps[0], ps[1], ps[3], ps[4], ps[6], ps[7]]
    cases.append(("gru_bwd batch", lambda impl: impl.gru_bwd(g, hb, mb, z, r, hbar, *ws), 500))

    xs = rng.normal(size=(b, dh)) * 5
    cases.append(("tanh_fwd batch", lambda impl: impl.tanh_fwd(xs), 2000))
    cases.append(("softplus_fwd batch", lambda impl: impl.softplus_fwd(xs), 2000))

    dts = rng.uniform(0, 1e4, size=b * 10)
    om, ph = rng.normal(size=8), rng.normal(size=8)
    cases.append(("time_encode_fwd", lambda impl: impl.time_encode_fwd(dts, om, ph), 1000))

    print(f"{'kernel':24s} {'pure':>12s} {'fast':>12s} {'speedup':>9s}")
    for name, call, repeat in cases:
        tp = timeit(lambda: call(pure), repeat=repeat)
        tf = timeit(lambda: call(_fast), repeat=repeat)
        print(f"{name:24s} {tp * 1e6:10.1f}us {tf * 1e6:10.1f}us {tp / tf:8.2f}x")


def train_once():
    from rtgnsvdd.config import RunConfig
    from rtgnsvdd.data import chronological_split, standardize, synth_generate
    from rtgnsvdd.heads import train

    cfg = RunConfig(synth_normal_events=4000, synth_attack_events=100, synth_nodes=60,
                    train_epochs=5)
    ds = synth_generate(cfg.synth_config())
    splits = chronological_split(ds, cfg.split_spec())
    tr, _, _, scaler = standardize(splits.train, splits.val, splits.test)
    t0 = time.perf_counter()
    train(tr, ds.n_nodes, cfg.encoder_config(ds.n_features), cfg.train_config(), scaler)
    return time.perf_counter() - t0


def bench_end_to_end():
    here = train_once()
    print(f"train 5 epochs x 2800 events [{backend_name()}]: {here:.2f}s")
    env = dict(os.environ, RTGNSVDD_BACKEND="pure")
    subprocess.run([sys.executable, __file__, "--train-only"], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--end-to-end", action="store_true",
                        help="also compare a full training run on both backends")
    parser.add_argument("--train-only", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.train_only:
        here = train_once()
        print(f"train 5 epochs x 2800 events [{backend_name()}]: {here:.2f}s")
        return

    print(f"active backend: {backend_name()}")
    bench_kernels()
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
