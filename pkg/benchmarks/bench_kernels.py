"""Benchmark the numba CSR kernels against the pure-numpy fallback.

Times the masked-layer forward/backward batch kernels over a range of
graph sizes, plus one end-to-end conversion-layer training run per
backend. Run as:

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from orthomask import kernels
from orthomask.dataio import SyntheticSpec, generate_synthetic
from orthomask.orthograph import BiadjacencyMatrix
from orthomask.training import TrainConfig, initialize_conversion_layer, train_conversion

CASES = [
    # n_targets, n_sources, density, batch
    (20, 30, 0.10, 400),
    (200, 300, 0.05, 256),
    (1000, 2000, 0.01, 128),
    (4000, 8000, 0.002, 64),
]


def random_csr(rng, n_t, n_s, density):
    take = rng.uniform(0.0, 1.0, (n_t, n_s)) < density
    rows, cols = np.nonzero(take)
    mask = BiadjacencyMatrix(
        [f"t{i}" for i in range(n_t)],
        [f"s{j}" for j in range(n_s)],
        zip(rows.tolist(), cols.tolist()),
    )
    return mask, rng.normal(0.0, 1.0, mask.n_edges)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    print(f"{'case':>24} {'kernel':>9}", *(f"{b:>12}" for b in backends), f"{'speedup':>9}")
    for n_t, n_s, density, batch in CASES:
        mask, data = random_csr(rng, n_t, n_s, density)
        xs = rng.normal(0.0, 1.0, (batch, n_s))
        upstream = rng.normal(0.0, 1.0, (batch, n_t))
        label = f"{n_t}x{n_s} d={density} b={batch}"

        results = {}
        for backend in backends:
            kernels.set_backend(backend)
            if backend == "numba":
                kernels.csr_matvec_batch(mask.indptr, mask.edge_cols, data, xs)
                kernels.csr_backward_batch(mask.indptr, mask.edge_cols, data, xs, upstream)
            results[backend] = (
                best_of(lambda: kernels.csr_matvec_batch(mask.indptr, mask.edge_cols, data, xs), repeats),
                best_of(
                    lambda: kernels.csr_backward_batch(mask.indptr, mask.edge_cols, data, xs, upstream),
                    repeats,
                ),
            )

        for k, name in enumerate(("forward", "backward")):
            row = [f"{results[b][k] * 1e3:10.3f}ms" for b in backends]
            speedup = (
                f"{results['numpy'][k] / results['numba'][k]:8.1f}x"
                if "numba" in results
                else "      n/a"
            )
            print(f"{label:>24} {name:>9}", *row, speedup)

        # both paths must agree numerically
        kernels.set_backend(backends[0])
        ref = kernels.csr_matvec_batch(mask.indptr, mask.edge_cols, data, xs)
        for backend in backends[1:]:
            kernels.set_backend(backend)
            alt = kernels.csr_matvec_batch(mask.indptr, mask.edge_cols, data, xs)
            gap = np.max(np.abs(ref - alt)) if ref.size else 0.0
            assert gap <= 1e-10, f"backends disagree by {gap}"


def bench_training(repeats):
    bundle = generate_synthetic(SyntheticSpec(300, 200, 0.02, 400, 0.05, 16, 1))
    cfg = TrainConfig(steps=200)
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    print()
    print(f"end-to-end: 200 hard-mode steps, {bundle.graph.n_edges} edges, 320 train samples")
    for backend in backends:
        kernels.set_backend(backend)

        def run():
            layer = initialize_conversion_layer(
                bundle.graph, "hard", cfg.init, np.random.default_rng(cfg.seed)
            )
            train_conversion(layer, bundle.frozen_net, bundle.train, cfg)

        if backend == "numba":
            run()  # compile before timing
        print(f"  {backend:>6}: {best_of(run, max(1, repeats // 2)):.3f}s")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats per case")
    args = ap.parse_args()
    print(f"active backend at import: {kernels.active_backend()}")
    bench_kernels(args.repeats)
    bench_training(args.repeats)


if __name__ == "__main__":
    main()
