"""Time the compiled and pure-Python tree kernels on the same workloads.

    python3 benchmarks/bench_kernels.py [--rows 2000] [--features 10] [--trees 20] [--repeat 3]

Both backends grow identical trees, so the comparison is purely about speed;
the script checks that equivalence before reporting timings.
"""

import argparse
import time

from structdiag import _kernels
from structdiag.classifiers import ClassifierSpec, permutation_importance, predict, train_random_forest
from structdiag.data import FeatureSet, select_features
from structdiag.synthetic import importance_example_spec, sample_mixture


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--features", type=int, default=10)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    spec = importance_example_spec()
    d = sample_mixture(spec, args.rows, seed=0)
    cols = list(range(min(args.features, d.p)))
    d = select_features(d, FeatureSet("bench", tuple(cols)))
    clf = ClassifierSpec(n_trees=args.trees)

    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the Python kernels are available")
    results = {}
    models = {}
    previous = _kernels.backend_name()
    try:
        for name in backends:
            _kernels.use_backend(name)
            models[name] = train_random_forest(d, clf, seed=1)
            results[name] = {
                "train": best_of(lambda: train_random_forest(d, clf, seed=1), args.repeat),
                "predict": best_of(lambda: predict(models[name], d.features), args.repeat),
                "importance": best_of(lambda: permutation_importance(models[name], d, seed=2), args.repeat),
            }
    finally:
        _kernels.use_backend(previous)

    if len(models) == 2:
        same = all(a == b for a, b in zip(models["python"].trees, models["cython"].trees))
        print(f"identical forests across backends: {same}")

    print(f"{args.rows} rows, {len(cols)} features, {args.trees} trees, best of {args.repeat}")
    print(f"{'task':<12}" + "".join(f"{b:>12}" for b in backends) + ("     speed-up" if len(backends) == 2 else ""))
    for task in ("train", "predict", "importance"):
        line = f"{task:<12}" + "".join(f"{results[b][task]:>11.4f}s" for b in backends)
        if len(backends) == 2:
            line += f"{results['python'][task] / results['cython'][task]:>12.1f}x"
        print(line)


if __name__ == "__main__":
    main()
