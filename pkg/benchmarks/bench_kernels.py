"""Time the numpy and numba kernel implementations on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Numba compile time is excluded (one warm-up call per kernel). Each result
row also reports the max absolute difference between the two backends.
"""

import argparse
import json
import time

import numpy as np

from drivestyle import kernels


def make_inputs(rng):
    n_pairs = 20000
    rect = (
        rng.uniform(-50, 50, n_pairs), rng.uniform(-50, 50, n_pairs), rng.uniform(-np.pi, np.pi, n_pairs),
        np.full(n_pairs, 4.5), np.full(n_pairs, 2.0),
        rng.uniform(-50, 50, n_pairs), rng.uniform(-50, 50, n_pairs), rng.uniform(-np.pi, np.pi, n_pairs),
        np.full(n_pairs, 4.5), np.full(n_pairs, 2.0),
    )
    n_pts = 200
    centres = rng.uniform(-25, 25, size=(12, 2))
    edges = []
    for cx, cy in centres:
        c = np.array([[cx - 2, cy - 1], [cx + 2, cy - 1], [cx + 2, cy + 1], [cx - 2, cy + 1]])
        edges.extend(np.hstack([c, np.roll(c, -1, axis=0)]))
    occl = (rng.uniform(-10, 10, n_pts), rng.uniform(-10, 10, n_pts), np.array(edges), 30.0, 180)
    s = np.linspace(0, 200, 401)
    poly = (rng.uniform(0, 200, 5000), rng.uniform(-5, 5, 5000), s, 3.0 * np.sin(s / 30.0))
    a = rng.normal(size=(6, 6))
    maha = (rng.normal(size=(50000, 6)), np.zeros(6), np.linalg.inv(a @ a.T + np.eye(6)))
    t = np.arange(51) * 0.1
    states = np.column_stack([10 * t, np.zeros_like(t), np.full_like(t, 10.0), np.zeros_like(t), np.zeros_like(t)])
    roll = (np.tile(states, (200, 1)), 0.1)
    return {
        "rect_distance": rect,
        "occluded_fraction": occl,
        "polyline_nearest": poly,
        "sq_mahalanobis": maha,
        "rollout_residuals": roll,
    }


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o, dtype=float)) for o in out])
    return np.ravel(out)


def bench(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write results here")
    args = p.parse_args(argv)

    inputs = make_inputs(np.random.default_rng(args.seed))
    backends = sorted(kernels.IMPLEMENTATIONS)
    rows = []
    print(f"{'kernel':<20}" + "".join(f"{b + ' ms':>12}" for b in backends) + f"{'speedup':>10}{'max|diff|':>12}")
    for name, fargs in inputs.items():
        times = {b: bench(kernels.IMPLEMENTATIONS[b][name], fargs, args.repeat) for b in backends}
        outs = {b: _flat(kernels.IMPLEMENTATIONS[b][name](*fargs)) for b in backends}
        diff = float(np.max(np.abs(outs[backends[0]] - outs[backends[-1]]))) if len(backends) > 1 else 0.0
        speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        rows.append({"kernel": name, **{f"{b}_s": times[b] for b in backends}, "speedup": speed, "max_abs_diff": diff})
        print(f"{name:<20}" + "".join(f"{times[b] * 1e3:>12.3f}" for b in backends) + f"{speed:>10.1f}{diff:>12.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
