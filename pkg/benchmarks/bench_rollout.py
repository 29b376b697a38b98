"""Wall-clock comparison of the numba and numpy rollout kernels.

The trajectory kernel is the only runtime-dominant loop in the package;
solvers operate on tiny matrices.  This script times both backends on the
same pre-drawn randomness (one unmeasured warm-up run lets numba JIT
before timing) and prints mean/std over repeats plus the speedup, both
end-to-end through ``simulate`` (which includes the counter-based
per-trajectory sampling) and for the arithmetic kernel alone.

Run:

    python benchmarks/bench_rollout.py [--n-traj N] [--repeats R]
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

import lqnash as lq
from lqnash import _rollout
from lqnash.evaluate import _policy_cholesky


def build_case():
    spec = lq.random_game(3, 10, 4, 2, seed=20240601, scale=0.5)
    sol = lq.exact_ne(spec)
    return spec, sol.policy


def timed(fn, repeats):
    durations = []
    checksum = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        durations.append(time.perf_counter() - t0)
        if checksum is None:
            checksum = float(np.asarray(result).sum())
    return {
        "mean": statistics.mean(durations),
        "std": statistics.pstdev(durations) if repeats > 1 else 0.0,
        "checksum": checksum,
    }


def print_table(title, rows):
    print(f"\n{title}")
    header = f"{'backend':10s} {'mean(s)':>10s} {'std(s)':>9s} {'checksum':>16s}"
    print(header)
    print("-" * len(header))
    for name, row in rows:
        print(f"{name:10s} {row['mean']:10.4f} {row['std']:9.4f} {row['checksum']:16.8f}")
    if len(rows) == 2:
        a, b = rows[0][1], rows[1][1]
        if abs(a["checksum"] - b["checksum"]) > 1e-8 * (1 + abs(a["checksum"])):
            print("[warn] backend checksums differ beyond accumulation-order tolerance")
        print(f"speedup (numpy / numba): {a['mean'] / b['mean']:.2f}x")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-traj", type=int, default=20_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    spec, policy = build_case()
    n_traj = args.n_traj
    print(f"case: agents=3 horizon=10 state_dim=4 action_dim=2 n_traj={n_traj}")

    backends = ["numpy"]
    if _rollout.HAVE_NUMBA:
        print("[warmup] one unmeasured numba run (JIT compile)")
        lq.simulate(spec, policy, min(1000, n_traj), seed=99, backend="numba")
        backends.append("numba")
    else:
        print("[info] numba not importable; timing the numpy path only")

    rows = [
        (b, timed(lambda b=b: lq.simulate(spec, policy, n_traj, seed=99, backend=b).mean_costs,
                  args.repeats))
        for b in backends
    ]
    print_table("simulate end-to-end (sampling + kernel)", rows)

    gains = lq.stack_gains(policy)
    chol, logdets = _policy_cholesky(lq.stack_covs(policy))
    rng = np.random.default_rng(99)
    m, T, N, p = spec.state_dim, spec.horizon, spec.num_agents, spec.action_dim
    x0s = rng.normal(size=(n_traj, m))
    xis = rng.normal(size=(n_traj, T, N, p))
    omegas = 0.1 * rng.normal(size=(n_traj, T, m))

    def kernel_only(backend):
        _, _, costs = _rollout.rollout(
            spec.A, spec.B, spec.Q, spec.R, gains, chol, logdets, spec.tau,
            x0s, xis, omegas, backend=backend,
        )
        return costs.mean(axis=0)

    rows = [(b, timed(lambda b=b: kernel_only(b), args.repeats)) for b in backends]
    print_table("rollout kernel only (pre-drawn normals)", rows)


if __name__ == "__main__":
    main()
