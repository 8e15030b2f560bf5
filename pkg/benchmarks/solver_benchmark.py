"""
Benchmark script for the shooting solver and the Monte Carlo engine.

This script measures solve times over mesh sizes and compares single-threaded
with multi-threaded path simulation on the shipped instance.
"""

import argparse
import time
from typing import List, Sequence, Tuple

from ambictrl import load_instance, reduce_instance
from ambictrl.batching import worker_count
from ambictrl.hjb import SolverConfig, ValueSolution, solve
from ambictrl.model import ReducedInstance
from ambictrl.players import FeedbackAdversary, ReflectingStrategy
from ambictrl.simulate import SimulationConfig, estimate


def benchmark_solve(red: ReducedInstance, eps: float, cells: int) -> Tuple[float, ValueSolution]:
    """Time one solve at the given mesh size."""
    start_time = time.perf_counter()
    sol = solve(red, eps, SolverConfig(cells=cells))
    return time.perf_counter() - start_time, sol


def benchmark_paths(red: ReducedInstance, sol: ValueSolution, n_paths: int, dt: float, workers: int) -> float:
    """Time a feedback-adversary estimate with the given number of workers."""
    config = SimulationConfig(dt=dt, n_paths=n_paths, seed=1, workers=workers)
    start_time = time.perf_counter()
    estimate(red, ReflectingStrategy(sol.beta), FeedbackAdversary(sol), 0.0, sol.eps, config)
    return time.perf_counter() - start_time


def warm_up(red: ReducedInstance) -> ValueSolution:
    """Compile the numba kernels before timing."""
    sol = solve(red, red.eps, SolverConfig(cells=1024))
    estimate(red, ReflectingStrategy(sol.beta), FeedbackAdversary(sol), 0.0, sol.eps, SimulationConfig(n_paths=2, horizon=0.1))
    return sol


def run(cells_list: Sequence[int], n_paths: int, dt: float, eps_list: Sequence[float]) -> None:
    inst, _ = load_instance()
    red = reduce_instance(inst)
    sol = warm_up(red)

    print("ambictrl Performance Benchmark")
    print("==============================")
    print()

    print("Solver")
    print("------")
    print(f"{'eps':<8} {'Cells':<10} {'Time (s)':<12} {'Iterations':<12} {'V(0)':<18} {'beta':<12}")
    print("-" * 72)
    for eps in eps_list:
        for cells in cells_list:
            elapsed, solved = benchmark_solve(red, eps, cells)
            print(f"{eps:<8g} {cells:<10} {elapsed:<12.4f} {solved.shoot_iterations:<12} {solved.s_star:<18.12g} {solved.beta:<12.6g}")
    print()

    workers: List[int] = sorted({1, worker_count()})
    print("Monte Carlo")
    print("-----------")
    print(f"{'Paths':<10} {'Workers':<10} {'Time (s)':<12} {'Paths/s':<12} {'Speedup':<10}")
    print("-" * 56)
    baseline = None
    for count in workers:
        elapsed = benchmark_paths(red, sol, n_paths, dt, count)
        baseline = baseline or elapsed
        speedup = baseline / elapsed if elapsed > 0 else 0
        print(f"{n_paths:<10} {count:<10} {elapsed:<12.4f} {n_paths / elapsed:<12.1f} {speedup:<10.2f}x")


def main() -> None:
    """Run the benchmark suite."""
    parser = argparse.ArgumentParser(description="Benchmark the ambictrl solver and simulator")
    parser.add_argument("--cells", type=int, nargs="+", default=[1024, 4096, 16384], help="Mesh sizes to time")
    parser.add_argument("--eps", type=float, nargs="+", default=[0.0, 1.0], help="Ambiguity values to time")
    parser.add_argument("--paths", type=int, default=2000, help="Paths per Monte Carlo run")
    parser.add_argument("--dt", type=float, default=1e-3, help="Euler step")
    args = parser.parse_args()
    run(args.cells, args.paths, args.dt, args.eps)


if __name__ == "__main__":
    main()
