"""
Path batching and the worker pool.

Monte Carlo paths are independent, so they are grouped into batches of path
indices and the batches are run on a thread pool. The compiled kernels release
the GIL, so threads scale. Results come back in submission order, which keeps
reductions bitwise reproducible regardless of the worker count.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "AMBICTRL_THREADS"


def worker_count(requested: Optional[int] = None) -> int:
    """
    Number of worker threads to use.

    Args:
        requested: Explicit request; None uses the CPU count

    Returns:
        The request capped by ``AMBICTRL_THREADS`` when that is set, at least 1
    """
    count = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
    return max(1, count)


def map_ordered(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Apply ``fn`` to every item on a thread pool and return results in item order."""
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Moments:
    """
    Running (sum, sum of squares, count) of a sample.

    Merging is associative, so per-batch moments combine into the total.
    """

    total: float = 0.0
    total_sq: float = 0.0
    count: int = 0

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> "Moments":
        arr = np.fromiter(samples, dtype=np.float64)
        return cls(float(arr.sum()), float(arr @ arr), int(arr.size))

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.total + other.total, self.total_sq + other.total_sq, self.count + other.count)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        if self.count < 2:
            return math.nan
        return max(0.0, (self.total_sq - self.count * self.mean**2) / (self.count - 1))

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count >= 2 else math.nan


class PathBatcher:
    """
    Groups path indices into batches and runs them on worker threads.

    Attributes:
        batch_size: Number of paths per batch
        workers: Requested worker count (capped by ``AMBICTRL_THREADS``)
        current_batch: Path indices waiting to be flushed
    """

    def __init__(self, batch_size: int = 256, workers: Optional[int] = None) -> None:
        """Initialize the path batcher."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.batch_size = batch_size
        self.workers = workers
        self.current_batch: List[int] = []

    def add_path(self, index: int) -> bool:
        """
        Add a path index to the current batch.

        Returns:
            True if the batch should be flushed, False otherwise
        """
        self.current_batch.append(index)
        return len(self.current_batch) >= self.batch_size

    def reset(self) -> None:
        """Reset the current batch."""
        self.current_batch = []

    def flush(self, callback: Callable[[List[int]], R]) -> Optional[R]:
        """
        Run the current batch synchronously and reset it.

        Returns:
            The callback result, or None for an empty batch
        """
        if not self.current_batch:
            return None
        batch = self.current_batch
        self.reset()
        return callback(batch)

    def batches(self, indices: Iterable[int]) -> List[List[int]]:
        """Split indices into batches, in order."""
        out: List[List[int]] = []
        for index in indices:
            if self.add_path(index):
                out.append(self.current_batch)
                self.reset()
        if self.current_batch:
            out.append(self.current_batch)
            self.reset()
        return out

    def process_paths(self, indices: Iterable[int], callback: Callable[[List[int]], R]) -> List[R]:
        """
        Run every batch of ``indices`` through ``callback`` on the worker pool.

        Args:
            indices: Path indices to process
            callback: Function run on one batch of indices

        Returns:
            Callback results in batch order
        """
        batches = self.batches(indices)
        logger.debug(f"Processing {sum(len(b) for b in batches)} path(s) in {len(batches)} batch(es)")
        return map_ordered(callback, batches, self.workers)
