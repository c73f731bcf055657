import os
import typing as tp
from concurrent.futures import ThreadPoolExecutor

T = tp.TypeVar("T")
R = tp.TypeVar("R")

DEFAULT_CHUNK_SIZE = 256


def default_jobs() -> int:
    return os.cpu_count() or 1


def chunk_slices(total: int, chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[slice]:
    """Fixed-size chunks; the split never depends on the worker count."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    return [slice(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def ordered_map(fn: tp.Callable[[T], R], items: tp.Sequence[T], jobs: int | None = None) -> list[R]:
    """Map ``fn`` over ``items`` on a thread pool, results in input order."""
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
