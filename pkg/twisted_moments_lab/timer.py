import functools
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Iterator

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class Stopwatch:
    start: float = 0.0
    elapsed_ms: float = 0.0


@contextmanager
def stopwatch() -> Iterator[Stopwatch]:
    watch = Stopwatch(start=time.perf_counter())
    try:
        yield watch
    finally:
        watch.elapsed_ms = (time.perf_counter() - watch.start) * 1000.0


def async_timed():
    def wrapper(func: Callable) -> Callable:
        @functools.wraps(func)
        async def wrapped(*args, **kwargs) -> Any:
            start = time.perf_counter()
            try:
                return await func(*args, **kwargs)
            finally:
                total = time.perf_counter() - start
                logger.info(f"{func.__name__} completed in {total:.4f} s")

        return wrapped

    return wrapper
