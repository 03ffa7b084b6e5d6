import time
from contextlib import contextmanager
from typing import Optional

from agent_logit.io.logging_utils import logger


class Timer:
    """
    Wall time of a pipeline stage, kept on `elapsed`.
    With a label, the time is also logged at DEBUG on exit.
    """

    def __init__(self, label: Optional[str] = None):
        self.label = label
        self.start = 0.0
        self.elapsed = 0.0

    def __enter__(self) -> "Timer":
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self.start
        if self.label:
            logger.debug(f"[TIMER] {self.label}: {self.elapsed:.4f} s")


@contextmanager
def walltime(label: str):
    """
    Logs the wall time of the wrapped block.
    Wall times go to the log only, never into result files.
    """
    with Timer() as timer:
        yield timer
    logger.info(f"[TIMER] {label}: {timer.elapsed:.4f} s")
