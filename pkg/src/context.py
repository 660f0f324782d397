"""Context variables for the application."""

import logging
from contextvars import ContextVar

# Label of the sweep point being computed by the current worker
current_sweep_point: ContextVar[str] = ContextVar("current_sweep_point", default="-")


def get_sweep_point() -> str:
    """Get the current sweep point label."""
    return current_sweep_point.get()


def set_sweep_point(label: str) -> None:
    """Set the current sweep point label."""
    current_sweep_point.set(label)


class SweepPointFilter(logging.Filter):
    """Attach the current sweep point to every log record as ``point``."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.point = get_sweep_point()
        return True
