"""Exception types raised by the collocation package."""

from typing import Optional


class CallbackShapeError(ValueError):
    """A user callback returned an array of the wrong shape."""

    def __init__(self, message: str, interval: Optional[int] = None, node: Optional[int] = None):
        location = []
        if interval is not None:
            location.append(f"interval {interval}")
        if node is not None:
            location.append(f"node {node}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.interval = interval
        self.node = node


class OperatorConstructionError(RuntimeError):
    """Operator construction produced inconsistent results."""


class CostateSystemError(RuntimeError):
    """A per-interval costate system could not be solved."""

    def __init__(self, message: str, interval: int):
        super().__init__(f"{message} (interval {interval})")
        self.interval = interval
