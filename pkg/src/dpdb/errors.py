"""Exception hierarchy shared by every storage system in the package."""


class DPStoreError(Exception):
    """Base class for all package errors."""


class ParameterError(DPStoreError, ValueError):
    """An argument is outside the operation's domain."""


class BudgetExceededError(DPStoreError):
    def __init__(self, label: str, requested: float, remaining: float):
        self.label = label
        self.requested = requested
        self.remaining = remaining
        super().__init__(
            f"charge {label!r} of eps={requested:g} exceeds remaining budget {remaining:g}"
        )


class UndershootError(DPStoreError):
    """A released count fell below the true count (the probability-beta event)."""


class BucketOverflowError(DPStoreError):
    """A bucket holds more real records than its padded capacity."""


class ProtocolError(DPStoreError):
    """The client asked the server for something outside the stored data."""


class OramOverflowError(DPStoreError):
    """The Path ORAM stash grew past its configured bound."""


class CapacityError(DPStoreError):
    """No spare ORAM addresses are left for an insertion."""


class UnsupportedOperationError(DPStoreError):
    pass
