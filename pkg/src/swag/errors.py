"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes: configuration and usage problems
exit 2, numeric faults exit 3, I/O and format errors exit 4.
"""

from __future__ import annotations


class SwagError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SwagError, ValueError):
    """Inconsistent shapes, unknown layer kinds, bad architecture specs."""


class UsageError(SwagError, ValueError):
    """An API was called in a way its contract forbids."""


class NumericFault(SwagError, FloatingPointError):
    """A non-finite value appeared during a forward pass or optimization."""

    def __init__(self, message: str, *, op: str | None = None,
                 tap: str | None = None, step: int | None = None):
        super().__init__(message)
        self.op = op
        self.tap = tap
        self.step = step

    def __str__(self) -> str:
        parts = [super().__str__()]
        if self.op is not None:
            parts.append(f"op={self.op}")
        if self.tap is not None:
            parts.append(f"tap={self.tap}")
        if self.step is not None:
            parts.append(f"step={self.step}")
        return " ".join(parts)

    def __reduce__(self):
        # keep op/tap/step when faults cross process boundaries
        return (_rebuild_fault, (type(self), self.args[0], self.op, self.tap, self.step))


def _rebuild_fault(cls, message, op, tap, step):
    return cls(message, op=op, tap=tap, step=step)


class DivergenceError(NumericFault):
    """The loss stayed far above its initial value for too long."""


class FormatError(SwagError):
    """A file could not be parsed; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset

    def __reduce__(self):
        # the message already carries the offset suffix
        return (_rebuild_format, (type(self), self.args[0], self.offset))


class ImageFormatError(FormatError):
    pass


class BundleError(FormatError):
    pass


class BundleChecksumError(BundleError):
    pass


class BundleVersionError(BundleError):
    pass


class BundleEntryError(BundleError):
    """A parameter is missing from a bundle or has the wrong shape."""

    def __init__(self, message: str, name: str):
        super().__init__(message)
        self.name = name

    def __reduce__(self):
        return (type(self), (self.args[0], self.name))


def _rebuild_format(cls, message, offset):
    err = cls.__new__(cls)
    Exception.__init__(err, message)
    err.offset = offset
    return err
