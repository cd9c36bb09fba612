"""Exception hierarchy.

Every domain error carries a ``category`` (the class name) so the CLI can
print a single machine-parsable line on failure.
"""


class NlosError(Exception):
    exit_code = 1

    @property
    def category(self) -> str:
        return type(self).__name__


class UsageError(NlosError):
    exit_code = 2


class ShapeMismatch(NlosError, ValueError):
    pass


class OutOfRange(NlosError, ValueError):
    pass


class InvalidSnr(NlosError, ValueError):
    pass


class DegenerateWindow(NlosError, ValueError):
    pass


class NonPositiveDepth(NlosError, ValueError):
    pass


class NonFiniteLoss(NlosError, FloatingPointError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"loss became {value!r} at epoch {epoch}")
        self.epoch = epoch


class DegenerateCrop(NlosError, ValueError):
    pass


class TooSmall(NlosError, ValueError):
    pass


class EmptyMask(NlosError, ValueError):
    pass


class BadMagic(NlosError):
    pass


class TruncatedFile(NlosError):
    pass


class VersionUnsupported(NlosError):
    pass


class SceneError(NlosError, ValueError):
    pass


class IoError(NlosError, OSError):
    pass
