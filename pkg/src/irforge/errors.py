"""Exception hierarchy.

Every error raised by the library derives from :class:`IRForgeError` and
carries a stable ``code`` (the class name) so that manifests and CLI
diagnostics can report failures without pickling exception objects.
"""


class IRForgeError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


# imagecore
class DimensionMismatch(IRForgeError, ValueError):
    pass


class EmptyMask(IRForgeError, ValueError):
    pass


class OutOfFrame(IRForgeError, ValueError):
    pass


class AssetError(IRForgeError):
    """An image, mask or bundle on disk is missing or malformed."""


# metrics
class InvalidCalibration(IRForgeError, ValueError):
    pass


class ZeroClutter(IRForgeError, ValueError):
    pass


class ZeroContrast(IRForgeError, ValueError):
    pass


class EmptyTarget(IRForgeError, ValueError):
    pass


class VisibilityNotSubset(IRForgeError, ValueError):
    pass


class LayoutInconsistent(IRForgeError, ValueError):
    pass


# thermal
class MissingRegionLambda(IRForgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SamplerStuck(IRForgeError, RuntimeError):
    pass


# solver
class InfeasibleK(IRForgeError, ValueError):
    pass


class DegenerateTarget(IRForgeError, ValueError):
    pass


class Unachievable(IRForgeError, ValueError):
    pass


class InvalidConstraint(IRForgeError, ValueError):
    pass


# pipeline / cli
class TargetTooLarge(IRForgeError, ValueError):
    pass


class EmptySweep(IRForgeError, ValueError):
    pass


class ConfigError(IRForgeError, ValueError):
    pass


class SceneBuildError(IRForgeError):
    """A scene failed; ``step`` names the pipeline stage and ``cause`` the original error."""

    def __init__(self, step: str, cause: Exception):
        self.step = step
        self.cause = cause
        cause_code = getattr(cause, "code", type(cause).__name__)
        super().__init__(f"step {step}: {cause_code}: {cause}")

    @property
    def cause_code(self) -> str:
        return getattr(self.cause, "code", type(self.cause).__name__)
