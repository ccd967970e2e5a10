"""Exception and warning types raised across the package."""


class LipidsError(Exception):
    """Base class for all package errors."""


class RangeError(LipidsError, ValueError):
    """An argument lies outside its admissible range."""


class HemisphereError(RangeError):
    """A direction points into the lower (z < 0) hemisphere."""


class ShapeError(LipidsError, ValueError):
    """Operand shapes are incompatible."""


class InputError(LipidsError, ValueError):
    """An input is empty or otherwise unusable."""


class ConfigurationError(LipidsError, ValueError):
    """Incompatible configuration values (e.g. more selections than bins)."""


class ConditioningError(LipidsError, ValueError):
    """A light matrix is coplanar or numerically ill-conditioned."""

    def __init__(self, condition_number):
        self.condition_number = float(condition_number)
        super().__init__(
            f"light matrix is ill-conditioned (condition number {self.condition_number:.3g})"
        )


class FeasibilityError(LipidsError, RuntimeError):
    """No valid configuration was found (a sampler gave up, or a selection repeats bins)."""


class CapError(LipidsError, ValueError):
    """An exhaustive search would exceed its combinatorial budget."""


class DatasetError(LipidsError, ValueError):
    """Samples in a training set are mutually inconsistent."""


class FormatError(LipidsError, ValueError):
    """A file on disk is malformed or missing."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class NotFittedError(LipidsError, AttributeError):
    """An estimator was used before ``fit``."""


class DuplicateSelectionWarning(UserWarning):
    """Two selection columns converged onto the same bin."""

    def __init__(self, bin_index, columns):
        self.bin_index = int(bin_index)
        self.columns = tuple(int(c) for c in columns)
        super().__init__(
            f"columns {self.columns} all selected bin {self.bin_index}; "
            "the selection is probably under-trained"
        )


class OrthogonalityWarning(UserWarning):
    """No light triple on the grid is orthogonal within tolerance."""
