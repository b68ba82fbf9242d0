"""Exception types shared across the compiler and runtime."""


class FormatError(ValueError):
    """Model file violates the MFJ schema. Carries the offending JSON path."""

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class RangeError(ValueError):
    """A datum falls outside the representable range of its element type."""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with an operator's contract."""


class SizeError(ValueError):
    """Runtime input length does not match the compiled input spec."""


class UnsupportedError(ValueError):
    """Operator or attribute combination outside the supported set."""


class InfeasibleError(RuntimeError):
    """No paging configuration brings the plan under the RAM budget."""

    def __init__(self, message, step_index=None):
        self.step_index = step_index
        super().__init__(message)
