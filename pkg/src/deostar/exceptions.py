"""Exception hierarchy shared by every module."""

import numpy as np


class DeostarError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DeostarError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(DeostarError, ValueError):
    """A run configuration is malformed or inconsistent."""


class InternalError(DeostarError, RuntimeError):
    """An invariant that should hold by construction was violated."""


class NumericalError(DeostarError, ArithmeticError):
    """A non-finite value appeared during sampling.

    The offending position is kept on the exception so callers can log it.
    """

    def __init__(self, message, position=None, iteration=None):
        self.position = None if position is None else np.array(position, dtype=float)
        self.iteration = iteration
        detail = message
        if iteration is not None:
            detail += f" at iteration {iteration}"
        if position is not None:
            detail += f" (position={np.array2string(self.position, precision=6)})"
        super().__init__(detail)
