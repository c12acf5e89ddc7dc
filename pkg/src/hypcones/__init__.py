"""Graded cones, growth rates and conformal measures for hyperbolic dynamics.

Two concrete model families are supported: preimage cones of hyperbolic
complex rational maps (:mod:`hypcones.rational`) and word cones of
subshifts of finite type (:mod:`hypcones.sft`).
"""

__version__ = "0.1.0"


class InputError(ValueError):
    """Invalid argument to an operation."""


class DepthError(InputError):
    """A cone is not deep enough for the requested query."""


class ResourceError(RuntimeError):
    """A node or iteration budget was exceeded."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""
