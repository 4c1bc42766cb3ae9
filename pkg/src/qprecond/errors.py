"""Exception types shared across the package.

The CLI maps :class:`InvariantViolation` (and subclasses) plus
:class:`DivergenceError` to exit code 2 and :class:`InputError` to exit code 3.
"""


class InvariantViolation(RuntimeError):
    """A runtime-checked inequality of an algorithm failed."""


class ContractViolation(InvariantViolation):
    """A quantizer was called with ``||x - x_ref|| > y``.

    ``name`` identifies the call site (which inequality was being relied on),
    ``distance`` and ``radius`` carry the offending numbers.
    """

    def __init__(self, name, distance, radius):
        self.name = name
        self.distance = float(distance)
        self.radius = float(radius)
        super().__init__(
            f"{name}: input distance {self.distance:.6g} exceeds quantizer radius "
            f"{self.radius:.6g} (slack {self.radius - self.distance:.3g})"
        )


class DivergenceError(RuntimeError):
    """Iterate error grew by 10x or more over 10 rounds."""


class InputError(ValueError):
    """Malformed user input: data files, configs, problem shapes."""


class RankDeficientError(InputError):
    """Stacked data matrix does not have full column rank."""
