"""Exception hierarchy shared by all gnet modules."""


class GNetError(Exception):
    """Base class for every error raised by gnet."""


class InvalidParameterError(GNetError, ValueError):
    pass


class InvalidInputError(GNetError, ValueError):
    pass


class DegenerateNeuronError(GNetError, ValueError):
    """A non-output neuron has no outgoing weight mass, so its rate would be 0."""

    def __init__(self, neuron, msg=None):
        self.neuron = neuron
        super().__init__(msg or f"neuron {neuron} has zero outgoing weight mass; its rate would be 0")


class TopologyError(GNetError, ValueError):
    pass


class NonConvergenceError(GNetError, RuntimeError):
    def __init__(self, residual, iterations, msg=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(msg or f"fixed point not reached after {iterations} iterations (residual {residual:.3e})")


class SingularSystemError(GNetError, ArithmeticError):
    pass


class ShapeError(GNetError, ValueError):
    pass


class NonErgodicError(GNetError, ValueError):
    pass


class TruncationError(GNetError, ValueError):
    """CTMC truncation cap too small: probability mass piles up at the boundary."""


class GuardError(GNetError, ValueError):
    """A problem exceeds the size guards of an oracle."""


class ScalerError(GNetError, ValueError):
    pass


class ParseError(GNetError, ValueError):
    pass


class IllConditionedError(GNetError, ArithmeticError):
    pass


class NotFittedError(GNetError, RuntimeError):
    pass


class ConfigError(GNetError, ValueError):
    def __init__(self, field, msg):
        self.field = field
        super().__init__(f"{field}: {msg}")
