"""Exception hierarchy shared by all modules."""


class ConsumaxError(Exception):
    pass


class InputError(ConsumaxError, ValueError):
    """Invalid arguments or data (out of domain, wrong shape, bad config)."""


class HypothesisViolation(InputError):
    """An analytic hypothesis required downstream does not hold.

    ``condition`` names the violated condition in words so that callers can
    surface it without parsing the message.
    """

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class SmallnessViolated(HypothesisViolation):
    def __init__(self, message):
        super().__init__(message, condition="smallness of ||v0||_inf")


class NumericalError(ConsumaxError, RuntimeError):
    """A numerical kernel failed (residual too large, invariant broken)."""

    def __init__(self, message, residual=None, t=None):
        super().__init__(message)
        self.residual = residual
        self.t = t


class CFLViolation(NumericalError):
    pass
