"""Exception types raised by the solvers."""


class RegMdpError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMdp(RegMdpError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid MDP: " + "; ".join(self.violations[:5]))


class SingularChain(RegMdpError):
    """The induced Markov chain has no unique stationary distribution."""


class CapExceeded(RegMdpError):
    pass


class SupportViolation(RegMdpError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class DomainError(RegMdpError, ValueError):
    pass


class NoConvergence(RegMdpError):
    """An iterative solver hit its iteration cap.

    ``trace`` holds the per-iteration ``(residual, gain)`` pairs recorded so far.
    """

    def __init__(self, message, trace=None, report=None):
        self.trace = trace or []
        self.report = report
        super().__init__(message)


class DualNotConverged(RegMdpError):
    def __init__(self, message, grad_norm):
        self.grad_norm = grad_norm
        super().__init__(message)


class InvalidGrid(RegMdpError, ValueError):
    pass
