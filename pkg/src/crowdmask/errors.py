class CrowdMaskError(Exception):
    """Base class of every error raised on purpose by crowdmask"""
    exit_code = 1


class InputError(CrowdMaskError, ValueError):
    """Malformed file, unknown config key or inconsistent dimensions"""
    exit_code = 2


class PreconditionError(CrowdMaskError, ValueError):
    """An operation was called with inputs outside its contract"""
    exit_code = 3


class DivergenceError(CrowdMaskError, ArithmeticError):
    """Optimisation produced a non-finite state"""
    exit_code = 4

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss or field at step {step}")
