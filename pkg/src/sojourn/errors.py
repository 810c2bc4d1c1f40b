class ConfigError(ValueError):
    """A parameter violates a documented precondition.

    ``param`` names the offending parameter so that the CLI can report it.
    """

    def __init__(self, param, message):
        self.param = param
        super().__init__(f"{param}: {message}")


class NumericalError(ArithmeticError):
    """A computation failed to converge or produced non-finite values."""
