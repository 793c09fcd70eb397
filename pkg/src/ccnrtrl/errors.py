"""Exception types shared across the package."""


class UsageError(ValueError):
    """Shapes, widths or arguments that violate an operation's contract."""


class NumericFault(FloatingPointError):
    """A non-finite value appeared in the learning loop.

    ``diagnostics`` carries whatever the raising site knew (step index,
    feature values, TD error).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
