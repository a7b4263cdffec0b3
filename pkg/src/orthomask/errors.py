"""Exception types shared across the package."""


class ParseError(ValueError):
    """A file violates one of the documented TSV/JSON formats.

    Carries the offending path and, for line-oriented formats, the
    1-based line number.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}: "
            if line is not None:
                loc = f"{path}:{line}: "
        super().__init__(loc + message)


class UnknownGeneError(ValueError):
    """A gene ID was referenced that is absent from the relevant gene list."""


class InvalidStateError(RuntimeError):
    """An operation was applied to an object in the wrong state,
    e.g. training a frozen network or fine-tuning against an unfrozen one."""


class NumericalError(ArithmeticError):
    """A loss or gradient became non-finite during training/evaluation."""
