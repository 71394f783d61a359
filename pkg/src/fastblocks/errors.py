"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError (and its
DegenerateInputError subclass) mean the inputs were structurally wrong or
degenerate (exit 1); ParseError means a config or annotation file could not
be read (exit 2, like any other I/O failure).
"""


class ValidationError(ValueError):
    """A shape, range, or consistency precondition was violated."""


class DegenerateInputError(ValidationError):
    """Input is structurally valid but carries no usable information
    (all-zero scale vector, comparison against a zero-cost baseline, ...)."""


class ParseError(ValueError):
    """A text artifact (model config, ground-truth/detection file) is malformed.

    `line` is the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingDiverged(RuntimeError):
    """The demo training loop produced a non-finite loss."""
