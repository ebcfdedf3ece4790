"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A network spec, config document, or parameter set is invalid."""


class FormatError(ValueError):
    """A binary container or IDX file is malformed or truncated."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""


class SearchInfeasible(RuntimeError):
    """No genome satisfies the active hardware constraint."""


class EvaluationError(RuntimeError):
    """A genome evaluator failed; carries the offending genome."""

    def __init__(self, message, genome=None):
        super().__init__(message)
        self.genome = genome
