"""Exception hierarchy shared by every sketchbench module."""


class SketchbenchError(Exception):
    """Base class for all library errors."""


class BadDims(SketchbenchError, ValueError):
    pass


class DimMismatch(SketchbenchError, ValueError):
    pass


class RankDeficient(SketchbenchError, ValueError):
    pass


class EmptySet(SketchbenchError, ValueError):
    pass


class BadParams(SketchbenchError, ValueError):
    pass


class DivisibilityViolated(BadParams):
    pass


class NonIntegerCount(BadParams):
    pass


class ScoresMissing(BadParams):
    pass


class ProbabilityOverflow(BadParams):
    pass


class StageDimsInconsistent(BadParams):
    pass


class NotPowerOfTwo(SketchbenchError, ValueError):
    pass


class AllZeroWeights(SketchbenchError, ValueError):
    pass


class ScoreViolation(SketchbenchError, ValueError):
    pass


class ParseError(SketchbenchError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.column = column
