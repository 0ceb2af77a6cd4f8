"""Exception hierarchy shared by all pixdoherty modules."""


class PixDohertyError(Exception):
    """Base class for every error raised by this package."""


# network algebra
class SingularAugmentedMatrix(PixDohertyError):
    pass


class SingularReflection(PixDohertyError):
    pass


class ResonantTermination(PixDohertyError):
    pass


class NonReciprocalInput(PixDohertyError):
    pass


# ideal theory / load-pull synthesis
class NoRealSolution(PixDohertyError):
    pass


class NonPositiveResistance(PixDohertyError):
    pass


class PowerMismatch(PixDohertyError):
    pass


class DegenerateDenominator(PixDohertyError):
    pass


class NoSolution(PixDohertyError):
    pass


# layouts and datasets
class ParseError(PixDohertyError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class NonSquareGrid(PixDohertyError):
    pass


class SingularMesh(PixDohertyError):
    pass


class ConnectivityStarvation(PixDohertyError):
    pass


class IoFailure(PixDohertyError):
    pass


# surrogate
class ShapeMismatch(PixDohertyError):
    pass


class LengthMismatch(PixDohertyError):
    pass


class DivergedLoss(PixDohertyError):
    pass


# genetic search
class GridMismatch(PixDohertyError):
    pass


class DimMismatch(PixDohertyError):
    pass


class EvaluatorFailure(PixDohertyError):
    def __init__(self, message, generation=None, index=None):
        super().__init__(f"{message} (generation={generation}, individual={index})")
        self.generation = generation
        self.index = index
