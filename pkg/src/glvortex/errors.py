"""Exception types raised by the solvers and diagnostics."""


class GLError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(GLError):
    pass


class GridTooCoarse(GLError):
    pass


class OutOfDomain(GLError):
    pass


class BoundaryLeak(GLError):
    pass


class EigsolverFailure(GLError):
    pass


class SubspaceDeficient(GLError):
    pass


class OutsideTube(GLError):
    pass


class Degenerate(GLError):
    """Jacobi operator has (numerically) nontrivial kernel."""


class DegenerateJacobi(Degenerate):
    """Raised by the outer balancing loop when the Jacobi operator is singular."""


class TubeTooNarrow(GLError):
    pass


class VTooLarge(GLError):
    pass


class GramSingular(GLError):
    pass


class NewtonDiverged(GLError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = list(trace or [])


class ProjLoss(NewtonDiverged):
    pass


class OuterDiverged(NewtonDiverged):
    pass


class PatchTooSmall(GLError):
    pass


class ConfigError(GLError):
    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = path
