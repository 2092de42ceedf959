"""Exception hierarchy shared by all modules."""


class MPLabError(Exception):
    """Base class; the CLI turns these into machine-readable error objects."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DomainError(MPLabError, ValueError):
    kind = "domain"


class SolverError(MPLabError, RuntimeError):
    kind = "solver"


class HalfSpaceError(MPLabError, ValueError):
    kind = "halfspace"


class FunctionalError(MPLabError, ValueError):
    kind = "functional"


class PathError(MPLabError, ValueError):
    kind = "path"


class HypothesisFailure(MPLabError, RuntimeError):
    """No low-slope point found where the minimax argument requires one.

    ``diagnostics`` carries the center and radius of the offending ball and
    the slopes measured during the search.
    """

    kind = "hypothesis_failure"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["diagnostics"] = {k: v for k, v in self.diagnostics.items() if not hasattr(v, "values")}
        return d


class BudgetExhausted(MPLabError, RuntimeError):
    kind = "budget"

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(MPLabError, ValueError):
    kind = "config"
