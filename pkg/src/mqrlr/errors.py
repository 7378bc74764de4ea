"""Exception hierarchy shared by all mqrlr modules."""


class MqrError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MqrError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(MqrError, ValueError):
    pass


class DegenerateCovariateError(MqrError, ValueError):
    def __init__(self, column: str):
        super().__init__(f"covariate {column!r} has zero sample variance")
        self.column = column


class InvalidWeightsError(MqrError, ValueError):
    pass


class InputFormatError(MqrError, ValueError):
    pass


class SolverFailure(MqrError, RuntimeError):
    """The LP solver could not certify a result.

    ``stage`` is filled in by callers that run several solves (``pilot`` or
    ``final`` for the two-stage estimator).
    """

    def __init__(self, message: str, iterations: int | None = None, stage: str | None = None):
        self.iterations = iterations
        self.stage = stage
        self.detail = message
        super().__init__(self._render())

    def _render(self) -> str:
        parts = []
        if self.stage:
            parts.append(f"[{self.stage}]")
        parts.append(self.detail)
        if self.iterations is not None:
            parts.append(f"(after {self.iterations} iterations)")
        return " ".join(parts)

    def with_stage(self, stage: str) -> "SolverFailure":
        return SolverFailure(self.detail, iterations=self.iterations, stage=stage)


class TooManyFailuresError(MqrError, RuntimeError):
    def __init__(self, failed: int, total: int, limit: float = 0.05):
        super().__init__(
            f"{failed} of {total} windows failed, above the {limit:.0%} tolerance"
        )
        self.failed = failed
        self.total = total
