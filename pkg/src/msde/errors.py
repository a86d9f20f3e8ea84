"""Exception hierarchy shared by every module."""


class MsdeError(Exception):
    """Base class; ``exit_code`` is used by the CLI."""

    exit_code = 3


class UsageError(MsdeError):
    exit_code = 2


class SingularityError(MsdeError):
    """Evaluation hit a declared singular point."""


class FieldDefectError(MsdeError):
    """A field produced a non-finite value or violated a structural invariant."""


class GridFormatError(MsdeError):
    """Malformed MSDEGRID / MSDEPATH file."""


class QuadratureError(MsdeError):
    """Too many quadrature nodes fell on the singular set, or a rule is unusable."""


class BlowUpError(MsdeError):
    def __init__(self, path_id: int, step: int):
        super().__init__(f"non-finite state on path {path_id} at step {step}")
        self.path_id = path_id
        self.step = step


class ScenarioError(MsdeError):
    """A verification scenario could not be built or its precondition is unmet."""


class BudgetError(MsdeError):
    """Requested work exceeds the configured budget."""


class ValidationError(UsageError):
    """A suite or config file failed schema validation."""
