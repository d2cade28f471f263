"""Exception types shared by all modules.

Every error carries a short machine-readable ``code`` that the CLI copies into
the run manifest.
"""


class HyperstabError(Exception):
    """Base class; ``code`` identifies the failure in manifests."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class InputError(HyperstabError, ValueError):
    code = "input"


class NumericalError(HyperstabError, RuntimeError):
    code = "numerical"


class NoBracketError(NumericalError):
    code = "no_ground_state_bracket"


class IterationLimitError(NumericalError):
    code = "iteration_limit"


class NormalizationError(NumericalError):
    code = "normalization_inconsistency"


class InequalityViolation(NumericalError):
    code = "inequality_violation"


class SingularOperatorError(NumericalError):
    code = "singular_operator"


class CorruptProfileError(NumericalError):
    code = "corrupt_profile"


class StepFailure(NumericalError):
    code = "step_failure"


class PositivityLoss(NumericalError):
    code = "positivity_loss"


class BudgetError(NumericalError):
    code = "budget"


class DictionaryInconsistency(NumericalError):
    code = "dictionary_inconsistency"
