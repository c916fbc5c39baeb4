"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when components are wired together inconsistently.

    Examples: a policy whose action count does not match the environment,
    an MLP fed inputs of the wrong width, an illegal method/variant combo.
    """


class DivergenceError(RuntimeError):
    """Raised when optimization produces non-finite losses or gradients.

    Signals that a run has diverged; the trainer converts this into a
    diagnostic record and aborts instead of propagating NaNs.
    """


class GoalLabelingError(RuntimeError):
    """Raised when goal labeling selects an empty set.

    The remedy is to regenerate demonstrations from a different checkpoint
    or seed, so the message always says which demo set failed.
    """
