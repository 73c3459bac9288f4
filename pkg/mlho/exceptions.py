"""Errors raised by mlho.

Each family maps to one command-line exit code (see `mlho.main`).
"""


class MlhoError(Exception):
    """Base class for all errors raised deliberately by mlho."""

    exit_code = 4

    def with_context(self, **context):
        """Append ``key=value`` context to the message and return self."""
        ctx = ", ".join("%s=%s" % (k, context[k]) for k in sorted(context))
        if len(self.args) > 0:
            self.args = ("%s [%s]" % (self.args[0], ctx),) + self.args[1:]
        else:
            self.args = ("[%s]" % ctx,)
        return self


class ConfigError(MlhoError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class DataError(MlhoError, ValueError):
    """Input data that cannot be used.

    ``line`` is the 1-based line number in the offending file
    (the header is line 1), when one applies.
    """

    exit_code = 3

    def __init__(self, msg, line=None, patient_id=None):
        if line is not None:
            msg = "line %d: %s" % (line, msg)
        super(DataError, self).__init__(msg)
        self.line = line
        self.patient_id = patient_id


class MiningBudgetError(DataError):
    """Too many transitive pairs to materialize."""


class PipelineError(MlhoError):
    """Unexpected failure inside a pipeline cell."""

    exit_code = 4
