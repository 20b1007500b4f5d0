"""Exception types shared across the package.

The CLI maps :class:`InputError` to exit code 1 and :class:`NumericDefect`
to exit code 2.
"""


class InputError(ValueError):
    """Malformed or inconsistent user input (bad dims, unknown wire, ...)."""


class NumericDefect(RuntimeError):
    """A computation violated a guarantee that holds in exact arithmetic."""


class ResourceLimit(InputError):
    """A requested object exceeds a configured size cap."""
