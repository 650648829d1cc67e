"""Exception hierarchy shared by the library and the CLI."""


class FraresError(Exception):
    """Base class for all errors raised by frares."""


class ConfigurationError(FraresError, ValueError):
    """Invalid system definition, dimensions or run configuration."""


class DataError(FraresError, ValueError):
    """Malformed measurement or system files."""


class EnumerationCapError(FraresError, RuntimeError):
    """A subset enumeration would exceed the configured cap.

    Use the singular-value bound (``sufficient_bound``) instead when the
    number of channels makes exhaustive checks impractical.
    """

    def __init__(self, n_subsets, cap):
        self.n_subsets = n_subsets
        self.cap = cap
        super().__init__(
            f"enumeration of {n_subsets} subsets exceeds cap {cap}; "
            "fall back to the bound-only check (sufficient_bound)"
        )


class SolverError(FraresError, RuntimeError):
    """An estimator could not produce an estimate."""
