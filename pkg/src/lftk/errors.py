"""Exception types shared across the toolkit."""


class DataFormatError(ValueError):
    """A file or stream does not conform to its documented layout."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite or runaway value.

    Carries the name of the variable group that first went bad so batch
    drivers can report where the optimization fell apart.
    """

    def __init__(self, group, reason):
        self.group = group
        self.reason = reason
        super().__init__(f"divergence in {group}: {reason}")
