"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (bad records, missing ids, infeasible requests)."""


class InvariantError(RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""
