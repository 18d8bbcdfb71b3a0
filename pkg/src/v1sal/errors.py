"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data or parameters violate a documented precondition."""


class DivergenceError(RuntimeError):
    """Lattice state became non-finite during integration."""


class PlacementError(RuntimeError):
    """Rejection sampling could not place all stimulus items."""
