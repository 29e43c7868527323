"""Exception types shared across the library."""


class LqrTreesError(Exception):
    """Base class for all library errors."""


class IntegrationDiverged(LqrTreesError):
    """RK4 produced non-finite values."""


class LossOfPositivity(LqrTreesError):
    """A Riccati matrix failed its Cholesky factorization."""


class SeedDimensionMismatch(LqrTreesError):
    """A demonstrator seed does not match the problem dimensions."""


class NoEquilibriumInGoal(LqrTreesError):
    """No controlled equilibrium F(x, u) = 0 could be found inside the goal set."""


class RngExhausted(LqrTreesError):
    """A randomized expansion exceeded its retry cap."""


class WallClockExceeded(LqrTreesError):
    """A run hit its wall-clock cap (carries partial results where applicable)."""
