import math
import warnings

# slack for ceil() so that e.g. 0.3 * 10 = 3.0000000000000004 ranks as 3
RANK_EPS = 1e-9


class NumericalError(RuntimeError):
    """An optimizer diverged or produced a non-finite value."""


class QuantileClampWarning(UserWarning):
    """The conformal rank exceeded the sample size and was clamped to the maximum."""


def ceil_rank(level: float, m: int) -> int:
    """1-based rank ceil(level * m), never below 1."""
    return max(1, math.ceil(level * m - RANK_EPS))


def clamp_rank(level: float, m: int, warn: bool = False) -> int:
    r = ceil_rank(level, m)
    if r > m:
        if warn:
            warnings.warn(
                f"rank {r} exceeds sample size {m} at level {level:.6g}; using the maximum",
                QuantileClampWarning,
                stacklevel=3,
            )
        r = m
    return r
