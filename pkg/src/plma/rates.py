"""Observed refinement orders."""

import math

# errors at or below this multiple of the function scale are rounding noise
ROUNDING_FLOOR = 1e-11


def observed_order(e_coarse: float, e_fine: float, scale: float = 1.0,
                   ratio: float = 2.0) -> float:
    """log_ratio(e_coarse / e_fine); inf when both errors sit at the rounding floor."""
    floor = ROUNDING_FLOOR * max(1.0, scale)
    if e_coarse <= floor and e_fine <= floor:
        return math.inf
    if e_fine <= 0.0:
        return math.inf
    return math.log(e_coarse / e_fine) / math.log(ratio)


def orders(errors, scale: float = 1.0, ratio: float = 2.0) -> list:
    return [observed_order(a, b, scale, ratio) for a, b in zip(errors, errors[1:])]
