"""Incomplete-gamma helpers shared by the Levy-measure closed forms.

Everything here is scalar float math. The two workhorses are

    upper_gamma(s, x) = integral_x^inf t^(s-1) e^(-t) dt      (any real s, x > 0)

and the compensated exponential integrals

    A(y, x) = integral_y^x (e^(-u) - 1 + u) u^(-1-alpha) du
    B(y, x) = integral_y^x (1 - e^(-u))     u^(-alpha)   du

which appear whenever a power-law jump density meets the integrand
e^(-lambda z) - 1 + lambda z 1{z<=1}.
"""

from __future__ import annotations

import math

from scipy import special as sp

EULER_GAMMA = 0.5772156649015328606


def upper_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma Gamma(s, x) for any real s and x > 0.

    scipy only covers s > 0; negative s is reached through the recurrence
    Gamma(s, x) = (Gamma(s+1, x) - x^s e^(-x)) / s, and s = 0 is exp1.
    """
    if x <= 0.0:
        raise ValueError("upper_gamma requires x > 0")
    if s > 0.0:
        return sp.gammaincc(s, x) * sp.gamma(s)
    if s == 0.0:
        return float(sp.exp1(x))
    return (upper_gamma(s + 1.0, x) - x**s * math.exp(-x)) / s


def lower_gamma(s: float, x: float) -> float:
    """Lower incomplete gamma gamma(s, x), s > 0, x >= 0."""
    if s <= 0.0:
        raise ValueError("lower_gamma requires s > 0")
    if x < 0.0:
        raise ValueError("lower_gamma requires x >= 0")
    return float(sp.gammainc(s, x) * sp.gamma(s))


def expm1_plus(u: float) -> float:
    """e^(-u) - 1 + u, evaluated without cancellation for small u >= 0."""
    if u < 1e-4:
        # u^2/2 - u^3/6 + u^4/24; next term u^5/120 < 1e-22 relative to u^2/2
        return u * u * (0.5 - u / 6.0 + u * u / 24.0)
    return math.expm1(-u) + u


def one_minus_exp(u: float) -> float:
    """1 - e^(-u) for u >= 0."""
    return -math.expm1(-u)


def compensated_power_integral(y: float, x: float, alpha: float) -> float:
    """A(y, x) = integral_y^x (e^(-u) - 1 + u) u^(-1-alpha) du, 0 <= y <= x.

    y = 0 requires alpha < 2 (integrand ~ u^(1-alpha)/2 at zero).
    """
    if x <= y:
        return 0.0
    if y == 0.0 and alpha >= 2.0:
        raise ValueError("divergent at 0 for alpha >= 2")
    boundary = -(x**-alpha) * expm1_plus(x) / alpha
    if y > 0.0:
        boundary += (y**-alpha) * expm1_plus(y) / alpha
    return boundary + one_minus_exp_power_integral(y, x, alpha) / alpha


def one_minus_exp_power_integral(y: float, x: float, alpha: float) -> float:
    """B(y, x) = integral_y^x (1 - e^(-u)) u^(-alpha) du, 0 <= y <= x.

    y = 0 requires alpha < 2.
    """
    if x <= y:
        return 0.0
    if alpha == 1.0:
        # antiderivative of (1 - e^(-u))/u is log u + E1(u)
        upper = math.log(x) + float(sp.exp1(x))
        if y > 0.0:
            return upper - math.log(y) - float(sp.exp1(y))
        return upper + EULER_GAMMA
    s = 2.0 - alpha
    upper = x ** (1.0 - alpha) * one_minus_exp(x)
    lower = y ** (1.0 - alpha) * one_minus_exp(y) if y > 0.0 else 0.0
    if y > 0.0:
        tail_part = upper_gamma(s, y) - upper_gamma(s, x)
    else:
        if s <= 0.0:
            raise ValueError("divergent at 0 for alpha >= 2")
        tail_part = lower_gamma(s, x)
    return (upper - lower - tail_part) / (1.0 - alpha)
