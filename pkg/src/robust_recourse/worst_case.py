"""Closed-form worst-case probabilities of the unfavorable outcome.

The future classifier parameters are a random vector with nominal mean
``m``, nominal covariance ``S`` and an ambiguity radius ``rho`` measured in
the Gelbrich (Bures-Wasserstein) metric on moment pairs.  For a candidate
action ``x``, everything reduces to three scalars:

    a = -m^T x,   b = sqrt(x^T S x),   c = rho * ||x||_2.

Two ambiguity regimes are supported:

* nonparametric: all distributions whose moments lie in the Gelbrich ball
  (a Chebyshev/Cantelli-type bound governs the tail), and
* gaussian: only Gaussian distributions with such moments.

Both worst-case probabilities follow from inverting the corresponding
worst-case value-at-risk curve in the risk level beta; the VaR curves are
exposed too since they double as test oracles.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri  # Phi^{-1}, erf-based

from .errors import BetaOutOfRange, ZeroAction
from .model import ComponentMoments

__all__ = [
    "ABCTriple",
    "AT_OR_ABOVE_HALF",
    "abc",
    "prob_nonparametric",
    "prob_gaussian",
    "var_nonparametric",
    "var_gaussian",
    "wc_prob_nonparametric",
    "wc_prob_gaussian",
    "wc_var_nonparametric",
    "wc_var_gaussian",
]


class _AtOrAboveHalf:
    """Sentinel: the Gaussian worst-case probability is >= 1/2, where the
    closed form does not apply (the constraint set excludes this region)."""

    def __repr__(self):
        return "AT_OR_ABOVE_HALF"


AT_OR_ABOVE_HALF = _AtOrAboveHalf()


@dataclass(frozen=True)
class ABCTriple:
    """The scalars (a, b, c) that the closed forms depend on."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.b < 0.0 or self.c < 0.0:
            raise ValueError(f"b and c must be nonnegative, got ({self.b}, {self.c})")


def abc(x, comp: ComponentMoments) -> ABCTriple:
    """Reduce (x, component moments) to the triple (a, b, c).

    a = -mean^T x, b = sqrt(x^T cov x), c = radius * ||x||_2.  The zero
    action yields (0, 0, 0); callers that need x != 0 flag it themselves.
    """
    x = np.asarray(x, dtype=float)
    a = -float(comp.mean @ x)
    quad = float(x @ comp.cov @ x)
    b = math.sqrt(max(quad, 0.0))
    c = comp.radius * float(np.linalg.norm(x))
    return ABCTriple(a, b, c)


def _radicand(t: ABCTriple) -> float:
    # a + c < 0 implies a^2 >= c^2, so analytically a^2 + b^2 - c^2 >= b^2 > 0;
    # clamp against roundoff only
    return max(t.a * t.a + t.b * t.b - t.c * t.c, 0.0)


def prob_nonparametric(t: ABCTriple) -> float:
    """Worst-case unfavorable probability over the moment ambiguity ball.

    Returns 1 when a + c >= 0.  Otherwise

        ((-a*c + b*sqrt(a^2 + b^2 - c^2)) / (a^2 + b^2))^2  in (0, 1),

    clamped to [0, 1] against roundoff.
    """
    if t.a + t.c >= 0.0:
        return 1.0
    root = math.sqrt(_radicand(t))
    val = (-t.a * t.c + t.b * root) / (t.a * t.a + t.b * t.b)
    return min(max(val * val, 0.0), 1.0)


def prob_gaussian(t: ABCTriple):
    """Worst-case unfavorable probability over the Gaussian ambiguity ball.

    Returns the sentinel AT_OR_ABOVE_HALF when a + c >= 0; otherwise

        1 - Phi((a^2 - c^2) / (-a*b + c*sqrt(a^2 + b^2 - c^2)))  in (0, 1/2),

    evaluated through erfc so deep tails keep their magnitude instead of
    rounding to zero.
    """
    if t.a + t.c >= 0.0:
        return AT_OR_ABOVE_HALF
    root = math.sqrt(_radicand(t))
    g = (t.a * t.a - t.c * t.c) / (-t.a * t.b + t.c * root)
    return 0.5 * math.erfc(g / math.sqrt(2.0))


def var_nonparametric(t: ABCTriple, beta: float) -> float:
    """Worst-case value-at-risk at level beta over the moment ball:

        a + sqrt((1 - beta)/beta) * b + c / sqrt(beta).
    """
    if not 0.0 < beta < 1.0:
        raise BetaOutOfRange(f"beta must lie in (0, 1), got {beta}")
    return t.a + math.sqrt((1.0 - beta) / beta) * t.b + t.c / math.sqrt(beta)


def var_gaussian(t: ABCTriple, beta: float) -> float:
    """Worst-case value-at-risk at level beta over the Gaussian ball:

        a + z*b + c*sqrt(1 + z^2),  z = Phi^{-1}(1 - beta).

    Only valid for beta in (0, 1/2]; beyond 1/2 the underlying problem
    becomes non-convex and is rejected.
    """
    if not 0.0 < beta <= 0.5:
        raise BetaOutOfRange(f"beta must lie in (0, 0.5], got {beta}")
    z = float(ndtri(1.0 - beta))
    return t.a + z * t.b + t.c * math.sqrt(1.0 + z * z)


def _triple_checked(x, comp: ComponentMoments) -> ABCTriple:
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ZeroAction("worst-case probability is undefined at x = 0")
    return abc(x, comp)


def wc_prob_nonparametric(x, comp: ComponentMoments) -> float:
    """prob_nonparametric evaluated at abc(x, comp); rejects x = 0."""
    return prob_nonparametric(_triple_checked(x, comp))


def wc_prob_gaussian(x, comp: ComponentMoments):
    """prob_gaussian evaluated at abc(x, comp); rejects x = 0."""
    return prob_gaussian(_triple_checked(x, comp))


def wc_var_nonparametric(x, comp: ComponentMoments, beta: float) -> float:
    return var_nonparametric(abc(x, comp), beta)


def wc_var_gaussian(x, comp: ComponentMoments, beta: float) -> float:
    return var_gaussian(abc(x, comp), beta)
