"""Slow reference implementations used only by the tests."""

from fractions import Fraction
from math import factorial

import numpy as np


def exact_outcome_distribution(P, p):
    """p(k) by explicit double loop in exact arithmetic."""
    P = [Fraction(x) for x in P]
    p = [Fraction(x) for x in p]
    size = len(P)
    return [sum(P[n] * p[(n - k) % size] for n in range(size)) for k in range(size)]


def exact_step(P, p, k):
    P = [Fraction(x) for x in P]
    p = [Fraction(x) for x in p]
    size = len(P)
    w = [P[n] * p[(n - k) % size] for n in range(size)]
    total = sum(w)
    return [x / total for x in w]


def exact_binary_step(P, p, zero):
    P = [Fraction(x) for x in P]
    p = [Fraction(x) for x in p]
    w = [a * (b if zero else 1 - b) for a, b in zip(P, p)]
    total = sum(w)
    return [x / total for x in w]


def multinomial(counts):
    out = factorial(sum(counts))
    for c in counts:
        out //= factorial(c)
    return out


def random_state(rng, M, sparse=False):
    w = rng.dirichlet(np.ones(M + 1))
    if sparse and M > 0:
        w[rng.integers(0, M + 1)] = 0.0
        w /= w.sum()
    return w
