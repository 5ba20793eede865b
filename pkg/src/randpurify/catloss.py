"""Two-component N-mode cat mixtures under feedback loss.

The mixture of ``|alpha>`` and ``|-alpha>`` with coherence ``r`` is diagonal
in the even/odd cat basis.  Purification acts on ``r`` alone, and loss in the
feedback path multiplies it by the feedback efficiency ``eta_F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinaryEvent, MixtureState


@dataclass(frozen=True)
class CatMixture:
    alphas: tuple[complex, ...]
    r: float

    def __post_init__(self):
        alphas = tuple(complex(a) for a in np.atleast_1d(self.alphas))
        if not alphas:
            raise ValueError("need at least one mode")
        if abs(self.r) > 1.0:
            raise ValueError(f"|r| must not exceed 1, got {self.r}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "r", float(self.r))

    @property
    def N(self) -> int:
        return len(self.alphas)

    @property
    def mean_photons(self) -> float:
        """Total ``|alpha|^2`` summed over modes."""
        return float(sum(abs(a) ** 2 for a in self.alphas))

    @property
    def overlap(self) -> float:
        """``<alpha|-alpha> = exp(-2 |alpha|^2)``."""
        return math.exp(-2.0 * self.mean_photons)


@dataclass(frozen=True)
class LossChannel:
    etas: tuple[float, ...]
    L: float = 1.0
    x: float = 0.0

    def __post_init__(self):
        etas = tuple(float(e) for e in np.atleast_1d(self.etas))
        if any(e < 0 for e in etas):
            raise ValueError("loss rates must be non-negative")
        if not self.L > 0:
            raise ValueError("transparency length must be positive")
        if self.x < 0:
            raise ValueError("distance must be non-negative")
        object.__setattr__(self, "etas", etas)

    @property
    def mean_eta(self) -> float:
        return float(np.mean(self.etas))


@dataclass(frozen=True)
class FeedbackModel:
    eta_F: float = 1.0
    exact_overlap: bool = False

    def __post_init__(self):
        if not 0.0 <= self.eta_F <= 1.0:
            raise ValueError(f"eta_F must lie in [0, 1], got {self.eta_F}")


def _eigenvalues(r: float, e: float) -> tuple[float, float]:
    norm = 2.0 * (1.0 + r * e)
    return (1.0 + e) * (1.0 + r) / norm, (1.0 - e) * (1.0 - r) / norm


def cat_eigensystem(cat: CatMixture) -> tuple[float, float]:
    """Weights ``(p_0, p_1)`` of the even and odd cat states."""
    return _eigenvalues(cat.r, cat.overlap)


def to_mixture(cat: CatMixture) -> MixtureState:
    p0, p1 = cat_eigensystem(cat)
    return MixtureState.from_weights([p0, p1])


def purity_from_mixture(state: MixtureState, e: float) -> float:
    """Invert the eigenvalue formula: coherence ``r`` of an M=1 state at overlap ``e``."""
    if state.M != 1:
        raise ValueError("cat mixtures have exactly two components")
    p0 = state.probs[0]
    return float((1.0 + e - 2.0 * p0) / (2.0 * p0 * e - 1.0 - e))


def decohere(cat: CatMixture, channel: LossChannel, approximate: bool = False) -> CatMixture:
    """Cat parameters after propagating a distance ``x`` through the lossy channel."""
    if len(channel.etas) != cat.N:
        raise ValueError(f"channel has {len(channel.etas)} modes, cat has {cat.N}")
    t = channel.x / channel.L
    if approximate:
        r = cat.r * math.exp(-4.0 * cat.mean_photons * channel.mean_eta * t)
        return CatMixture(cat.alphas, r)
    alphas = tuple(a * math.exp(-eta * t) for a, eta in zip(cat.alphas, channel.etas))
    damped = CatMixture(alphas, 0.0)
    r = cat.r * math.exp(2.0 * (damped.mean_photons - cat.mean_photons))
    return CatMixture(alphas, r)


def feedback_efficiency(cat: CatMixture, channel: LossChannel, approximate: bool = True) -> float:
    """Damping factor of ``r`` accumulated over one pass through ``channel``."""
    if cat.r == 0:
        raise ValueError("the damping factor is undefined for r = 0")
    return decohere(cat, channel, approximate).r / cat.r


def purity_step(R: float, r: float, event: BinaryEvent, model: FeedbackModel,
                e: float = 0.0) -> float:
    """Coherence of the circulating state after one binary detection and feedback.

    Without ``exact_overlap`` the overlap ``e`` is ignored and the
    mesoscopic recursion ``eta_F (R +- r) / (1 +- r R)`` is used.
    """
    if abs(R) > 1.0 or abs(r) > 1.0:
        raise ValueError("purities must satisfy |R|, |r| <= 1")
    sign = 1.0 if BinaryEvent(event) is BinaryEvent.ZERO else -1.0
    if not model.exact_overlap:
        e = 0.0
    se = sign * e
    num = R + sign * r + se * (1.0 + sign * R * r)
    den = 1.0 + sign * R * r + se * (R + sign * r)
    if den <= 0.0:
        raise ValueError(f"event {BinaryEvent(event).name} is impossible at R={R}, r={r}")
    return model.eta_F * num / den


def binary_event_prob_cat(R: float, r: float, e: float = 0.0) -> float:
    """Probability of the ``k == 0`` event for cat states with coherences ``R`` and ``r``."""
    a0, a1 = _eigenvalues(R, e)
    b0, b1 = _eigenvalues(r, e)
    return a0 * b0 + a1 * b1


def stationary_bounds(r: float, eta_F: float) -> tuple[float, float]:
    """Lower and upper stationary coherence of the lossy recursion."""
    if r == 0:
        raise ValueError("stationary bounds are singular at r = 0")
    if not 0.0 < eta_F <= 1.0:
        raise ValueError("eta_F must lie in (0, 1]")
    loss = 1.0 - eta_F
    high = (math.sqrt(loss * loss + 4.0 * r * r * eta_F) - loss) / (2.0 * abs(r))
    return -high, high


def min_feedback_efficiency(r: float) -> float:
    """Smallest ``eta_F`` at which the coherence can grow above ``|r|``."""
    if abs(r) > 1.0:
        raise ValueError("|r| must not exceed 1")
    return (1.0 + r * r) / 2.0


def required_efficiency(r: float, epsilon: float) -> float:
    """``eta_F`` keeping the upper bound above ``1 - epsilon`` (first order in epsilon)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    a = abs(r)
    return 1.0 - 2.0 * epsilon * a / (1.0 + a)


def iterate_purity(r: float, events, model: FeedbackModel, e: float = 0.0,
                   R0: float | None = None) -> np.ndarray:
    """Coherence after each event of a fixed sequence, starting from ``R0`` (default ``r``)."""
    R = r if R0 is None else R0
    out = [R]
    for ev in events:
        R = purity_step(R, r, ev, model, e)
        out.append(R)
    return np.array(out)


def run_purity_walk(r: float, model: FeedbackModel, steps: int, rng: np.random.Generator,
                    e: float = 0.0) -> np.ndarray:
    """Random walk of the coherence with events drawn from their actual probabilities."""
    e_used = e if model.exact_overlap else 0.0
    R = r
    out = [R]
    for _ in range(steps):
        p0 = binary_event_prob_cat(R, r, e_used)
        ev = BinaryEvent.ZERO if rng.random() < p0 else BinaryEvent.NOT_ZERO
        R = purity_step(R, r, ev, model, e)
        out.append(R)
    return np.array(out)
