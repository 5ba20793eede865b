"""Index-level purification engine.

Every state here is diagonal in the fixed eigenbasis ``|Psi_n>``, n = 0..M,
so a state is nothing more than a probability vector.  Detection of an event
``k`` reweights the circulating state by the source probabilities rotated by
``k`` positions (indices taken modulo M+1).
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.special import entr, gammaln, logsumexp

NORM_TOL = 1e-12
# outcome probabilities below this are treated as impossible
MIN_OUTCOME_PROB = 1e-300


class DimensionMismatchError(ValueError):
    """Two states with different truncation orders were combined."""


class ImpossibleOutcomeError(ValueError):
    """An outcome or event record has zero probability under the source."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class BinaryEvent(IntEnum):
    """Coarse-grained detection: ``k == 0`` versus ``k != 0``."""

    ZERO = 0
    NOT_ZERO = 1


def _as_probs(values) -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Weights ``P_n`` of a mixture of M+1 orthonormal eigenstates."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _as_probs(self.probs)
        if probs.size == 0:
            raise ValueError("a mixture needs at least one component")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite")
        if np.any(probs < 0):
            raise ValueError(f"negative probability in {probs}")
        total = probs.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @property
    def M(self) -> int:
        return self.probs.size - 1

    @classmethod
    def from_weights(cls, weights) -> MixtureState:
        """Normalize non-negative weights into a state."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        total = w.sum()
        if not total > 0:
            raise ValueError("weights sum to zero")
        return cls(w / total)

    @classmethod
    def pure(cls, M: int, n: int = 0) -> MixtureState:
        w = np.zeros(M + 1)
        w[n] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, M: int) -> MixtureState:
        return cls(np.full(M + 1, 1.0 / (M + 1)))

    @classmethod
    def geometric(cls, base: float, M: int) -> MixtureState:
        """``P_n`` proportional to ``base**n``."""
        return cls.from_weights(base ** np.arange(M + 1, dtype=float))

    def is_pure(self, tol: float = 0.0) -> bool:
        return self.probs.max() >= 1.0 - tol

    def allclose(self, other: MixtureState, atol: float = NORM_TOL) -> bool:
        return self.M == other.M and np.allclose(self.probs, other.probs, rtol=0, atol=atol)

    def __repr__(self):
        return f"MixtureState(M={self.M}, probs={np.array2string(self.probs, precision=6)})"


@dataclass(frozen=True)
class EventRecord:
    """Ordered detection results ``k(1), ..., k(j)``.

    For binary detection the entries are :class:`BinaryEvent` values.
    """

    events: tuple[int, ...]
    M: int
    binary: bool = False

    def __post_init__(self):
        hi = 1 if self.binary else self.M
        events = tuple(int(k) for k in self.events)
        for i, k in enumerate(events):
            if not 0 <= k <= hi:
                raise ValueError(f"event {k} at position {i} outside [0, {hi}]")
        if self.binary:
            events = tuple(BinaryEvent(k) for k in events)
        object.__setattr__(self, "events", events)

    def __len__(self):
        return len(self.events)

    def counts(self) -> EventCounts:
        if self.binary:
            raise TypeError("binary records reduce to BinaryRecord, use binary_counts()")
        s = np.bincount(np.asarray(self.events, dtype=int), minlength=self.M + 1)
        return EventCounts(tuple(int(x) for x in s))

    def binary_counts(self) -> BinaryRecord:
        if self.binary:
            q = sum(1 for k in self.events if k == BinaryEvent.ZERO)
        else:
            q = sum(1 for k in self.events if k == 0)
        return BinaryRecord(j=len(self.events), q=q)


@dataclass(frozen=True)
class EventCounts:
    """Occupation numbers ``s_l`` of each outcome ``l`` in a record."""

    s: tuple[int, ...]
    j: int = field(default=-1)

    def __post_init__(self):
        s = tuple(int(x) for x in self.s)
        if any(x < 0 for x in s):
            raise ValueError("counts must be non-negative")
        total = sum(s)
        j = total if self.j == -1 else self.j
        if j != total:
            raise ValueError(f"counts sum to {total}, but j = {j}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "j", j)

    @property
    def M(self) -> int:
        return len(self.s) - 1


@dataclass(frozen=True)
class BinaryRecord:
    """``q`` events ``k == 0`` out of ``j`` binary detections."""

    j: int
    q: int

    def __post_init__(self):
        if not 0 <= self.q <= self.j:
            raise ValueError(f"need 0 <= q <= j, got q={self.q}, j={self.j}")


def mod_index(m: int, M: int) -> int:
    """Index ``m`` reduced modulo ``M + 1`` into ``[0, M]``."""
    if M < 0:
        raise ValueError("M must be non-negative")
    return m % (M + 1)


def _check_same_M(a: MixtureState, b: MixtureState) -> None:
    if a.M != b.M:
        raise DimensionMismatchError(f"truncation orders differ: M={a.M} vs M={b.M}")


def rotation_table(source_probs: np.ndarray) -> np.ndarray:
    """Table ``T[k, n] = p_{(n - k) mod (M+1)}``."""
    size = source_probs.size
    idx = (np.arange(size)[None, :] - np.arange(size)[:, None]) % size
    return source_probs[idx]


def outcome_distribution(state: MixtureState, source: MixtureState) -> np.ndarray:
    """Probabilities ``p(k) = sum_n P_n p_{n-k}`` of the M+1 event classes."""
    _check_same_M(state, source)
    return rotation_table(source.probs) @ state.probs


def _reweight(weights: np.ndarray, what: str) -> np.ndarray:
    total = weights.sum()
    if not total >= MIN_OUTCOME_PROB:
        raise ImpossibleOutcomeError(f"impossible outcome: {what} has probability {total:.3g}")
    return weights / total


def step(state: MixtureState, source: MixtureState, k: int) -> MixtureState:
    """Update after detecting event class ``k``."""
    _check_same_M(state, source)
    k = int(k)
    if not 0 <= k <= state.M:
        raise ValueError(f"outcome {k} outside [0, {state.M}]")
    rotated = np.roll(source.probs, k)  # rotated[n] = p_{n-k}
    return MixtureState(_reweight(state.probs * rotated, f"k={k}"))


def binary_outcome_prob(state: MixtureState, source: MixtureState) -> float:
    """Probability ``p(0) = sum_n P_n p_n`` of the event ``k == 0``."""
    _check_same_M(state, source)
    return float(np.clip(state.probs @ source.probs, 0.0, 1.0))


def binary_step(state: MixtureState, source: MixtureState, event: BinaryEvent) -> MixtureState:
    _check_same_M(state, source)
    event = BinaryEvent(event)
    if event is BinaryEvent.ZERO:
        weights = state.probs * source.probs
    else:
        weights = state.probs * (1.0 - source.probs)
    return MixtureState(_reweight(weights, event.name))


def log_multinomial(counts: Sequence[int]) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(gammaln(counts.sum() + 1) - gammaln(counts + 1).sum())


def _log_closed_form(log_w: np.ndarray, log_coeff: float, what: str):
    if not np.any(np.isfinite(log_w)):
        raise ImpossibleOutcomeError(f"record {what} is impossible under the source")
    log_norm = logsumexp(log_w)
    probs = np.exp(log_w - log_norm)
    probs /= probs.sum()
    return MixtureState(probs), float(np.exp(log_coeff + log_norm))


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def state_from_counts(source: MixtureState, counts: EventCounts) -> tuple[MixtureState, float]:
    """Iterated state and probability of a whole count vector ``s``.

    ``P_n`` is proportional to ``p_n * prod_l p_{n-l}**s_l``; the returned
    probability includes the multinomial number of orderings.
    """
    if counts.M != source.M:
        raise DimensionMismatchError(f"counts have M={counts.M}, source has M={source.M}")
    log_p = _safe_log(source.probs)
    log_w = log_p.copy()
    for l, s_l in enumerate(counts.s):
        if s_l:
            # zero-probability factors stay -inf; 0**0 never reaches here
            log_w = log_w + s_l * np.roll(log_p, l)
    return _log_closed_form(log_w, log_multinomial(counts.s), f"s={counts.s}")


def state_from_binary_counts(source: MixtureState, record: BinaryRecord) -> tuple[MixtureState, float]:
    """Iterated state after ``q`` zero events among ``j`` binary detections."""
    j, q = record.j, record.q
    log_w = (q + 1) * _safe_log(source.probs)
    if j - q:
        log_w = log_w + (j - q) * _safe_log(1.0 - source.probs)
    log_binom = float(gammaln(j + 1) - gammaln(q + 1) - gammaln(j - q + 1))
    return _log_closed_form(log_w, log_binom, f"(j={j}, q={q})")


def von_neumann_entropy(state: MixtureState | np.ndarray) -> float:
    """Entropy in nats of a diagonal state."""
    probs = state.probs if isinstance(state, MixtureState) else np.asarray(state)
    return float(entr(probs).sum())


def average_over_outcomes(state: MixtureState, source: MixtureState) -> MixtureState:
    """Outcome-averaged update, which returns the input state."""
    pk = outcome_distribution(state, source)
    total = np.zeros_like(state.probs)
    for k, weight in enumerate(pk):
        if weight >= MIN_OUTCOME_PROB:
            total += weight * step(state, source, k).probs
    return MixtureState(total)


def fold_record(source: MixtureState, events: Iterable[int], binary: bool = False,
                state: MixtureState | None = None) -> tuple[MixtureState, float]:
    """Apply a record step by step; returns the state and the product of per-step probabilities."""
    current = source if state is None else state
    prob = 1.0
    for i, k in enumerate(events):
        if binary:
            p0 = binary_outcome_prob(current, source)
            p_event = p0 if k == BinaryEvent.ZERO else 1.0 - p0
            update = binary_step
        else:
            p_event = outcome_distribution(current, source)[k]
            update = step
        try:
            current = update(current, source, k)
        except ImpossibleOutcomeError as exc:
            raise ImpossibleOutcomeError(f"step {i + 1}: {exc}", step=i + 1) from exc
        prob *= p_event
    return current, prob
