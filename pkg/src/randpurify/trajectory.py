"""Seeded Monte Carlo runs of the purification loop.

Each run owns a Philox stream keyed by ``(seed, run_index)``, so a run's
outcome does not depend on how many other runs exist or on which worker
executes it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    MIN_OUTCOME_PROB,
    BinaryEvent,
    EventRecord,
    ImpossibleOutcomeError,
    MixtureState,
    rotation_table,
    von_neumann_entropy,
)


class Mode(str, Enum):
    FULL_K = "full"
    BINARY = "binary"


@dataclass(frozen=True)
class TrajectoryConfig:
    """Parameters of one simulated run.

    ``stop_purity=None`` disables the stopping rule so that exactly
    ``max_steps`` steps are taken.
    """

    source: MixtureState
    seed: int = 0
    max_steps: int = 1000
    mode: Mode = Mode.FULL_K
    stop_purity: float | None = 1.0 - 1e-9

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.stop_purity is not None and not 0.0 < self.stop_purity <= 1.0:
            raise ValueError("stop_purity must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    record: EventRecord
    entropy_trace: np.ndarray
    final_state: MixtureState
    purified_index: int | None = None

    @property
    def steps(self) -> int:
        return len(self.record)

    def to_bytes(self) -> bytes:
        """Canonical serialization, used for determinism checks."""
        head = np.array(
            [len(self.record), -1 if self.purified_index is None else self.purified_index],
            dtype=np.int64,
        )
        events = np.asarray(self.record.events, dtype=np.int64)
        return (head.tobytes() + events.tobytes() + self.entropy_trace.tobytes()
                + self.final_state.probs.tobytes())


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    runs: int
    purified_histogram: np.ndarray
    mean_steps_to_purity: float
    fraction_purified: float

    def __eq__(self, other):
        if not isinstance(other, EnsembleSummary):
            return NotImplemented
        same_mean = (self.mean_steps_to_purity == other.mean_steps_to_purity
                     or (math.isnan(self.mean_steps_to_purity)
                         and math.isnan(other.mean_steps_to_purity)))
        return (self.runs == other.runs and same_mean
                and self.fraction_purified == other.fraction_purified
                and np.array_equal(self.purified_histogram, other.purified_histogram))

    def to_dict(self) -> dict:
        mean = None if math.isnan(self.mean_steps_to_purity) else self.mean_steps_to_purity
        return {
            "runs": self.runs,
            "purified_histogram": [int(x) for x in self.purified_histogram],
            "mean_steps_to_purity": mean,
            "fraction_purified": self.fraction_purified,
        }


def rng_stream(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent generator for run ``run_index`` of an ensemble."""
    seq = np.random.SeedSequence(seed, spawn_key=(run_index,))
    return np.random.Generator(np.random.Philox(seq))


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    # one uniform per draw keeps stream positions aligned across modes
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if k >= probs.size or probs[k] <= 0.0:
        k = int(np.flatnonzero(probs > 0)[-1])
    return k


def sample_outcome(state: MixtureState, source: MixtureState, rng: np.random.Generator,
                   mode: Mode = Mode.FULL_K) -> int:
    """Draw one detection result for the current state."""
    if Mode(mode) is Mode.BINARY:
        p0 = float(state.probs @ source.probs)
        return BinaryEvent(_draw(np.array([p0, 1.0 - p0]), rng))
    return _draw(rotation_table(source.probs) @ state.probs, rng)


class _Kernel:
    """Array-level update used by the trajectory loops."""

    def __init__(self, source: MixtureState, mode: Mode):
        self.binary = mode is Mode.BINARY
        self.p = source.probs
        self.q = 1.0 - source.probs
        self.table = None if self.binary else rotation_table(source.probs)

    def distribution(self, P: np.ndarray) -> np.ndarray:
        if self.binary:
            p0 = float(P @ self.p)
            return np.array([p0, 1.0 - p0])
        return self.table @ P

    def update(self, P: np.ndarray, event: int, step_no: int) -> np.ndarray:
        if self.binary:
            w = P * (self.p if event == BinaryEvent.ZERO else self.q)
        else:
            w = P * self.table[event]
        total = w.sum()
        if not total >= MIN_OUTCOME_PROB:
            label = BinaryEvent(event).name if self.binary else f"k={event}"
            raise ImpossibleOutcomeError(
                f"step {step_no}: impossible outcome {label} (probability {total:.3g})",
                step=step_no)
        return w / total


def _purified(P: np.ndarray, stop_purity: float | None) -> bool:
    return stop_purity is not None and P.max() >= stop_purity


def run_trajectory(config: TrajectoryConfig, run_index: int = 0) -> TrajectoryResult:
    """Simulate one run until the stopping purity or ``max_steps``."""
    rng = rng_stream(config.seed, run_index)
    kernel = _Kernel(config.source, config.mode)
    P = config.source.probs.copy()
    trace = [von_neumann_entropy(P)]
    events: list[int] = []
    done = _purified(P, config.stop_purity)
    while not done and len(events) < config.max_steps:
        event = _draw(kernel.distribution(P), rng)
        P = kernel.update(P, event, len(events) + 1)
        events.append(event)
        trace.append(von_neumann_entropy(P))
        done = _purified(P, config.stop_purity)
    return TrajectoryResult(
        record=EventRecord(tuple(events), config.source.M, binary=kernel.binary),
        entropy_trace=np.array(trace),
        final_state=MixtureState(P),
        purified_index=int(np.argmax(P)) if done else None,
    )


def force_record(source: MixtureState, record: EventRecord) -> TrajectoryResult:
    """Replay a fixed record without sampling."""
    if record.M != source.M:
        raise ValueError(f"record has M={record.M}, source has M={source.M}")
    kernel = _Kernel(source, Mode.BINARY if record.binary else Mode.FULL_K)
    P = source.probs.copy()
    trace = [von_neumann_entropy(P)]
    for i, event in enumerate(record.events):
        P = kernel.update(P, int(event), i + 1)
        trace.append(von_neumann_entropy(P))
    return TrajectoryResult(record=record, entropy_trace=np.array(trace),
                            final_state=MixtureState(P))


def _run_chunk(config: TrajectoryConfig, start: int, stop: int) -> list[tuple[int, int]]:
    out = []
    for i in range(start, stop):
        result = run_trajectory(config, run_index=i)
        idx = -1 if result.purified_index is None else result.purified_index
        out.append((idx, result.steps))
    return out


def run_ensemble(config: TrajectoryConfig, runs: int, workers: int = 1) -> EnsembleSummary:
    """Run ``runs`` independent trajectories and summarize where they purified."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if workers <= 1:
        outcomes = _run_chunk(config, 0, runs)
    else:
        n_chunks = min(runs, 4 * workers)
        bounds = np.linspace(0, runs, n_chunks + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [config] * n_chunks, bounds[:-1], bounds[1:])
            outcomes = [item for part in parts for item in part]

    hist = np.zeros(config.source.M + 1, dtype=np.int64)
    steps = []
    for idx, n_steps in outcomes:
        if idx >= 0:
            hist[idx] += 1
            steps.append(n_steps)
    n_pure = len(steps)
    return EnsembleSummary(
        runs=runs,
        purified_histogram=hist,
        mean_steps_to_purity=float(np.mean(steps)) if n_pure else float("nan"),
        fraction_purified=n_pure / runs,
    )
