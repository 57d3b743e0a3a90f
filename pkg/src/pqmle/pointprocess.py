"""Counting-process simulation and quasi-log-likelihood evaluation.

Intensities are driven by a piecewise-constant covariate path, so they are
piecewise constant themselves: simulation draws the exact Poisson count per
segment (no thinning, no rejection bias) and the log-likelihood reduces to
exact per-state sufficient statistics (occupancy time and event count), which
makes repeated evaluation during optimization O(#states) instead of O(T).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .covariate import CovariatePath

__all__ = [
    "EventPath",
    "SuperpositionModel",
    "LinearModel",
    "StateStats",
    "intensity_at",
    "simulate_events",
    "integrated_intensity",
    "log_likelihood",
    "sufficient_stats",
    "log_likelihood_from_rates",
    "log_likelihood_from_stats",
]


@dataclass(frozen=True)
class EventPath:
    """Ordered event times of a counting process on (0, horizon]; N_0 = 0."""

    horizon: float
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if t.size:
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("event times must be strictly increasing")
            if t[0] <= 0.0 or t[-1] > self.horizon:
                raise ValueError("event times must lie in (0, horizon]")

    @property
    def count(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class SuperpositionModel:
    """Intensity g + sum_j alpha_j * exp(beta_j * x_j) on box-constrained parameters.

    Boxes: g in [0, g_max], alpha_j in [0, alpha_max], beta_j in
    [-beta_neg, beta_pos] with beta_neg, beta_pos >= 0 and beta_neg +
    beta_pos > 0.
    """

    g: float
    alpha: np.ndarray
    beta: np.ndarray
    g_max: float
    alpha_max: float
    beta_neg: float
    beta_pos: float

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if alpha.shape != beta.shape:
            raise ValueError("alpha and beta must have the same length")
        if self.g_max <= 0.0 or self.alpha_max <= 0.0:
            raise ValueError("box bounds g_max and alpha_max must be positive")
        if self.beta_neg < 0.0 or self.beta_pos < 0.0 or self.beta_neg + self.beta_pos <= 0.0:
            raise ValueError("beta box must satisfy beta_neg, beta_pos >= 0 with positive width")
        if not (0.0 <= self.g <= self.g_max):
            raise ValueError(f"g={self.g} outside [0, {self.g_max}]")
        if np.any(alpha < 0.0) or np.any(alpha > self.alpha_max):
            raise ValueError("alpha outside its box")
        if np.any(beta < -self.beta_neg) or np.any(beta > self.beta_pos):
            raise ValueError("beta outside its box")

    @property
    def n_channels(self) -> int:
        return self.alpha.size

    def with_params(self, g, alpha, beta) -> "SuperpositionModel":
        return replace(self, g=float(g), alpha=np.asarray(alpha, float), beta=np.asarray(beta, float))

    def intensity(self, x: np.ndarray) -> np.ndarray:
        """Rate at state value(s) x, shape (..., a) -> (...)."""
        x = np.asarray(x, dtype=float)
        return self.g + np.exp(x * self.beta) @ self.alpha

    def active_set(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.nonzero(self.alpha)[0])

    def to_dict(self) -> dict:
        return {
            "family": "superposition",
            "g": self.g,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "g_max": self.g_max,
            "alpha_max": self.alpha_max,
            "beta_neg": self.beta_neg,
            "beta_pos": self.beta_pos,
        }


@dataclass(frozen=True)
class LinearModel:
    """Additive intensity sum_j alpha_j * x_j with alpha_j in [0, alpha_max]."""

    alpha: np.ndarray
    alpha_max: float

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        if self.alpha_max <= 0.0:
            raise ValueError("alpha_max must be positive")
        if np.any(alpha < 0.0) or np.any(alpha > self.alpha_max):
            raise ValueError("alpha outside its box")

    @property
    def n_channels(self) -> int:
        return self.alpha.size

    def with_params(self, alpha) -> "LinearModel":
        return replace(self, alpha=np.asarray(alpha, float))

    def intensity(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.alpha

    def active_set(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.nonzero(self.alpha)[0])

    def to_dict(self) -> dict:
        return {
            "family": "linear",
            "alpha": self.alpha.tolist(),
            "alpha_max": self.alpha_max,
        }


def intensity_at(model, state_value) -> float:
    """Intensity of `model` at one covariate value."""
    return float(model.intensity(np.asarray(state_value, dtype=float)))


def simulate_events(model, path: CovariatePath, seed) -> EventPath:
    """Exact sample of the counting process driven by `model` along `path`.

    Per segment the intensity is constant, so the event count is Poisson and
    the event positions are ordered uniforms; this is the exact law, with no
    thinning step.  Deterministic given the seed / generator.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    rates = model.intensity(path.segment_values())
    if np.any(rates < 0.0):
        raise ValueError("negative intensity encountered")
    lengths = path.segment_lengths()
    counts = rng.poisson(rates * lengths)
    total = int(counts.sum())
    if total == 0:
        return EventPath(horizon=path.horizon, times=np.empty(0))
    starts = np.repeat(path.start_times, counts)
    lens = np.repeat(lengths, counts)
    u = rng.random(total)
    u[u == 0.0] = np.nextafter(0.0, 1.0)  # keep events strictly inside segments
    times = np.sort(starts + u * lens)
    # ties have probability zero; nudge any merged pair apart to keep strict order
    dup = np.flatnonzero(np.diff(times) <= 0.0)
    while dup.size:
        times[dup + 1] = np.nextafter(times[dup + 1], np.inf)
        dup = np.flatnonzero(np.diff(times) <= 0.0)
    return EventPath(horizon=path.horizon, times=times)


def integrated_intensity(model, path: CovariatePath) -> float:
    """Exact compensator at the horizon: sum over segments of length * rate."""
    rates = model.intensity(path.segment_values())
    return float(path.segment_lengths() @ rates)


@dataclass(frozen=True)
class StateStats:
    """Per-state sufficient statistics of one (covariate, events) dataset.

    The log-likelihood of any model depends on the data only through the time
    spent in each state and the number of events observed there.
    """

    state_values: np.ndarray  # (n_states, a)
    occupancy: np.ndarray  # (n_states,)
    counts: np.ndarray  # (n_states,)
    horizon: float

    @property
    def total_events(self) -> int:
        return int(self.counts.sum())


def sufficient_stats(path: CovariatePath, events: EventPath) -> StateStats:
    """Aggregate a dataset into per-state occupancy and event counts.

    Events land in the segment holding t-, so an event at a covariate jump
    instant is attributed to the pre-jump state (predictability convention).
    """
    if events.horizon != path.horizon:
        raise ValueError("covariate path and event path horizons differ")
    seg = path.segment_index_at(events.times)
    counts = np.bincount(
        path.state_indices[seg], minlength=path.state_values.shape[0]
    )
    return StateStats(
        state_values=path.state_values,
        occupancy=path.occupancy(),
        counts=counts,
        horizon=path.horizon,
    )


def log_likelihood_from_rates(rates: np.ndarray, stats: StateStats) -> float:
    """Likelihood from precomputed per-state rates; the optimizer hot path."""
    compensator = float(stats.occupancy @ rates)
    observed = stats.counts > 0
    if np.any(rates[observed] <= 0.0):
        return float("-inf")
    return float(stats.counts[observed] @ np.log(rates[observed])) - compensator


def log_likelihood_from_stats(model, stats: StateStats) -> float:
    """sum_i log rate(t_i-) - integral of the rate, from per-state statistics.

    Returns -inf when some event sits in a state where the model's rate is 0
    (the convention exp(-inf) = 0; the value orders below every float).
    """
    rates = np.atleast_1d(model.intensity(stats.state_values))
    return log_likelihood_from_rates(rates, stats)


def log_likelihood(model, path: CovariatePath, events: EventPath) -> float:
    """Quasi-log-likelihood of `model` for one dataset (exact, no quadrature)."""
    return log_likelihood_from_stats(model, sufficient_stats(path, events))
