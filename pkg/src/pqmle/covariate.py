"""Finite-state Markov covariate processes with exactly known invariant law.

A covariate is a continuous-time Markov jump process on finitely many states;
each state carries a value in R^a (one entry per covariate channel).  The
finite state space makes the invariant measure a finite mixture, so every
integral against it has an exact closed form instead of a quadrature error.
Exact multicollinearity across channels is imposed at the state-value level,
so it holds along every sample path to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Collinearity",
    "MarkovCovariateSpec",
    "CovariatePath",
    "CollinearityMap",
    "stationary_distribution",
    "simulate",
    "ergodic_average",
    "nu_integral",
    "collinearity_matrix",
    "build_collinear_states",
]

_ATOL = 1e-10


@dataclass(frozen=True)
class Collinearity:
    """Linear dependence of the non-basis channels on the basis channels.

    `basis` lists the channel indices (0-based) spanning the covariate
    vector; every other channel i satisfies x_i = sum_j coefficients[row(i), j]
    * x_basis[j] exactly.  Rows of `coefficients` follow the sorted complement
    of `basis`.  Coefficients are nonnegative so all channels stay nonnegative
    whenever the basis channels are.
    """

    basis: tuple[int, ...]
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(int(j) for j in self.basis))
        coeffs = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", coeffs)
        if len(set(self.basis)) != len(self.basis):
            raise ValueError("basis indices must be distinct")
        if np.any(coeffs < 0.0):
            raise ValueError("collinearity coefficients must be nonnegative")

    def complement(self, a: int) -> tuple[int, ...]:
        return tuple(i for i in range(a) if i not in self.basis)


@dataclass(frozen=True)
class MarkovCovariateSpec:
    """Irreducible CTMC over state values in R^a.

    `states` is (n_states, a); `generator` is the (n, n) rate matrix Q with
    nonnegative off-diagonal entries and zero row sums.  If `collinearity` is
    given, the state values must satisfy it exactly; this is validated at
    construction.
    """

    states: np.ndarray
    generator: np.ndarray
    collinearity: Collinearity | None = None

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        Q = np.atleast_2d(np.asarray(self.generator, dtype=float))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "generator", Q)
        n = states.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"generator must be {n}x{n}, got {Q.shape}")
        if not np.all(np.isfinite(states)):
            raise ValueError("state values must be finite")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0.0):
            raise ValueError("off-diagonal generator rates must be nonnegative")
        if np.max(np.abs(Q.sum(axis=1))) > _ATOL * max(1.0, np.max(np.abs(Q))):
            raise ValueError("generator rows must sum to zero")
        if n > 1:
            ncomp, _ = connected_components(off > 0.0, directed=True, connection="strong")
            if ncomp != 1:
                raise ValueError("generator is not irreducible")
        if self.collinearity is not None:
            col = self.collinearity
            a = states.shape[1]
            dep = col.complement(a)
            if col.coefficients.shape != (len(dep), len(col.basis)):
                raise ValueError(
                    f"coefficients must be {len(dep)}x{len(col.basis)}, "
                    f"got {col.coefficients.shape}"
                )
            predicted = states[:, list(col.basis)] @ col.coefficients.T
            actual = states[:, list(dep)]
            if not np.allclose(actual, predicted, rtol=0.0, atol=_ATOL):
                raise ValueError("state values violate the declared collinearity")

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_channels(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_collinear(
        cls, basis, basis_values, coefficients, generator
    ) -> "MarkovCovariateSpec":
        """Build a spec whose dependent channels are derived from basis values."""
        col = Collinearity(basis=tuple(basis), coefficients=coefficients)
        states = build_collinear_states(col, np.asarray(basis_values, dtype=float))
        return cls(states=states, generator=generator, collinearity=col)

    def to_dict(self) -> dict:
        d = {
            "states": self.states.tolist(),
            "generator": self.generator.tolist(),
        }
        if self.collinearity is not None:
            d["collinearity"] = {
                "basis": list(self.collinearity.basis),
                "coefficients": self.collinearity.coefficients.tolist(),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovCovariateSpec":
        col = None
        if d.get("collinearity"):
            col = Collinearity(
                basis=tuple(d["collinearity"]["basis"]),
                coefficients=np.asarray(d["collinearity"]["coefficients"], dtype=float),
            )
        return cls(
            states=np.asarray(d["states"], dtype=float),
            generator=np.asarray(d["generator"], dtype=float),
            collinearity=col,
        )


def build_collinear_states(col: Collinearity, basis_values: np.ndarray) -> np.ndarray:
    """Assemble full (n_states, a) state values from basis-channel values."""
    basis_values = np.atleast_2d(basis_values)
    n, r = basis_values.shape
    if r != len(col.basis):
        raise ValueError(f"basis_values must have {len(col.basis)} columns, got {r}")
    a = r + col.coefficients.shape[0]
    states = np.empty((n, a))
    states[:, list(col.basis)] = basis_values
    states[:, list(col.complement(a))] = basis_values @ col.coefficients.T
    return states


@dataclass(frozen=True)
class CovariatePath:
    """Piecewise-constant right-continuous sample path on [0, horizon].

    `start_times` begins at 0 and is strictly increasing; segment k occupies
    [start_times[k], start_times[k+1]) and holds state `state_indices[k]`
    whose channel values are `state_values[state_indices[k]]`.
    """

    horizon: float
    start_times: np.ndarray
    state_indices: np.ndarray
    state_values: np.ndarray

    def __post_init__(self):
        st = np.asarray(self.start_times, dtype=float)
        idx = np.asarray(self.state_indices, dtype=np.int64)
        vals = np.atleast_2d(np.asarray(self.state_values, dtype=float))
        object.__setattr__(self, "start_times", st)
        object.__setattr__(self, "state_indices", idx)
        object.__setattr__(self, "state_values", vals)
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if st.size == 0 or st[0] != 0.0:
            raise ValueError("first segment must start at 0")
        if st.size != idx.size:
            raise ValueError("one state index per segment required")
        if np.any(np.diff(st) <= 0.0) or st[-1] >= self.horizon:
            raise ValueError("segment start times must increase within [0, horizon)")

    @property
    def n_segments(self) -> int:
        return self.start_times.size

    def segment_lengths(self) -> np.ndarray:
        return np.diff(np.append(self.start_times, self.horizon))

    def segment_values(self) -> np.ndarray:
        return self.state_values[self.state_indices]

    def segment_index_at(self, t) -> np.ndarray:
        """Segment holding time t-, i.e. jump instants resolve to the pre-jump segment."""
        t = np.asarray(t, dtype=float)
        return np.searchsorted(self.start_times, t, side="left") - 1

    def occupancy(self) -> np.ndarray:
        """Total time spent in each state of the underlying table."""
        return np.bincount(
            self.state_indices,
            weights=self.segment_lengths(),
            minlength=self.state_values.shape[0],
        )


def stationary_distribution(Q: np.ndarray) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 for an irreducible generator."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    off = Q - np.diag(np.diag(Q))
    ncomp, _ = connected_components(off > 0.0, directed=True, connection="strong")
    if ncomp != 1:
        raise ValueError("generator is not irreducible")
    A = np.vstack([Q.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.any(pi <= 0.0):
        raise ValueError("stationary distribution is not strictly positive")
    return pi / pi.sum()


def simulate(spec: MarkovCovariateSpec, T: float, seed) -> CovariatePath:
    """Exact CTMC sample path on [0, T], started from the stationary law.

    `seed` is an int or a numpy Generator; the path is deterministic given it.
    """
    if T <= 0.0:
        raise ValueError("horizon T must be positive")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    pi = stationary_distribution(spec.generator)
    Q = spec.generator
    n = spec.n_states
    exit_rates = -np.diag(Q)
    jump_probs = []
    for i in range(n):
        if exit_rates[i] > 0.0:
            p = Q[i].copy()
            p[i] = 0.0
            jump_probs.append(p / exit_rates[i])
        else:
            jump_probs.append(None)

    starts = [0.0]
    states = [int(rng.choice(n, p=pi))]
    t = 0.0
    cur = states[0]
    while True:
        rate = exit_rates[cur]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= T:
            break
        cur = int(rng.choice(n, p=jump_probs[cur]))
        starts.append(t)
        states.append(cur)
    return CovariatePath(
        horizon=float(T),
        start_times=np.asarray(starts),
        state_indices=np.asarray(states, dtype=np.int64),
        state_values=spec.states,
    )


def ergodic_average(path: CovariatePath, f) -> np.ndarray:
    """Exact time average (1/T) * sum over segments of length * f(state value)."""
    occ = path.occupancy()
    vals = np.array([np.atleast_1d(np.asarray(f(x), dtype=float)) for x in path.state_values])
    return occ @ vals / path.horizon


def nu_integral(spec: MarkovCovariateSpec, f) -> np.ndarray:
    """Exact integral of f against the invariant law: sum_s pi_s f(x_s)."""
    pi = stationary_distribution(spec.generator)
    vals = np.array([np.atleast_1d(np.asarray(f(x), dtype=float)) for x in spec.states])
    return pi @ vals


@dataclass(frozen=True)
class CollinearityMap:
    """Channel-reconstruction matrix together with a basis of its left kernel."""

    matrix: np.ndarray  # (a, r): identity rows on basis channels, coefficients elsewhere
    kernel: np.ndarray  # (a - r, a) orthonormal rows v with v @ matrix = 0


def collinearity_matrix(spec: MarkovCovariateSpec) -> CollinearityMap:
    """Matrix A with A[basis rows] = identity and A[dependent rows] = coefficients.

    Satisfies (x_j)_{j in basis} @ A.T = x for every state value x, and
    rank(A) equals the number of basis channels.  Without declared
    collinearity A is the identity and the kernel is empty.
    """
    from .parsimony import kernel_basis

    a = spec.n_channels
    if spec.collinearity is None:
        A = np.eye(a)
    else:
        col = spec.collinearity
        r = len(col.basis)
        A = np.zeros((a, r))
        for pos, j in enumerate(col.basis):
            A[j, pos] = 1.0
        A[list(col.complement(a)), :] = col.coefficients
    if np.linalg.matrix_rank(A) != A.shape[1]:
        raise ValueError("basis block of the collinearity matrix is rank deficient")
    return CollinearityMap(matrix=A, kernel=kernel_basis(A))
