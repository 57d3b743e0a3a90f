"""Limit-law ingredients and Monte Carlo verification of the asymptotics.

The scaled estimation error splits into an identifiable block, normalized by
sqrt(T) and converging to a Gaussian with covariance gamma_bar^{-1} (plus a
penalty-induced mean active only at rate exponent r = 1), and a
penalized-to-zero block shrinking at rate T^{r/(2q)}.  Everything needed for
those statements is computable exactly here because the covariate state space
is finite.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats as sps

from .covariate import MarkovCovariateSpec, simulate, stationary_distribution
from .estimator import EstimatorConfig, estimate
from .penalty import PenaltySpec
from .pointprocess import LinearModel, SuperpositionModel, simulate_events

__all__ = [
    "ConditionViolationError",
    "RatePlan",
    "LimitLaw",
    "Box",
    "CoordinateTag",
    "Scenario",
    "ReplicationRecord",
    "HorizonSummary",
    "MonteCarloReport",
    "rate_matrix",
    "gamma_bar_superposition",
    "mu_bar_superposition",
    "gamma_mu_superposition",
    "gamma_linear",
    "limit_law_linear",
    "local_set_U",
    "check_condition_S",
    "monte_carlo_check",
]


class ConditionViolationError(RuntimeError):
    """A structural condition required by the limit theory fails."""


@dataclass(frozen=True)
class RatePlan:
    """Per-coordinate normalization exponents.

    Coordinates in `j0` shrink at T^{r/(2q)}; all others are sqrt(T)-regular.
    Requires 0 < q < r <= 1 so that r/q > 1.
    """

    p: int
    j0: tuple[int, ...]
    r: float
    q: float

    def __post_init__(self):
        object.__setattr__(self, "j0", tuple(int(k) for k in self.j0))
        if not (0.0 < self.q < self.r <= 1.0):
            raise ValueError(
                f"need 0 < q < r <= 1 (so that r/q > 1), got q={self.q}, r={self.r}"
            )
        if any(k < 0 or k >= self.p for k in self.j0):
            raise ValueError("j0 contains out-of-range coordinates")

    def exponent(self, j: int) -> float:
        return self.r / (2.0 * self.q) if j in self.j0 else 0.5


def rate_matrix(plan: RatePlan, T: float) -> np.ndarray:
    """Diagonal normalization a_T: T^(-1/2) regular, T^(-r/(2q)) shrinking."""
    if T <= 1.0:
        raise ValueError("rate matrix is meaningful for T > 1")
    return np.diag([T ** -plan.exponent(j) for j in range(plan.p)])


@dataclass(frozen=True)
class LimitLaw:
    """Gaussian limit of the sqrt(T)-scaled identifiable block.

    mean = gamma_bar^{-1} mu_bar, covariance = gamma_bar^{-1}; mu_bar is zero
    whenever the penalty rate exponent r < 1.
    """

    mean: np.ndarray
    covariance: np.ndarray
    gamma_bar: np.ndarray
    mu_bar: np.ndarray
    labels: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "gamma_bar": self.gamma_bar.tolist(),
            "mu_bar": self.mu_bar.tolist(),
        }


def _invert_spd(gamma: np.ndarray, context: str) -> np.ndarray:
    eig = np.linalg.eigvalsh(gamma)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        defect = int(np.sum(eig <= 1e-12 * max(eig[-1], 1e-300)))
        raise ConditionViolationError(
            f"{context}: gamma_bar is singular (rank defect {defect} of {gamma.shape[0]}); "
            "the covariate law does not carry enough support points"
        )
    return np.linalg.inv(gamma)


def gamma_bar_superposition(truth: SuperpositionModel, spec: MarkovCovariateSpec) -> np.ndarray:
    """Exact information-type matrix of the identifiable block (g, beta_A, alpha_A).

    Sum over states s of pi_s * v(x_s) v(x_s)' / rate*(x_s) with
    v(x) = (1, (alpha_i* x_i e^{beta_i* x_i})_A, (e^{beta_i* x_i})_A).
    """
    if truth.g <= 0.0:
        raise ValueError("the baseline rate g* must be positive")
    act = truth.active_set()
    pi = stationary_distribution(spec.generator)
    dim = 1 + 2 * len(act)
    gamma = np.zeros((dim, dim))
    for s, x in enumerate(spec.states):
        lam = float(truth.intensity(x))
        v = np.concatenate(
            [
                [1.0],
                [truth.alpha[i] * x[i] * math.exp(truth.beta[i] * x[i]) for i in act],
                [math.exp(truth.beta[i] * x[i]) for i in act],
            ]
        )
        gamma += pi[s] * np.outer(v, v) / lam
    return gamma


def mu_bar_superposition(truth: SuperpositionModel, penalty: PenaltySpec) -> np.ndarray:
    """Penalty-induced asymptotic mean shift; nonzero only at r = 1."""
    act = truth.active_set()
    dim = 1 + 2 * len(act)
    if penalty.rate != 1.0:
        return np.zeros(dim)
    e_g = penalty.entry_for(0)
    mu = np.zeros(dim)
    mu[0] = -e_g.q * e_g.kappa * truth.g ** (e_g.q - 1.0)
    for pos, i in enumerate(act):
        e_a = penalty.entry_for(1 + i)
        mu[1 + len(act) + pos] = -e_a.q * e_a.kappa * truth.alpha[i] ** (e_a.q - 1.0)
    return mu


def gamma_mu_superposition(
    truth: SuperpositionModel, spec: MarkovCovariateSpec, penalty: PenaltySpec
) -> LimitLaw:
    """Limit law of sqrt(T)(g_hat - g*, (beta_i - beta_i*)_A, (alpha_i - alpha_i*)_A)."""
    act = truth.active_set()
    for i in act:
        if truth.beta[i] == 0.0:
            raise ValueError(f"active channel {i} must have a nonzero beta*")
    gamma = gamma_bar_superposition(truth, spec)
    cov = _invert_spd(gamma, "superposition limit law")
    mu = mu_bar_superposition(truth, penalty)
    labels = (
        ("g",)
        + tuple(f"beta_{i + 1}" for i in act)
        + tuple(f"alpha_{i + 1}" for i in act)
    )
    return LimitLaw(mean=cov @ mu, covariance=cov, gamma_bar=gamma, mu_bar=mu, labels=labels)


def gamma_linear(alpha_star, j1, spec: MarkovCovariateSpec) -> np.ndarray:
    """Exact linear-model information matrix over the surviving support.

    Sum over states of pi_s * ((x_i)_{i in j1})^{(x)2} / (alpha* . x), with
    states where the true rate vanishes excluded by the indicator.
    """
    alpha_star = np.asarray(alpha_star, dtype=float)
    j1 = tuple(int(i) for i in j1)
    pi = stationary_distribution(spec.generator)
    dim = len(j1)
    gamma = np.zeros((dim, dim))
    for s, x in enumerate(spec.states):
        lam = float(alpha_star @ x)
        if lam <= 0.0:
            continue
        v = x[list(j1)]
        gamma += pi[s] * np.outer(v, v) / lam
    return gamma


def limit_law_linear(
    alpha_star,
    alpha_parsimonious,
    spec: MarkovCovariateSpec,
    penalty: PenaltySpec,
) -> LimitLaw:
    """Limit law of sqrt(T)(alpha_hat - alpha**) on the support of alpha**."""
    alpha_parsimonious = np.asarray(alpha_parsimonious, dtype=float)
    j1 = tuple(int(i) for i in np.nonzero(alpha_parsimonious)[0])
    gamma = gamma_linear(alpha_star, j1, spec)
    try:
        cov = _invert_spd(gamma, "linear limit law")
    except ConditionViolationError as exc:
        raise ConditionViolationError(
            str(exc) + "; check Ker(A) against the surviving support coordinates"
        ) from exc
    mu = np.zeros(len(j1))
    if penalty.rate == 1.0:
        for pos, i in enumerate(j1):
            e = penalty.entry_for(i)
            mu[pos] = -e.q * e.kappa * alpha_parsimonious[i] ** (e.q - 1.0)
    labels = tuple(f"alpha_{i + 1}" for i in j1)
    return LimitLaw(mean=cov @ mu, covariance=cov, gamma_bar=gamma, mu_bar=mu, labels=labels)


class CoordinateTag(Enum):
    FULL_LINE = "full_line"
    HALF_LINE_NONNEG = "half_line_nonneg"
    HALF_LINE_NONPOS = "half_line_nonpos"


@dataclass(frozen=True)
class Box:
    """Product of closed intervals, optionally with declared coupling constraints.

    `couplings` lists coordinate groups tied by some non-product constraint;
    a pure box has none.
    """

    intervals: tuple[tuple[float, float], ...]
    couplings: tuple[frozenset, ...] = ()

    def __post_init__(self):
        for lo, hi in self.intervals:
            if not lo < hi:
                raise ValueError(f"degenerate interval [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.intervals)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return all(lo <= t <= hi for t, (lo, hi) in zip(theta, self.intervals))


def local_set_U(box: Box, theta_star, plan: RatePlan) -> tuple[CoordinateTag, ...]:
    """Local approximating set of the box at theta_star under the rate plan.

    Per coordinate: a half-line appears exactly when theta_star sits on a box
    edge, oriented into the box; interior coordinates blow up to the full
    line.  The rate plan fixes the dimension bookkeeping (any positive rate
    yields the same tags for a product box).
    """
    theta_star = np.asarray(theta_star, dtype=float)
    if box.dim != plan.p:
        raise ValueError(f"box dimension {box.dim} does not match plan dimension {plan.p}")
    if not box.contains(theta_star):
        raise ValueError("theta_star lies outside the box")
    tags = []
    for t, (lo, hi) in zip(theta_star, box.intervals):
        if t == lo:
            tags.append(CoordinateTag.HALF_LINE_NONNEG)
        elif t == hi:
            tags.append(CoordinateTag.HALF_LINE_NONPOS)
        else:
            tags.append(CoordinateTag.FULL_LINE)
    return tuple(tags)


def check_condition_S(box: Box, j0) -> bool:
    """Selection-consistency geometry: the box splits across (regular, shrinking).

    True iff no declared coupling constraint ties a shrinking coordinate to a
    regular one; a plain product of intervals always passes.
    """
    j0 = set(int(k) for k in j0)
    for group in box.couplings:
        if group & j0 and group - j0:
            return False
    return True


@dataclass(frozen=True)
class Scenario:
    """Everything one Monte Carlo experiment needs, in estimation layout.

    `theta_star` is the target value: for the superposition model the true
    (g*, alpha*, beta*) with zeros on inactive channels; for the linear model
    the parsimonious representative of the true-value set.  `identifiable`
    lists theta indices of the sqrt(T) block in limit-law order.
    """

    name: str
    covariates: MarkovCovariateSpec
    truth: SuperpositionModel | LinearModel
    penalty: PenaltySpec
    theta_star: np.ndarray
    j0: tuple[int, ...]
    j1: tuple[int, ...]
    identifiable: tuple[int, ...]
    limit: LimitLaw
    plan: RatePlan
    estimator: EstimatorConfig = EstimatorConfig()

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))


@dataclass(frozen=True)
class ReplicationRecord:
    T: float
    rep: int
    seed: int
    theta: np.ndarray
    active_set: tuple[int, ...]
    objective: float
    selected: bool
    ok: bool
    error: str = ""


@dataclass(frozen=True)
class HorizonSummary:
    """All verification statistics for one horizon T."""

    T: float
    n_reps: int
    n_failed: int
    n_selected: int
    sel_freq_zero: float
    sel_freq_nonzero: float
    sel_freq_joint: float
    sel_ci_lo: float
    sel_ci_hi: float
    u_mean: np.ndarray
    u_cov: np.ndarray
    mean_error: np.ndarray
    mean_se: np.ndarray
    cov_rel_frobenius: float
    ks_pvalues: np.ndarray
    shrink_median: np.ndarray
    shrink_q90: np.ndarray
    theta_mean_abs_err: float

    def rows(self):
        yield ("sel_freq_zero", self.sel_freq_zero, self.sel_ci_lo, self.sel_ci_hi)
        yield ("sel_freq_nonzero", self.sel_freq_nonzero, "", "")
        yield ("sel_freq_joint", self.sel_freq_joint, "", "")
        yield ("cov_rel_frobenius", self.cov_rel_frobenius, "", "")
        yield ("theta_mean_abs_err", self.theta_mean_abs_err, "", "")
        for i, v in enumerate(self.u_mean):
            yield (f"u_mean_{i}", v, "", "")
        for i, v in enumerate(self.mean_error):
            yield (f"mean_error_{i}", v, -3 * self.mean_se[i], 3 * self.mean_se[i])
        for i, v in enumerate(self.ks_pvalues):
            yield (f"ks_pvalue_{i}", v, "", "")
        for i, v in enumerate(self.shrink_median):
            yield (f"shrink_median_{i}", v, "", self.shrink_q90[i])

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "n_selected": self.n_selected,
            "sel_freq_zero": self.sel_freq_zero,
            "sel_freq_nonzero": self.sel_freq_nonzero,
            "sel_freq_joint": self.sel_freq_joint,
            "sel_ci": [self.sel_ci_lo, self.sel_ci_hi],
            "u_mean": self.u_mean.tolist(),
            "u_cov": self.u_cov.tolist(),
            "mean_error": self.mean_error.tolist(),
            "mean_se": self.mean_se.tolist(),
            "cov_rel_frobenius": self.cov_rel_frobenius,
            "ks_pvalues": self.ks_pvalues.tolist(),
            "shrink_median": self.shrink_median.tolist(),
            "shrink_q90": self.shrink_q90.tolist(),
            "theta_mean_abs_err": self.theta_mean_abs_err,
        }


@dataclass(frozen=True)
class MonteCarloReport:
    scenario: str
    horizons: tuple[float, ...]
    summaries: tuple[HorizonSummary, ...]
    records: tuple[ReplicationRecord, ...] = field(repr=False, default=())
    seed_base: int = 0

    def summary_for(self, T: float) -> HorizonSummary:
        for s in self.summaries:
            if s.T == T:
                return s
        raise KeyError(f"no summary for horizon {T}")

    def to_dict(self) -> dict:
        return {
            "schema": "v1",
            "scenario": self.scenario,
            "horizons": list(self.horizons),
            "seed_base": self.seed_base,
            "summaries": [s.to_dict() for s in self.summaries],
        }


def _replicate(scenario: Scenario, T: float, rep: int, seed: int) -> ReplicationRecord:
    rng = np.random.default_rng(seed)
    try:
        path = simulate(scenario.covariates, T, rng)
        events = simulate_events(scenario.truth, path, rng)
        result = estimate(path, events, scenario.truth, scenario.penalty, scenario.estimator)
        theta = result.theta
        selected = all(theta[k] == 0.0 for k in scenario.j0) and all(
            theta[i] != 0.0 for i in scenario.j1
        )
        return ReplicationRecord(
            T=T,
            rep=rep,
            seed=seed,
            theta=theta,
            active_set=result.active_set,
            objective=result.objective,
            selected=selected,
            ok=True,
        )
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        return ReplicationRecord(
            T=T,
            rep=rep,
            seed=seed,
            theta=np.full(len(scenario.theta_star), np.nan),
            active_set=(),
            objective=float("nan"),
            selected=False,
            ok=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def _bootstrap_ci(flags: np.ndarray, seed: int, n_boot: int = 1000) -> tuple[float, float]:
    if flags.size == 0:
        return math.nan, math.nan
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, flags.size, size=(n_boot, flags.size))
    freqs = flags[idx].mean(axis=1)
    lo, hi = np.quantile(freqs, [0.025, 0.975])
    return float(lo), float(hi)


def _summarize(scenario: Scenario, T: float, records: list[ReplicationRecord],
               seed_base: int) -> HorizonSummary:
    good = [r for r in records if r.ok]
    n_failed = len(records) - len(good)
    thetas = np.array([r.theta for r in good])
    zero_flags = np.array(
        [all(r.theta[k] == 0.0 for k in scenario.j0) for r in good], dtype=float
    )
    nonzero_flags = np.array(
        [all(r.theta[i] != 0.0 for i in scenario.j1) for r in good], dtype=float
    )
    joint_flags = zero_flags * nonzero_flags
    ci_lo, ci_hi = _bootstrap_ci(joint_flags, seed=seed_base + 999_983)

    block = list(scenario.identifiable)
    sel = joint_flags.astype(bool)
    u = (thetas[sel][:, block] - scenario.theta_star[block]) * math.sqrt(T)
    dim = len(block)
    if u.shape[0] >= 2:
        u_mean = u.mean(axis=0)
        u_cov = np.cov(u, rowvar=False).reshape(dim, dim)
        mean_error = u_mean - scenario.limit.mean
        mean_se = np.sqrt(np.diag(u_cov) / u.shape[0])
        target = scenario.limit.covariance
        cov_rel = float(
            np.linalg.norm(u_cov - target) / np.linalg.norm(target)
        )
        ks = np.array(
            [
                sps.kstest(
                    u[:, i],
                    "norm",
                    args=(
                        scenario.limit.mean[i],
                        math.sqrt(scenario.limit.covariance[i, i]),
                    ),
                ).pvalue
                for i in range(dim)
            ]
        )
    else:
        u_mean = np.full(dim, np.nan)
        u_cov = np.full((dim, dim), np.nan)
        mean_error = np.full(dim, np.nan)
        mean_se = np.full(dim, np.nan)
        cov_rel = math.nan
        ks = np.full(dim, np.nan)

    shrink_scale = T ** (scenario.plan.r / (2.0 * scenario.plan.q))
    shrink = np.abs(thetas[:, list(scenario.j0)]) * shrink_scale
    shrink_median = (
        np.median(shrink, axis=0) if shrink.size else np.empty(0)
    )
    shrink_q90 = (
        np.quantile(shrink, 0.9, axis=0) if shrink.size else np.empty(0)
    )
    theta_err = float(
        np.mean(np.linalg.norm(thetas - scenario.theta_star, axis=1))
    ) if thetas.size else math.nan

    return HorizonSummary(
        T=T,
        n_reps=len(records),
        n_failed=n_failed,
        n_selected=int(joint_flags.sum()),
        sel_freq_zero=float(zero_flags.mean()) if good else math.nan,
        sel_freq_nonzero=float(nonzero_flags.mean()) if good else math.nan,
        sel_freq_joint=float(joint_flags.mean()) if good else math.nan,
        sel_ci_lo=ci_lo,
        sel_ci_hi=ci_hi,
        u_mean=u_mean,
        u_cov=u_cov,
        mean_error=mean_error,
        mean_se=mean_se,
        cov_rel_frobenius=cov_rel,
        ks_pvalues=ks,
        shrink_median=shrink_median,
        shrink_q90=shrink_q90,
        theta_mean_abs_err=theta_err,
    )


def monte_carlo_check(
    scenario: Scenario,
    horizons,
    reps: int,
    seed_base: int,
    jobs: int = 1,
) -> MonteCarloReport:
    """Run the replication study across the horizon ladder and summarize it.

    Replication k of every horizon uses seed seed_base + k; records are kept
    so any row can be replayed.  Failed replications are excluded from the
    statistics and counted in the summary.
    """
    all_records: list[ReplicationRecord] = []
    summaries = []
    for T in horizons:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                records = list(
                    pool.map(
                        _replicate,
                        [scenario] * reps,
                        [T] * reps,
                        range(reps),
                        [seed_base + k for k in range(reps)],
                        chunksize=max(1, reps // (4 * jobs)),
                    )
                )
        else:
            records = [
                _replicate(scenario, T, k, seed_base + k) for k in range(reps)
            ]
        all_records.extend(records)
        summaries.append(_summarize(scenario, T, records, seed_base))
    return MonteCarloReport(
        scenario=scenario.name,
        horizons=tuple(float(T) for T in horizons),
        summaries=tuple(summaries),
        records=tuple(all_records),
        seed_base=seed_base,
    )
