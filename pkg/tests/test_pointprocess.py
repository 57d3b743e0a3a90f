import numpy as np
import pytest
from scipy import stats as sps

from pqmle.covariate import CovariatePath, MarkovCovariateSpec, simulate
from pqmle.pointprocess import (
    EventPath,
    LinearModel,
    SuperpositionModel,
    integrated_intensity,
    intensity_at,
    log_likelihood,
    simulate_events,
    sufficient_stats,
)


def constant_path(value, T, a=1):
    return CovariatePath(
        horizon=T,
        start_times=np.array([0.0]),
        state_indices=np.array([0]),
        state_values=np.array([[value] * a]),
    )


def superposition(g, alpha, beta, a=None):
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return SuperpositionModel(
        g=g, alpha=alpha, beta=beta, g_max=10.0, alpha_max=10.0, beta_neg=3.0, beta_pos=3.0
    )


def test_intensity_examples():
    assert intensity_at(superposition(1.5, [0.0], [0.3]), [7.0]) == pytest.approx(1.5)
    assert intensity_at(superposition(1.0, [1.0], [0.0]), [123.0]) == pytest.approx(2.0)
    lin = LinearModel(alpha=np.array([2.0, 3.0]), alpha_max=10.0)
    assert intensity_at(lin, [1.0, 2.0]) == pytest.approx(8.0)


def test_model_box_validation():
    with pytest.raises(ValueError):
        superposition(-0.1, [0.0], [0.0])
    with pytest.raises(ValueError):
        LinearModel(alpha=np.array([-0.5]), alpha_max=1.0)
    with pytest.raises(ValueError):
        SuperpositionModel(
            g=0.5, alpha=np.array([0.5]), beta=np.array([0.0]),
            g_max=1.0, alpha_max=1.0, beta_neg=0.0, beta_pos=0.0,
        )


def test_simulate_zero_intensity_gives_empty_path():
    lin = LinearModel(alpha=np.array([0.0]), alpha_max=1.0)
    events = simulate_events(lin, constant_path(3.0, 25.0), seed=1)
    assert events.count == 0


def test_simulate_deterministic():
    model = superposition(1.0, [1.0], [0.5])
    path = constant_path(1.0, 40.0)
    e1 = simulate_events(model, path, seed=8)
    e2 = simulate_events(model, path, seed=8)
    assert np.array_equal(e1.times, e2.times)


def test_poisson_count_moments():
    # constant rate: counts are Poisson(c*T); mean and variance within 3 SE
    c, T, n = 1.3, 50.0, 10_000
    model = superposition(c, [0.0], [0.0])
    path = constant_path(0.0, T)
    rng = np.random.default_rng(123)
    counts = np.array(
        [simulate_events(model, path, rng).count for _ in range(n)], dtype=float
    )
    target = c * T
    se_mean = counts.std(ddof=1) / np.sqrt(n)
    assert abs(counts.mean() - target) < 3.0 * se_mean
    s2 = counts.var(ddof=1)
    m4 = np.mean((counts - counts.mean()) ** 4)
    se_var = np.sqrt(max(m4 - s2**2, 0.0) / n)
    assert abs(s2 - target) < 3.0 * se_var


def test_compensator_martingale_property():
    # mean of N_T - int lambda* dt over seeds is 0 within 3 SE
    spec = MarkovCovariateSpec(
        states=[[0.0], [1.0]], generator=[[-1.0, 1.0], [1.0, -1.0]]
    )
    truth = superposition(1.0, [1.0], [0.8])
    n = 10_000
    rng = np.random.default_rng(77)
    diffs = np.empty(n)
    for k in range(n):
        path = simulate(spec, 20.0, rng)
        events = simulate_events(truth, path, rng)
        diffs[k] = events.count - integrated_intensity(truth, path)
    se = diffs.std(ddof=1) / np.sqrt(n)
    assert abs(diffs.mean()) < 3.0 * se


@pytest.mark.parametrize("rate", [0.4, 2.5])
def test_first_gap_is_exponential(rate):
    model = superposition(rate, [0.0], [0.0])
    path = constant_path(0.0, 2000.0)
    rng = np.random.default_rng(5)
    gaps = []
    for _ in range(400):
        ev = simulate_events(model, path, rng)
        if ev.count:
            gaps.append(ev.times[0])
    p = sps.kstest(gaps, "expon", args=(0.0, 1.0 / rate)).pvalue
    assert p > 0.01


def test_integrated_intensity_examples():
    model = superposition(2.0, [0.0], [0.0])
    assert integrated_intensity(model, constant_path(0.0, 7.0)) == pytest.approx(14.0)
    zero = superposition(0.0, [0.0], [0.0])
    assert integrated_intensity(zero, constant_path(1.0, 7.0)) == 0.0


def test_integrated_intensity_linear_in_alpha():
    spec = MarkovCovariateSpec(
        states=[[0.5, 1.0], [2.0, 0.25]], generator=[[-1.0, 1.0], [1.0, -1.0]]
    )
    path = simulate(spec, 30.0, seed=4)
    occ = path.occupancy()
    channel_integrals = occ @ path.state_values
    alpha = np.array([0.7, 1.1])
    lin = LinearModel(alpha=alpha, alpha_max=5.0)
    assert integrated_intensity(lin, path) == pytest.approx(
        float(alpha @ channel_integrals), rel=1e-12
    )


def test_loglik_homogeneous_closed_form():
    g, T = 1.7, 60.0
    model = superposition(g, [0.0], [0.0])
    path = constant_path(0.0, T)
    events = simulate_events(model, path, seed=21)
    n = events.count
    assert log_likelihood(model, path, events) == pytest.approx(
        n * np.log(g) - g * T, rel=1e-12
    )


def test_loglik_zero_rate_with_events_is_minus_inf():
    lin = LinearModel(alpha=np.array([0.0]), alpha_max=1.0)
    path = constant_path(1.0, 10.0)
    events = EventPath(horizon=10.0, times=np.array([2.0]))
    assert log_likelihood(lin, path, events) == float("-inf")


def test_score_matches_finite_difference():
    spec = MarkovCovariateSpec(
        states=[[0.0, 1.0], [1.5, 0.5], [2.5, 2.0]],
        generator=np.full((3, 3), 1.0) - np.eye(3) * 3.0,
    )
    truth = superposition(1.0, [1.0, 0.5], [0.6, -0.4])
    rng = np.random.default_rng(11)
    path = simulate(spec, 300.0, rng)
    events = simulate_events(truth, path, rng)
    stats = sufficient_stats(path, events)

    model = superposition(0.9, [0.8, 0.7], [0.5, -0.2])
    for j in range(2):
        # analytic score in alpha_j: sum_i e^{beta_j x_j(t_i)}/rate(t_i) - int e^{beta_j x_j} dt
        rates = model.intensity(stats.state_values)
        ex = np.exp(model.beta[j] * stats.state_values[:, j])
        analytic = float(stats.counts @ (ex / rates) - stats.occupancy @ ex)

        h = 1e-6
        up = model.with_params(model.g, model.alpha + h * np.eye(2)[j], model.beta)
        dn = model.with_params(model.g, model.alpha - h * np.eye(2)[j], model.beta)
        fd = (log_likelihood(up, path, events) - log_likelihood(dn, path, events)) / (2 * h)
        assert fd == pytest.approx(analytic, rel=1e-5)


def test_loglik_concave_in_g_alpha_for_fixed_beta():
    spec = MarkovCovariateSpec(
        states=[[0.2], [1.0], [2.2]], generator=np.full((3, 3), 1.0) - np.eye(3) * 3.0
    )
    truth = superposition(1.0, [1.0], [0.5])
    rng = np.random.default_rng(3)
    path = simulate(spec, 200.0, rng)
    events = simulate_events(truth, path, rng)
    beta = np.array([0.4])
    sampler = np.random.default_rng(17)
    for _ in range(25):
        g1, g2 = sampler.uniform(0.1, 3.0, 2)
        a1, a2 = sampler.uniform(0.1, 3.0, 2)
        m1 = superposition(g1, [a1], beta)
        m2 = superposition(g2, [a2], beta)
        mid = superposition((g1 + g2) / 2, [(a1 + a2) / 2], beta)
        lhs = log_likelihood(mid, path, events)
        rhs = 0.5 * (log_likelihood(m1, path, events) + log_likelihood(m2, path, events))
        assert lhs >= rhs - 1e-9


def test_appending_quiet_stretch_lowers_loglik_linearly():
    model = superposition(1.2, [0.0], [0.0])
    T, dt = 30.0, 5.0
    path = constant_path(0.0, T)
    events = simulate_events(model, path, seed=2)
    longer = CovariatePath(
        horizon=T + dt,
        start_times=np.array([0.0]),
        state_indices=np.array([0]),
        state_values=np.array([[0.0]]),
    )
    events_long = EventPath(horizon=T + dt, times=events.times)
    drop = log_likelihood(model, path, events) - log_likelihood(model, longer, events_long)
    assert drop == pytest.approx(1.2 * dt, rel=1e-12)


def test_event_at_jump_instant_uses_pre_jump_state():
    path = CovariatePath(
        horizon=2.0,
        start_times=np.array([0.0, 1.0]),
        state_indices=np.array([0, 1]),
        state_values=np.array([[0.0], [5.0]]),
    )
    events = EventPath(horizon=2.0, times=np.array([1.0]))
    stats = sufficient_stats(path, events)
    assert stats.counts.tolist() == [1, 0]


def test_event_path_validation():
    with pytest.raises(ValueError):
        EventPath(horizon=1.0, times=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        EventPath(horizon=1.0, times=np.array([1.5]))
    with pytest.raises(ValueError):
        EventPath(horizon=1.0, times=np.array([0.0]))
