import numpy as np
import pytest

from pqmle.covariate import (
    Collinearity,
    MarkovCovariateSpec,
    collinearity_matrix,
    ergodic_average,
    nu_integral,
    simulate,
    stationary_distribution,
)


def two_state_spec(values=((0.0,), (1.0,)), rate_up=1.0, rate_down=1.0):
    Q = np.array([[-rate_up, rate_up], [rate_down, -rate_down]])
    return MarkovCovariateSpec(states=np.array(values), generator=Q)


def test_stationary_symmetric():
    pi = stationary_distribution(np.array([[-1.0, 1.0], [1.0, -1.0]]))
    assert pi == pytest.approx([0.5, 0.5], abs=1e-14)


def test_stationary_asymmetric_hand_solve():
    pi = stationary_distribution(np.array([[-1.0, 1.0], [2.0, -2.0]]))
    assert pi == pytest.approx([2.0 / 3.0, 1.0 / 3.0], abs=1e-12)


def test_stationary_single_state():
    assert stationary_distribution(np.zeros((1, 1))) == pytest.approx([1.0])


def test_stationary_reducible_rejected():
    with pytest.raises(ValueError, match="irreducible"):
        stationary_distribution(np.zeros((2, 2)))


def test_spec_validation():
    with pytest.raises(ValueError, match="sum to zero"):
        MarkovCovariateSpec(states=[[0.0], [1.0]], generator=[[-1.0, 0.5], [1.0, -1.0]])
    with pytest.raises(ValueError, match="nonnegative"):
        MarkovCovariateSpec(states=[[0.0], [1.0]], generator=[[1.0, -1.0], [1.0, -1.0]])
    with pytest.raises(ValueError, match="irreducible"):
        MarkovCovariateSpec(states=[[0.0], [1.0]], generator=np.zeros((2, 2)))


def test_simulate_single_state_has_no_jumps():
    spec = MarkovCovariateSpec(states=[[2.5]], generator=[[0.0]])
    path = simulate(spec, 10.0, seed=3)
    assert path.n_segments == 1
    assert path.segment_lengths() == pytest.approx([10.0])


def test_simulate_deterministic_given_seed():
    spec = two_state_spec()
    p1 = simulate(spec, 50.0, seed=11)
    p2 = simulate(spec, 50.0, seed=11)
    assert np.array_equal(p1.start_times, p2.start_times)
    assert np.array_equal(p1.state_indices, p2.state_indices)


def test_simulate_ergodic_fraction():
    spec = two_state_spec()
    path = simulate(spec, 4000.0, seed=5)
    frac = ergodic_average(path, lambda x: x)[0]
    assert frac == pytest.approx(0.5, abs=0.05)


def test_ergodic_average_constant_and_linearity():
    spec = two_state_spec()
    path = simulate(spec, 20.0, seed=1)
    assert ergodic_average(path, lambda x: 1.0) == pytest.approx([1.0], abs=1e-12)
    f = ergodic_average(path, lambda x: x)
    g = ergodic_average(path, lambda x: -x)
    assert f == pytest.approx(-g, abs=1e-14)


def test_nu_integral_examples():
    spec = two_state_spec()
    assert nu_integral(spec, lambda x: 3.25) == pytest.approx([3.25], abs=1e-14)
    spec2 = MarkovCovariateSpec(
        states=[[0.0], [2.0]], generator=[[-1.0, 1.0], [2.0, -2.0]]
    )
    assert nu_integral(spec2, lambda x: x) == pytest.approx([2.0 / 3.0], abs=1e-12)


def test_time_average_matches_nu_integral_at_sqrt_T_rate():
    spec = two_state_spec()
    T = 2000.0
    target = nu_integral(spec, lambda x: x)[0]
    errors = [
        abs(ergodic_average(simulate(spec, T, seed=s), lambda x: x)[0] - target)
        for s in range(20)
    ]
    assert max(errors) <= 3.0 / np.sqrt(T)


def test_moment_integrals_finite_and_match_direct_sum():
    # bounded state space makes every moment integral a finite sum
    spec = MarkovCovariateSpec(
        states=[[0.5, 1.0], [2.0, 0.25], [1.0, 3.0]],
        generator=[[-2.0, 1.0, 1.0], [1.0, -2.0, 1.0], [1.0, 1.0, -2.0]],
    )
    pi = stationary_distribution(spec.generator)
    alpha = np.array([0.4, 0.6])
    for p in (2, 3, 4):
        val = nu_integral(
            spec,
            lambda x: np.linalg.norm(x) ** p / (alpha @ x) ** (p - 1),
        )[0]
        direct = sum(
            pi[s] * np.linalg.norm(x) ** p / (alpha @ x) ** (p - 1)
            for s, x in enumerate(spec.states)
        )
        assert np.isfinite(val)
        assert val == pytest.approx(direct, rel=1e-14)


def test_collinear_states_hold_pathwise_exactly():
    col = Collinearity(basis=(0, 1), coefficients=[[1.0, 1.0]])
    spec = MarkovCovariateSpec.from_collinear(
        basis=(0, 1),
        basis_values=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.5]],
        coefficients=[[1.0, 1.0]],
        generator=np.full((4, 4), 0.5) - np.eye(4) * 2.0,
    )
    path = simulate(spec, 200.0, seed=9)
    vals = path.segment_values()
    predicted = vals[:, :2] @ np.array(col.coefficients).T
    assert np.array_equal(vals[:, 2:], predicted)


def test_collinearity_violation_rejected():
    col = Collinearity(basis=(0,), coefficients=[[2.0]])
    with pytest.raises(ValueError, match="collinearity"):
        MarkovCovariateSpec(
            states=[[1.0, 1.0], [2.0, 4.0]],
            generator=[[-1.0, 1.0], [1.0, -1.0]],
            collinearity=col,
        )


def test_collinearity_matrix_examples():
    spec = MarkovCovariateSpec.from_collinear(
        basis=(0,),
        basis_values=[[1.0], [2.0]],
        coefficients=[[1.0]],
        generator=[[-1.0, 1.0], [1.0, -1.0]],
    )
    cmap = collinearity_matrix(spec)
    assert cmap.matrix == pytest.approx(np.array([[1.0], [1.0]]))
    assert cmap.kernel.shape == (1, 2)

    spec3 = MarkovCovariateSpec.from_collinear(
        basis=(0, 1),
        basis_values=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        coefficients=[[1.0, 1.0]],
        generator=np.full((3, 3), 1.0) - np.eye(3) * 3.0,
    )
    cmap3 = collinearity_matrix(spec3)
    assert cmap3.matrix == pytest.approx(
        np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    )

    plain = two_state_spec()
    cmap_id = collinearity_matrix(plain)
    assert cmap_id.matrix == pytest.approx(np.eye(1))
    assert cmap_id.kernel.shape == (0, 1)


def test_path_segment_lookup_is_predictable():
    spec = two_state_spec()
    path = simulate(spec, 30.0, seed=2)
    if path.n_segments > 1:
        t_jump = path.start_times[1]
        # a query exactly at the jump instant resolves to the pre-jump segment
        assert path.segment_index_at(t_jump) == 0
        assert path.segment_index_at(t_jump + 1e-9) == 1
