import numpy as np
import pytest

from testutil import stationary_oracle
from trailmine.markov import (
    LabelOutOfRange,
    NoConvergence,
    ZeroRowWithoutTeleport,
    build_feature_matrix,
    build_transition_model,
    count_transitions,
    page_view_vector,
    stationary_distribution,
)
from trailmine.sessions import UserTrace

ABCABC = [0, 1, 2, 0, 1, 2]
AABBCC = [0, 0, 1, 1, 2, 2]


def test_count_transitions_worked_examples():
    assert count_transitions(ABCABC, 3).counts.tolist() == [[0, 2, 0], [0, 0, 2], [1, 0, 0]]
    assert count_transitions(AABBCC, 3).counts.tolist() == [[1, 1, 0], [0, 1, 1], [0, 0, 1]]


def test_count_transitions_single_element():
    assert count_transitions([1], 3).counts.sum() == 0


def test_count_transitions_total_is_length_minus_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        trace = rng.integers(0, 6, size=rng.integers(1, 50))
        assert count_transitions(trace, 6).counts.sum() == len(trace) - 1


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        count_transitions([0, 3], 3)
    with pytest.raises(LabelOutOfRange):
        page_view_vector([-1], 3)


def test_model_alpha_zero_worked_example():
    model = build_transition_model(count_transitions(AABBCC, 3), alpha=0.0)
    assert np.allclose(model.P, [[0.5, 0.5, 0], [0, 0.5, 0.5], [0, 0, 1.0]])


def test_model_zero_row_without_teleport():
    with pytest.raises(ZeroRowWithoutTeleport):
        build_transition_model(count_transitions([0, 0], 2), alpha=0.0)


def test_model_smoothing_row_values():
    # row A of the cyclic counts: (0.05, 2.05, 0.05) / 2.15
    model = build_transition_model(count_transitions(ABCABC, 3), alpha=0.15)
    assert np.allclose(model.P[0], np.array([0.05, 2.05, 0.05]) / 2.15)


def test_all_zero_row_becomes_uniform():
    counts = np.zeros((4, 4), dtype=np.int64)
    counts[0, 1] = 3
    model = build_transition_model(counts, alpha=0.15)
    assert np.allclose(model.P[2], np.full(4, 0.25))


def test_row_stochastic_for_random_counts():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        counts = rng.integers(0, 20, size=(n, n))
        for alpha in (0.01, 0.15, 1.0, 7.5):
            P = build_transition_model(counts, alpha).P
            assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
            assert (P > 0).all()


def test_stationary_symmetric_two_state():
    # alternating trace ending where it started, so counts are symmetric
    trace = [0, 1] * 10 + [0]
    for alpha in (0.0, 0.15, 1.0):
        model = build_transition_model(count_transitions(trace, 2), alpha=alpha)
        pi = stationary_distribution(model).pi
        assert np.allclose(pi, [0.5, 0.5], atol=1e-9)


def test_stationary_oracle_value():
    model = build_transition_model(count_transitions(ABCABC, 3), alpha=0.15)
    pi = stationary_distribution(model).pi
    # frozen from an independent linear solve of the smoothed chain
    assert np.abs(pi - np.array([0.3261, 0.3335, 0.3404])).max() < 5e-4


def test_power_iteration_agrees_with_direct_solve():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 11))
        counts = rng.integers(0, 25, size=(n, n))
        model = build_transition_model(counts, alpha=0.15)
        power = stationary_distribution(model, method="power").pi
        direct = stationary_distribution(model, method="direct").pi
        oracle = stationary_oracle(counts, 0.15)
        assert np.abs(power - direct).sum() < 1e-8
        assert np.abs(power - oracle).sum() < 1e-8


def test_stationary_invariants():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        counts = rng.integers(0, 15, size=(n, n))
        model = build_transition_model(counts, alpha=0.15)
        dist = stationary_distribution(model)
        assert (dist.pi > 0).all()
        assert abs(dist.pi.sum() - 1.0) < 1e-12
        assert np.abs(dist.pi @ model.P - dist.pi).sum() <= 1e-10


def test_permutation_equivariance():
    rng = np.random.default_rng(3)
    trace = rng.integers(0, 5, size=80)
    sigma = rng.permutation(5)
    pi = stationary_distribution(build_transition_model(count_transitions(trace, 5), 0.15)).pi
    permuted_trace = sigma[trace]
    pi_perm = stationary_distribution(
        build_transition_model(count_transitions(permuted_trace, 5), 0.15)
    ).pi
    assert np.allclose(pi_perm[sigma], pi, atol=1e-9)


def test_single_state_concentration():
    alpha = 0.15
    model = build_transition_model(count_transitions([0] * 20, 2), alpha=alpha)
    pi = stationary_distribution(model).pi
    assert pi[0] >= 1 - alpha


def test_no_convergence_raises_and_direct_fallback_works():
    counts = np.array([[5000, 1], [1, 50]])
    model = build_transition_model(counts, alpha=0.001)
    with pytest.raises(NoConvergence):
        stationary_distribution(model, tol=1e-15, max_iter=2)
    direct = stationary_distribution(model, method="direct")
    assert abs(direct.pi.sum() - 1.0) < 1e-12


def test_order_sensitivity_witness():
    v1 = page_view_vector(ABCABC, 3).views
    v2 = page_view_vector(AABBCC, 3).views
    assert v1.tolist() == v2.tolist() == [2, 2, 2]
    pi1 = stationary_distribution(build_transition_model(count_transitions(ABCABC, 3), 0.15)).pi
    pi2 = stationary_distribution(build_transition_model(count_transitions(AABBCC, 3), 0.15)).pi
    assert np.abs(pi1 - pi2).sum() > 0.1


def test_page_view_vector_empty_and_sum():
    assert page_view_vector([], 4).views.tolist() == [0, 0, 0, 0]
    rng = np.random.default_rng(1)
    trace = rng.integers(0, 4, size=33)
    assert page_view_vector(trace, 4).views.sum() == 33


def _trace(user, seq):
    return UserTrace(user=user, sequence=list(seq), ontologies=[None] * len(seq),
                     session_count=1, session_lengths=[len(seq)])


def test_feature_matrix_shapes_and_simplex():
    traces = [_trace("a", [0, 1, 2, 0, 1]), _trace("b", [2, 2, 2, 1])]
    fm = build_feature_matrix(traces, 4, feature_kind="stationary")
    assert fm.X.shape == (2, 4)
    assert np.allclose(fm.X.sum(axis=1), 1.0, atol=1e-9)
    assert fm.user_ids == ["a", "b"]
    pv = build_feature_matrix(traces, 4, feature_kind="pageviews")
    assert pv.X[0].sum() == 5 and pv.X[1].sum() == 4
    with pytest.raises(ValueError):
        build_feature_matrix(traces, 4, feature_kind="nope")
