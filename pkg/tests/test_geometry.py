import numpy as np
import pytest

from otbench import geometry


def test_squared_euclidean_cost_known_value():
    assert geometry.squared_euclidean_cost([0.0, 0.0], [3.0, 4.0]) == 25.0
    assert geometry.squared_euclidean_cost([1.0, 2.0], [1.0, 2.0]) == 0.0


def test_cost_matrix_known_values():
    x = np.array([[0.0, 0.0], [1.0, 2.0]])
    y = np.array([[1.0, 0.0], [0.0, 3.0], [-1.0, -1.0]])
    expected = np.array([[1.0, 9.0, 2.0], [4.0, 2.0, 13.0]])
    np.testing.assert_allclose(geometry.cost_matrix(x, y), expected)


def test_cost_matrix_accepts_batches():
    x = geometry.SampleBatch(np.zeros((2, 2)))
    y = geometry.SampleBatch(np.ones((3, 2)), role=geometry.TARGET)
    np.testing.assert_allclose(geometry.cost_matrix(x, y), np.full((2, 3), 2.0))


def test_cost_matrix_rejects_empty():
    with pytest.raises(ValueError):
        geometry.cost_matrix(np.zeros((0, 2)), np.zeros((3, 2)))


def test_sample_batch_validates_shape_and_finiteness():
    with pytest.raises(ValueError):
        geometry.SampleBatch(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        geometry.SampleBatch(np.array([[np.nan, 0.0]]))


def test_unit_ball_support_and_second_moment(rng):
    batch = geometry.sample_unit_ball(40_000, rng)
    r2 = np.einsum("ij,ij->i", batch.points, batch.points)
    assert r2.max() <= 1.0 + 1e-12
    # E[r^2] = 1/2 for the uniform disk
    assert abs(r2.mean() - 0.5) < 0.01
    assert batch.role == geometry.SOURCE


def test_four_balls_support_and_mixture_weights(rng):
    batch = geometry.sample_four_balls(40_000, rng)
    d = np.linalg.norm(
        batch.points[:, None, :] - geometry.FOUR_BALL_CENTERS[None, :, :], axis=2
    )
    nearest = d.min(axis=1)
    assert nearest.max() <= geometry.FOUR_BALL_RADIUS + 1e-12
    counts = np.bincount(d.argmin(axis=1), minlength=4) / len(batch)
    np.testing.assert_allclose(counts, 0.25, atol=0.02)
    assert batch.role == geometry.TARGET


def test_samplers_are_deterministic_given_seed():
    a = geometry.sample_unit_ball(50, np.random.default_rng(7)).points
    b = geometry.sample_unit_ball(50, np.random.default_rng(7)).points
    np.testing.assert_array_equal(a, b)
    c = geometry.sample_four_balls(50, np.random.default_rng(7)).points
    d = geometry.sample_four_balls(50, np.random.default_rng(7)).points
    np.testing.assert_array_equal(c, d)


def test_zero_size_samples_allowed():
    batch = geometry.sample_unit_ball(0, np.random.default_rng(0))
    assert len(batch) == 0
