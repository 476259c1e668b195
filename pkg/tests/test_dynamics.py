import numpy as np
import pytest

from syncstl.dynamics import (AgentModel, check_bounds, double_integrator_2d, preset, rollout,
                              single_integrator)


def test_double_integrator_step():
    m = double_integrator_2d()
    xs = rollout(m, [0, 0, 0, 0], [[2, 0], [0, -2]])
    assert np.allclose(xs[1], [1, 0, 2, 0])
    assert np.allclose(xs[2], [3, -1, 2, -2])


def test_rollout_shapes():
    m = single_integrator(1)
    assert rollout(m, [1.0], np.zeros((0, 1))).shape == (1, 1)
    assert rollout(m, [1.0], [[1], [1], [-1]])[:, 0].tolist() == [1, 2, 3, 2]
    with pytest.raises(ValueError):
        rollout(m, [1.0, 2.0], [[1]])


def test_model_validation():
    with pytest.raises(ValueError):
        AgentModel(np.eye(2), np.ones((3, 1)), np.zeros((2, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        AgentModel(np.eye(1), np.eye(1), [[1, 0]], [[-1, 1]])
    with pytest.raises(ValueError):
        AgentModel(np.eye(1), np.eye(1), [[0, np.inf]], [[-1, 1]])


def test_bounds_are_closed():
    m = single_integrator(1, [(0, 2)], [(-1, 1)])
    assert check_bounds(m, [[0.0], [2.0]], [[1.0]]) == []
    v = check_bounds(m, [[0.0], [2.5]], [[-1.5]])
    assert [(x.kind, x.k) for x in v] == [("state", 1), ("control", 0)]
    assert check_bounds(m, [[2.0 + 1e-9]], tol=1e-6) == []


def test_presets():
    assert preset("double_integrator_2d") == double_integrator_2d()
    m = preset("single_integrator_1d", x_bounds=[(0, 4)])
    assert m.x_bounds.tolist() == [[0, 4]]
    with pytest.raises(KeyError):
        preset("unicycle")
