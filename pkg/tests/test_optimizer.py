"""Adam update-rule tests against closed forms and a scripted oracle."""

import numpy as np
import pytest

from tmm_absa.errors import NonFiniteGradient, ShapeMismatch
from tmm_absa.numerics import Tensor
from tmm_absa.optimizer import adam_step, global_norm, init_adam


def one_param(value, **kw):
    params = {"w": Tensor(np.array(value, dtype=float))}
    return params, init_adam(params, **kw)


def test_zero_gradient_first_step_is_noop():
    params, state = one_param([1.0, -2.0])
    adam_step(params, {"w": np.zeros(2)}, params_state := state)
    assert np.array_equal(params["w"].data, [1.0, -2.0])
    assert params_state.t == 1


def test_first_step_constant_gradient_closed_form():
    # bias corrections cancel at t=1 for constant gradient: step ~ alpha
    params, state = one_param([1.0], alpha=0.1)
    adam_step(params, {"w": np.ones(1)}, state)
    assert abs(params["w"].data[0] - (1.0 - 0.1)) < 1e-8


def test_trajectory_matches_scripted_oracle():
    alpha, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    params, state = one_param([1.0], alpha=alpha)
    theta, m, v = 1.0, 0.0, 0.0
    for t in range(1, 101):
        g = 2.0 * theta  # gradient of theta^2
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - alpha * mhat / (np.sqrt(vhat) + eps)
        adam_step(params, {"w": np.array([2.0 * params["w"].data[0]])}, state)
        assert abs(params["w"].data[0] - theta) < 1e-12, f"diverged at step {t}"
    assert abs(params["w"].data[0]) < 0.05


def test_update_is_gradient_scale_invariant_for_constant_gradients():
    # m-hat / sqrt(v-hat) is exactly 1 for any constant positive gradient,
    # so the ratio must agree across gradient scales
    ratios = {}
    for c in (1.0, 10.0, 0.001):
        params, state = one_param([0.0], alpha=0.01)
        seen = []
        for t in range(1, 6):
            adam_step(params, {"w": np.array([3.0 * c])}, state)
            mhat = state.m["w"][0] / (1 - state.beta1**t)
            vhat = state.v["w"][0] / (1 - state.beta2**t)
            seen.append(mhat / np.sqrt(vhat))
        ratios[c] = seen
    for c in (10.0, 0.001):
        assert np.abs(np.array(ratios[c]) - np.array(ratios[1.0])).max() < 1e-9


def test_bounded_step_property():
    rng = np.random.Generator(np.random.PCG64(3))
    params = {"w": Tensor(rng.normal(size=(4, 5)))}
    state = init_adam(params, alpha=0.02)
    g = rng.normal(size=(4, 5))
    for _ in range(5):
        before = params["w"].data.copy()
        adam_step(params, {"w": g}, state)
        assert np.abs(params["w"].data - before).max() <= 0.02 * (1 + 1e-6)


def test_shape_and_name_guards():
    params, state = one_param([1.0, 2.0])
    with pytest.raises(ShapeMismatch):
        adam_step(params, {"w": np.zeros(3)}, state)
    with pytest.raises(ShapeMismatch):
        adam_step(params, {"x": np.zeros(2)}, state)
    with pytest.raises(ShapeMismatch):
        adam_step(params, {}, state)


def test_nonfinite_gradient_rejected():
    params, state = one_param([1.0])
    with pytest.raises(NonFiniteGradient):
        adam_step(params, {"w": np.array([np.nan])}, state)
    with pytest.raises(NonFiniteGradient):
        adam_step(params, {"w": np.array([np.inf])}, state)


def test_hyperparameter_validation():
    params = {"w": Tensor([1.0])}
    with pytest.raises(ValueError):
        init_adam(params, beta1=1.0)
    with pytest.raises(ValueError):
        init_adam(params, alpha=0.0)


def test_global_norm_clipping():
    params = {"a": Tensor(np.zeros(3)), "b": Tensor(np.zeros(4))}
    state = init_adam(params, alpha=0.1, clip_norm=5.0)
    grads = {"a": np.full(3, 100.0), "b": np.full(4, 100.0)}
    assert global_norm(grads) > 5.0
    adam_step(params, grads, state)
    # clipping rescales, direction is preserved and steps stay bounded
    assert np.abs(params["a"].data).max() <= 0.1 * (1 + 1e-6)
    # moments were fed the clipped gradient, whose global norm is 5
    total = sum(float(((m / 0.1) ** 2).sum()) for m in state.m.values())  # undo (1-beta1)
    assert abs(np.sqrt(total) - 5.0) < 1e-9


def test_clip_nop_when_under_threshold():
    params1, state1 = one_param([1.0], alpha=0.1, clip_norm=1e9)
    params2, state2 = one_param([1.0], alpha=0.1)
    g = {"w": np.array([0.5])}
    adam_step(params1, g, state1)
    adam_step(params2, g, state2)
    assert np.array_equal(params1["w"].data, params2["w"].data)
