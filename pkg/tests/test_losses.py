import math

import numpy as np
import pytest

from emotic_mbn.losses import ContinuousLossConfig, class_weights, combined_loss, cont_loss, disc_loss

from gradcheck import numeric_grad, rel_error


def test_weight_at_e():
    w = class_weights(np.full(26, 0.5), math.e - 0.5).w
    np.testing.assert_allclose(w, 1.0, rtol=1e-15)


def test_weight_values():
    w = class_weights(np.array([0.0, 1.0]), 1.2).w
    assert w[0] == pytest.approx(1 / math.log(1.2))
    assert w[0] == pytest.approx(5.4848, abs=1e-3)
    assert w[1] == pytest.approx(1.2680, abs=1e-3)


@pytest.mark.parametrize("c", [1.0, 0.5, -2.0])
def test_weight_rejects_small_c(c):
    with pytest.raises(ValueError):
        class_weights(np.zeros(26), c)


def test_weights_monotone():
    p = np.linspace(0, 1, 26)
    assert np.all(np.diff(class_weights(p).w) < 0)


def test_disc_loss_perfect():
    y = np.zeros(26)
    y[3] = 1
    loss, grad = disc_loss(y, y, np.arange(1, 27.0))
    assert loss == 0 and not grad.any()


def test_disc_loss_hand_values():
    assert disc_loss([1, 0], [0, 1], np.array([1.0, 1.0]))[0] == 2
    loss, grad = disc_loss([0.5, 0.5], [1, 0], np.array([2.0, 3.0]))
    assert loss == 1.25
    # 2 * w * (pred - target) = (2*2*(-0.5), 2*3*0.5)
    np.testing.assert_array_equal(grad, [-2.0, 3.0])


def test_disc_loss_non_finite():
    with pytest.raises(FloatingPointError):
        disc_loss([np.nan, 0], [0, 1], np.ones(2))


def test_cont_loss_inside_margin():
    loss, grad = cont_loss([0.05, -0.05, 0.0], [0, 0, 0], 0.1)
    assert loss == 0 and not grad.any()


def test_cont_loss_hand_values():
    assert cont_loss([0.5, 0, 0], [0, 0, 0], ContinuousLossConfig(0.1))[0] == 0.25
    loss, grad = cont_loss([0.5, 0.05, 0], [0, 0, 0], 0.1)
    assert loss == 0.25
    np.testing.assert_array_equal(grad, [1.0, 0.0, 0.0])


def test_cont_margin_invariance():
    base = cont_loss([0.5, 0.02, 0.3], [0.0, 0.0, 0.0], 0.1)[0]
    moved = cont_loss([0.5, -0.07, 0.3], [0.0, 0.0, 0.0], 0.1)[0]
    assert base == moved


def test_theta_must_be_positive():
    with pytest.raises(ValueError):
        ContinuousLossConfig(0.0)


def test_combined_reductions():
    d = disc_loss([0.5, 0.5], [1, 0], np.array([2.0, 3.0]))
    c = cont_loss([0.5, 0, 0], [0, 0, 0], 0.1)
    assert combined_loss(d, c, 1, 0)[0] == d[0]
    assert combined_loss(d, c, 0, 1)[0] == c[0]
    total, gd, gc = combined_loss(d, c, 1, 1)
    assert total == 1.5
    np.testing.assert_array_equal(gd, d[1])
    np.testing.assert_array_equal(gc, c[1])
    with pytest.raises(ValueError):
        combined_loss(d, c, 0, 0)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.uniform(1, 5, 26)
        y = (rng.random(26) < 0.3).astype(float)
        pred = rng.normal(0.3, 0.5, 26)
        num = numeric_grad(lambda p: disc_loss(p, y, w)[0], pred)
        assert rel_error(disc_loss(pred, y, w)[1], num) < 1e-6

        target = rng.random(3)
        p3 = rng.random(3)
        if np.any(np.abs(np.abs(p3 - target) - 0.1) < 1e-4):
            continue
        num = numeric_grad(lambda p: cont_loss(p, target, 0.1)[0], p3)
        assert rel_error(cont_loss(p3, target, 0.1)[1], num) < 1e-6
