import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsvox.losses import (
    LOG_EPS,
    DepthTarget,
    color_loss,
    depth_kl_loss,
    depth_mse_loss,
    total_loss,
)


def kl_reference(h, t, dt, D, s):
    """Scalar loop over bins; independent of the vectorized implementation."""
    total = 0.0
    for hk, tk, dk in zip(h, t, dt):
        w = np.exp(-((tk - D) ** 2) / (2 * s * s))
        total -= w * np.log(hk + LOG_EPS) * dk
    return total


def test_color_loss_examples():
    assert color_loss(np.ones((3, 3)) * 0.2, np.ones((3, 3)) * 0.2)[0] == 0.0
    assert color_loss([[1.0, 0, 0]], [[0.0, 0, 0]])[0] == 1.0
    a = np.zeros((2, 3))
    b = np.array([[np.sqrt(0.02), 0, 0], [0, np.sqrt(0.04), 0]])
    assert color_loss(a, b)[0] == pytest.approx(0.03, abs=1e-15)


def test_color_loss_cotangent_and_errors():
    pred = np.array([[0.5, 0.2, 0.1], [0.0, 1.0, 0.3]])
    tgt = np.array([[0.4, 0.2, 0.0], [0.1, 0.7, 0.3]])
    _, d = color_loss(pred, tgt)
    np.testing.assert_allclose(d, 2 * (pred - tgt) / 2)
    with pytest.raises(ValueError):
        color_loss(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        color_loss(np.zeros((2, 3)), np.zeros((3, 3)))


def test_kl_hand_example():
    loss, _ = depth_kl_loss([0.8, 0.2], [1.0, 2.0], [1.0, 1.0], 1.0, 0.5)
    w2 = np.exp(-2.0)
    assert w2 == pytest.approx(0.1353, abs=1e-4)
    assert loss == pytest.approx(-(np.log(0.8) + w2 * np.log(0.2)), abs=1e-9)
    assert loss == pytest.approx(0.4410, abs=1e-4)


def test_kl_matches_scalar_reference(rng):
    for _ in range(20):
        K = rng.integers(2, 20)
        h = rng.dirichlet(np.ones(K))
        t = np.sort(rng.random(K)) * 5 + 1
        dt = np.append(np.diff(t), np.diff(t)[-1])
        D, s = rng.random() * 5 + 1, rng.random() + 0.05
        assert depth_kl_loss(h, t, dt, D, s)[0] == pytest.approx(kl_reference(h, t, dt, D, s), rel=1e-12)


def test_kl_large_sigma_limit():
    h = np.array([0.1, 0.6, 0.3])
    t = np.array([1.0, 2.0, 3.0])
    dt = np.ones(3)
    loss, _ = depth_kl_loss(h, t, dt, 2.0, 1e6)
    assert loss == pytest.approx(-np.sum(np.log(h + LOG_EPS)), rel=1e-9)


def test_kl_rejects_unnormalized():
    with pytest.raises(ValueError, match="normalized"):
        depth_kl_loss([0.5, 0.4], [1.0, 2.0], [1.0, 1.0], 1.0, 0.5)


def test_kl_batch_is_mean():
    h = np.array([[0.8, 0.2], [0.3, 0.7]])
    t = np.array([[1.0, 2.0], [1.0, 2.0]])
    dt = np.ones((2, 2))
    D = np.array([1.0, 2.0])
    each = [depth_kl_loss(h[i], t[i], dt[i], D[i], 0.5)[0] for i in range(2)]
    assert depth_kl_loss(h, t, dt, D, 0.5)[0] == pytest.approx(np.mean(each))


def test_kl_cotangent_is_partial_derivative(rng):
    h = rng.dirichlet(np.ones(6))[None]
    t = np.linspace(1, 3, 6)[None]
    dt = np.full((1, 6), 0.4)
    _, g = depth_kl_loss(h, t, dt, 2.1, 0.3)
    for k in range(6):
        e = np.zeros_like(h)
        e[0, k] = 1e-7
        # partial derivative of the formula, normalization check bypassed by reference
        fd = (kl_reference((h + e)[0], t[0], dt[0], 2.1, 0.3) -
              kl_reference((h - e)[0], t[0], dt[0], 2.1, 0.3)) / 2e-7
        assert g[0, k] == pytest.approx(fd, rel=1e-6)


def simplex_grid(n_bins, steps):
    for c in itertools.product(range(steps + 1), repeat=n_bins - 1):
        if sum(c) <= steps:
            yield np.array([*c, steps - sum(c)], dtype=float) / steps


def test_kl_minimizer_over_simplex():
    # Cross-entropy -sum a_k log h_k over the simplex is minimized at h = a / sum(a)
    # (Gibbs). Brute-force over a 3-bin grid must find that point.
    t = np.array([1.0, 1.5, 2.0])
    dt = np.array([0.5, 0.5, 0.5])
    D, s = 1.4, 0.4
    a = np.exp(-((t - D) ** 2) / (2 * s * s)) * dt
    best, best_h = np.inf, None
    for h in simplex_grid(3, 200):
        v = kl_reference(h, t, dt, D, s)
        if v < best:
            best, best_h = v, h
    assert np.abs(best_h - a / a.sum()).max() <= 1 / 200 + 1e-12
    assert best == pytest.approx(depth_kl_loss(a / a.sum(), t, dt, D, s)[0], abs=1e-3)
    # and the argmax bin of w*dt carries the most mass
    assert np.argmax(best_h) == np.argmax(a)


def test_kl_mass_transfer_toward_target_bin():
    # Moving mass from bin j to the bin nearest D does not raise the loss
    # while h_i / h_j stays below (w_i dt_i) / (w_j dt_j).
    t = np.array([1.0, 2.0, 3.0, 4.0])
    dt = np.ones(4)
    D, s = 2.0, 0.8
    a = np.exp(-((t - D) ** 2) / (2 * s * s)) * dt
    i = 1
    for j in (0, 2, 3):
        for h0 in simplex_grid(4, 12):
            if h0[j] == 0:
                continue
            prev = kl_reference(h0, t, dt, D, s)
            for m in np.linspace(0, h0[j], 25)[1:]:
                h = h0.copy()
                h[i] += m
                h[j] -= m
                if h[i] * a[j] > a[i] * h[j]:
                    break
                cur = kl_reference(h, t, dt, D, s)
                assert cur <= prev + 1e-12
                prev = cur


def test_kl_sharper_target_rewards_concentration():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    dt = np.ones(4)
    h = np.array([0.1, 0.7, 0.15, 0.05])
    losses = [depth_kl_loss(h, t, dt, 2.0, s)[0] for s in (2.0, 1.0, 0.5, 0.25)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_mse_examples():
    assert depth_mse_loss([1.0], 1.0)[0] == 0.0
    loss, g = depth_mse_loss([1.2], 1.0)
    assert loss == pytest.approx(0.04)
    assert g[0] == pytest.approx(0.4)
    loss, g = depth_mse_loss([1.0, 3.0], [2.0, 2.0])
    assert loss == 1.0
    np.testing.assert_allclose(g, [-1.0, 1.0])


def test_total_loss_examples():
    assert total_loss(0.5, 0.2, 0.0).total == 0.5
    assert total_loss(0.5, 0.2, 0.1).total == pytest.approx(0.52, abs=1e-12)
    r = total_loss(0.5, 0.2, 0.1, "none", 10, 4)
    assert r.depth_loss == 0.0 and r.total == 0.5 and r.n_depth_rays == 0
    with pytest.raises(ValueError):
        total_loss(0.5, 0.2, -0.1)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 100))
def test_total_linear_in_lambda(c, d, lam):
    r = total_loss(c, d, lam, "mse")
    assert abs(r.total - total_loss(c, d, 0.0, "mse").total - lam * d) <= 1e-12 * max(1, r.total)


def test_depth_target_validation():
    DepthTarget(1.0, 0.01)
    with pytest.raises(ValueError):
        DepthTarget(0.0, 0.1)
    with pytest.raises(ValueError):
        DepthTarget(1.0, 0.0)
