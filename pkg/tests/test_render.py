import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsvox.camera import Ray
from dsvox.field import VoxelField
from dsvox.render import (
    RaySamples,
    composite,
    render_backward,
    render_ray,
    render_rays,
    stratified_samples,
    termination_variance_stats,
)

BOX = ((-1.0, -1.0, -12.0), (1.0, 1.0, 1.0))


def axis_ray(near=0.5, far=10.0):
    return Ray(np.zeros(3), np.array([0.0, 0.0, -1.0]), near, far)


def field_with(res=(3, 3, 8), raw_sigma=None, raw_rgb=None, rng=None):
    f = VoxelField(res, *BOX)
    if rng is not None:
        f.params[:] = rng.normal(size=f.params.size)
    if raw_sigma is not None:
        f.raw_sigma[:] = raw_sigma
    if raw_rgb is not None:
        f.raw_rgb[:] = raw_rgb
    return f


def test_midpoint_samples():
    s = stratified_samples(0.0, 1.0, 4)
    np.testing.assert_allclose(s.t[0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(s.delta[0], [0.25] * 4)


def test_stratified_in_bins_and_seeded():
    rng = np.random.default_rng(7)
    s = stratified_samples(np.full(50, 2.0), np.full(50, 6.0), 16, rng)
    edges = 2.0 + np.arange(17) * 0.25
    assert np.all(s.t >= edges[:-1]) and np.all(s.t <= edges[1:])
    assert np.all(np.diff(s.t, axis=1) > 0)
    again = stratified_samples(np.full(50, 2.0), np.full(50, 6.0), 16, np.random.default_rng(7))
    np.testing.assert_array_equal(s.t, again.t)


def test_too_few_samples():
    with pytest.raises(ValueError):
        stratified_samples(1.0, 2.0, 1)


def test_zero_density_hits_wall():
    f = field_with(raw_sigma=-1e4, raw_rgb=np.array([2.0, -1.0, 0.0]))
    r = render_ray(f, axis_ray(), stratified_samples(0.5, 10.0, 32))
    expected_h = np.zeros(32)
    expected_h[-1] = 1.0
    np.testing.assert_allclose(r.weights[0], expected_h, atol=1e-12)
    np.testing.assert_allclose(r.color[0], r.field_sample.rgb[0, -1], atol=1e-12)
    assert r.depth_mean[0] == pytest.approx(r.samples.t[0, -1])
    assert r.depth_var[0] == pytest.approx(0.0, abs=1e-9)


def test_alpha_half_splits_mass():
    sigma = np.array([[0.0, np.log(2.0), 0.0, 0.0]])
    trans, h = composite(sigma, np.ones((1, 4)))
    np.testing.assert_allclose(h[0], [0.0, 0.5, 0.0, 0.5])
    np.testing.assert_allclose(trans[0], [1.0, 1.0, 0.5, 0.5])


def test_composite_extreme_density_is_finite():
    sigma = np.full((2, 8), 1e6)
    trans, h = composite(sigma, np.ones((2, 8)))
    assert np.isfinite(h).all() and np.isfinite(trans).all()
    np.testing.assert_allclose(h.sum(axis=1), 1.0)


def test_variance_stats():
    assert termination_variance_stats(np.zeros(10))["mean"] == 0.0
    # two-point distribution on t=(1,2) with mass (0.5,0.5): var = 0.25
    h = np.array([0.5, 0.5])
    t = np.array([1.0, 2.0])
    var = np.sum(h * t * t) - np.sum(h * t) ** 2
    assert termination_variance_stats([var])["mean"] == 0.25
    with pytest.raises(ValueError):
        termination_variance_stats([])


def test_variance_stats_accepts_renders(rng):
    f = field_with(rng=rng)
    r = render_rays(f, np.zeros((3, 3)), np.tile([0, 0, -1.0], (3, 1)),
                    stratified_samples(np.full(3, 0.5), np.full(3, 10.0), 16))
    st_ = termination_variance_stats([r, r])
    assert st_["mean"] == pytest.approx(r.depth_var.mean())
    assert st_["q10"] <= st_["q50"] <= st_["q90"]


def test_two_point_render_variance():
    # craft: alpha=1 reached half at t1 and half at wall t2
    t = np.array([[1.0, 2.0]])
    sigma = np.array([[np.log(2.0), 0.0]])
    _, h = composite(sigma, np.ones((1, 2)))
    mean = np.sum(h * t)
    assert np.sum(h * t * t) - mean ** 2 == pytest.approx(0.25)


@given(st.integers(0, 2**31 - 1), st.integers(2, 64), st.floats(0.1, 30.0))
def test_distribution_properties(seed, K, scale):
    rng = np.random.default_rng(seed)
    f = field_with(rng=rng)
    f.raw_sigma[:] *= scale
    d = rng.normal(size=(4, 3)) * 0.2 + [0, 0, -1]
    s = stratified_samples(np.full(4, 0.5), np.full(4, 12.0), K, rng)
    r = render_rays(f, rng.normal(size=(4, 3)) * 0.3, d, s)
    assert np.all(np.abs(r.weights.sum(axis=1) - 1) <= 1e-9)
    assert np.all(r.weights >= 0)
    assert np.all(r.trans[:, 0] == 1.0)
    assert np.all(np.diff(r.trans, axis=1) <= 0)
    assert np.all((r.trans >= 0) & (r.trans <= 1))
    assert np.all(r.depth_var >= -1e-12)


def test_occlusion_never_adds_mass_behind(rng):
    for _ in range(30):
        K = 24
        sigma = rng.random((1, K)) * 2
        delta = np.full((1, K), 0.3)
        t = np.cumsum(delta, axis=1)
        cut = rng.integers(1, K - 1)
        _, h0 = composite(sigma.copy(), delta)
        more = sigma.copy()
        more[0, :cut] += rng.random(cut) * 3
        _, h1 = composite(more, delta)
        assert h1[0, cut:].sum() <= h0[0, cut:].sum() + 1e-15


def test_quadrature_converges_to_closed_form():
    # constant sigma=1 on [0, 10]: E[t] = 1 - e^{-10} (exponential part plus wall)
    exact = 1.0 - np.exp(-10.0)
    errs = []
    for K in (256, 512, 1024, 2048, 4096):
        s = stratified_samples(0.0, 10.0, K)
        _, h = composite(np.ones((1, K)), s.delta)
        errs.append(abs(np.sum(h * s.t) - exact))
    assert errs[3] < 2e-3
    for a, b in zip(errs, errs[1:]):
        assert a / b >= 1.8


def _objective(f, origins, dirs, samples, dc, dd, dh):
    r = render_rays(f, origins, dirs, samples)
    return np.sum(dc * r.color) + np.sum(dd * r.depth_mean) + np.sum(dh * r.weights)


def _fd(f, fn, idx, h=1e-5):
    out = np.zeros(len(idx))
    for n, j in enumerate(idx):
        p = f.copy()
        p.params[j] += h
        m = f.copy()
        m.params[j] -= h
        out[n] = (fn(p) - fn(m)) / (2 * h)
    return out


def test_no_cotangent_no_gradient(rng):
    f = field_with(rng=rng)
    r = render_ray(f, axis_ray(), stratified_samples(0.5, 10.0, 8))
    assert not render_backward(r).any()


def test_backward_d_h_shape_checked(rng):
    f = field_with(rng=rng)
    r = render_ray(f, axis_ray(), stratified_samples(0.5, 10.0, 8))
    with pytest.raises(ValueError, match="d_h"):
        render_backward(r, d_h=np.zeros(7))


def test_backward_accumulates_into_buffer(rng):
    f = field_with(rng=rng)
    r = render_ray(f, axis_ray(), stratified_samples(0.5, 10.0, 8))
    fresh = render_backward(r, d_color=[1.0, 0.0, 0.0])
    buf = np.ones_like(f.params)
    render_backward(r, buf, d_color=[1.0, 0.0, 0.0])
    np.testing.assert_allclose(buf, 1.0 + fresh)


def test_zero_density_color_gradient_wrt_sigma():
    f = field_with(raw_sigma=-30.0, raw_rgb=0.0)
    f.raw_rgb[:, 0] = np.linspace(-2, 2, f.n_cells)
    samples = stratified_samples(0.5, 10.0, 16)
    fn = lambda g: render_ray(g, axis_ray(), samples).color[0, 0]  # noqa: E731
    analytic = render_backward(render_ray(f, axis_ray(), samples), d_color=[1.0, 0, 0])
    idx = np.arange(f.n_cells)
    fd = _fd(f, fn, idx, h=1e-3)
    np.testing.assert_allclose(analytic[idx], fd, rtol=1e-4, atol=1e-12)


def test_backward_matches_finite_differences(rng):
    # 50 random fields/rays, full JVP against central differences
    worst = 0.0
    for _ in range(50):
        f = field_with(res=(3, 3, 4), rng=rng)
        B, K = 2, 12
        origins = rng.normal(size=(B, 3)) * 0.2
        dirs = rng.normal(size=(B, 3)) * 0.1 + [0, 0, -1]
        samples = stratified_samples(np.full(B, 0.5), np.full(B, 11.0), K, rng)
        dc, dd, dh = rng.normal(size=(B, 3)), rng.normal(size=B), rng.normal(size=(B, K))
        r = render_rays(f, origins, dirs, samples)
        analytic = render_backward(r, d_color=dc, d_depth=dd, d_h=dh)
        v = rng.normal(size=f.params.size)
        fn = lambda g: _objective(g, origins, dirs, samples, dc, dd, dh)  # noqa: E731
        h = 1e-5
        p, m = f.copy(), f.copy()
        p.params += h * v
        m.params -= h * v
        fd = (fn(p) - fn(m)) / (2 * h)
        worst = max(worst, abs(analytic @ v - fd) / max(abs(fd), 1e-8))
    assert worst < 1e-4


def test_render_ray_matches_batched(rng):
    f = field_with(rng=rng)
    s = stratified_samples(0.5, 10.0, 16)
    ray = axis_ray()
    a = render_ray(f, ray, s)
    b = render_rays(f, ray.origin[None], ray.direction[None], RaySamples(s.t, s.delta))
    np.testing.assert_array_equal(a.color, b.color)
