import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsvox.field import (
    INIT_RAW_SIGMA,
    OUTSIDE_RGB,
    VoxelField,
    accumulate_field_grad,
    field_grad,
    load_checkpoint,
    logistic,
    sample_field,
    save_checkpoint,
    softplus,
)


def random_field(rng, res=(5, 4, 6), scale=1.0):
    f = VoxelField(res, (-1.0, -2.0, 0.5), (1.5, 1.0, 3.0))
    f.params[:] = rng.normal(size=f.params.size) * scale
    return f


def interior_points(rng, f, n):
    return f.bbox_min + rng.random((n, 3)) * (f.bbox_max - f.bbox_min)


def test_initialization():
    f = VoxelField((3, 3, 3), (0, 0, 0), (1, 1, 1))
    assert np.all(f.raw_sigma == INIT_RAW_SIGMA)
    assert np.all(f.raw_rgb == 0)
    s = sample_field(f, [[0.3, 0.4, 0.5]])
    assert s.sigma[0] == pytest.approx(np.log1p(np.exp(-2.0)), abs=1e-15)
    np.testing.assert_allclose(s.rgb[0], 0.5)


def test_constant_zero_field_gives_ln2():
    f = VoxelField((4, 4, 4), (0, 0, 0), (1, 1, 1))
    f.raw_sigma[:] = 0.0
    s = sample_field(f, np.random.default_rng(0).random((50, 3)))
    np.testing.assert_allclose(s.sigma, np.log(2.0), atol=1e-15)


def test_node_query_is_one_hot():
    f = VoxelField((4, 5, 6), (0, 0, 0), (3, 4, 5))
    s = sample_field(f, [f.node_position(1, 2, 3)])
    w = s.weight[0]
    assert np.count_nonzero(w) == 1
    assert s.index[0][np.argmax(w)] == f.cell_index(1, 2, 3)


def test_edge_midpoint():
    # raw 0 and 1 at the two ends of an x-edge; softplus(0.5) = 0.974076984...
    f = VoxelField((2, 2, 2), (0, 0, 0), (1, 1, 1))
    f.raw_sigma[:] = 0.0
    f.raw_sigma[f.cell_index(1, 0, 0)] = 1.0
    s = sample_field(f, [[0.5, 0.0, 0.0]])
    assert s.sigma[0] == pytest.approx(np.log1p(np.exp(0.5)), abs=1e-14)
    assert s.sigma[0] == pytest.approx(0.9741, abs=5e-5)


def test_outside_bbox():
    f = random_field(np.random.default_rng(0))
    s = sample_field(f, [[10.0, 0, 1], [0, -2.0001, 1]])
    assert np.all(s.sigma == 0.0)
    assert np.all(s.rgb == OUTSIDE_RGB)
    assert not s.inside.any()
    assert np.all(s.weight == 0)
    g = field_grad(s, np.ones(2), np.ones((2, 3)))
    assert not g.any()


def test_weights_partition_of_unity(rng):
    f = random_field(rng)
    s = sample_field(f, interior_points(rng, f, 500))
    assert np.all(s.weight >= 0)
    np.testing.assert_allclose(s.weight.sum(axis=1), 1.0, atol=1e-12)


def test_constant_grid_interpolates_exactly(rng):
    f = VoxelField((7, 3, 5), (-1, -1, -1), (2, 3, 4))
    f.params[:] = 0.7318
    x = interior_points(rng, f, 300)
    s = sample_field(f, x)
    assert np.abs(s.raw_sigma - 0.7318).max() < 1e-12


def test_batch_shapes_preserved(rng):
    f = random_field(rng)
    x = interior_points(rng, f, 24).reshape(2, 3, 4, 3)
    s = sample_field(f, x)
    assert s.sigma.shape == (2, 3, 4) and s.rgb.shape == (2, 3, 4, 3)
    assert s.index.shape == (2, 3, 4, 8)


def test_activation_ranges(rng):
    f = random_field(rng, scale=5.0)
    s = sample_field(f, interior_points(rng, f, 500))
    assert np.all(s.sigma >= 0)
    assert np.all((s.rgb > 0) & (s.rgb < 1))


def test_sigma_monotone_in_raw(rng):
    f = random_field(rng)
    x = interior_points(rng, f, 200)
    before = sample_field(f, x).sigma
    for j in rng.integers(0, f.n_cells, 20):
        g = f.copy()
        g.raw_sigma[j] += 0.5
        assert np.all(sample_field(g, x).sigma >= before)


def test_zero_cotangent_leaves_accumulator(rng):
    f = random_field(rng)
    s = sample_field(f, interior_points(rng, f, 5))
    acc = rng.normal(size=f.params.size)
    before = acc.copy()
    accumulate_field_grad(acc, s, 0.0, 0.0)
    np.testing.assert_array_equal(acc, before)


def test_one_hot_sigma_gradient_is_half():
    f = VoxelField((3, 3, 3), (0, 0, 0), (2, 2, 2))
    f.raw_sigma[:] = 0.0
    s = sample_field(f, [f.node_position(1, 1, 1)])
    acc = f.zero_grad()
    accumulate_field_grad(acc, s, 1.0, 0.0)
    j = f.cell_index(1, 1, 1)
    assert acc[j] == 0.5
    assert np.count_nonzero(acc) == 1


def test_accumulator_shape_mismatch(rng):
    f = random_field(rng)
    s = sample_field(f, interior_points(rng, f, 2))
    with pytest.raises(ValueError):
        accumulate_field_grad(np.zeros(7), s, 1.0, 0.0)


def _fd_sample_grad(f, x, out, h=1e-4):
    """Central differences of one field output w.r.t. every raw parameter."""
    g = np.zeros_like(f.params)
    for j in range(f.params.size):
        p = f.copy()
        p.params[j] += h
        m = f.copy()
        m.params[j] -= h
        g[j] = (out(sample_field(p, x)) - out(sample_field(m, x))) / (2 * h)
    return g


def test_point_gradients_match_finite_differences(rng):
    # 100 random (field, point) pairs; checks d sigma/d raw and d c/d raw separately
    for trial in range(100):
        f = random_field(rng, res=(3, 3, 3))
        x = interior_points(rng, f, 1)
        s = sample_field(f, x)
        ch = trial % 4
        if ch == 0:
            analytic = field_grad(s, 1.0, 0.0)
            out = lambda fs: fs.sigma[0]  # noqa: E731
        else:
            d_rgb = np.zeros(3)
            d_rgb[ch - 1] = 1.0
            analytic = field_grad(s, 0.0, d_rgb)
            out = lambda fs, c=ch - 1: fs.rgb[0, c]  # noqa: E731
        fd = _fd_sample_grad(f, x, out)
        err = np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1e-12)
        assert err < 1e-5, (trial, err)


def test_random_cotangent_gradient_matches_fd(rng):
    f = random_field(rng, res=(3, 4, 3))
    x = interior_points(rng, f, 6)
    ds, dc = rng.normal(size=6), rng.normal(size=(6, 3))
    out = lambda fs: np.sum(ds * fs.sigma) + np.sum(dc * fs.rgb)  # noqa: E731
    analytic = accumulate_field_grad(f.zero_grad(), sample_field(f, x), ds, dc)
    fd = _fd_sample_grad(f, x, out)
    assert np.abs(analytic - fd).max() / np.abs(fd).max() < 1e-6


def test_activations():
    assert softplus(0.0) == pytest.approx(np.log(2))
    assert softplus(800.0) == 800.0
    assert logistic(0.0) == 0.5
    assert logistic(-800.0) == 0.0 and logistic(800.0) == 1.0


def test_checkpoint_layout_and_round_trip(tmp_path, rng):
    f = random_field(rng, res=(3, 2, 4))
    path = tmp_path / "f.dsvf"
    save_checkpoint(f, path)
    data = path.read_bytes()
    assert data[:4] == b"DSVF"
    assert np.frombuffer(data[4:20], "<u4").tolist() == [1, 3, 2, 4]
    np.testing.assert_array_equal(np.frombuffer(data[20:68], "<f8"), [*f.bbox_min, *f.bbox_max])
    n = f.n_cells
    assert len(data) == 68 + 4 * 4 * n
    body = np.frombuffer(data[68:], "<f4")
    np.testing.assert_array_equal(body[:n], f.raw_sigma.astype(np.float32))
    np.testing.assert_array_equal(body[n:].reshape(n, 3), f.raw_rgb.astype(np.float32))
    g = load_checkpoint(path)
    assert g.resolution == f.resolution
    np.testing.assert_array_equal(g.params, f.params.astype(np.float32))
    save_checkpoint(g, tmp_path / "g.dsvf")
    assert (tmp_path / "g.dsvf").read_bytes() == data


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.dsvf"
    p.write_bytes(b"NOPE" + bytes(80))
    with pytest.raises(ValueError, match="DSVF"):
        load_checkpoint(p)
    f = VoxelField((2, 2, 2), (0, 0, 0), (1, 1, 1))
    save_checkpoint(f, p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(ValueError, match="expected"):
        load_checkpoint(p)


def test_invalid_construction():
    with pytest.raises(ValueError):
        VoxelField((1, 3, 3), (0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError):
        VoxelField((2, 2, 2), (0, 0, 0), (1, 0, 1))
    with pytest.raises(ValueError):
        VoxelField((2, 2, 2), (0, 0, 0), (1, 1, 1), np.zeros(5))


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_any_point_gives_valid_sample(p):
    f = VoxelField((4, 4, 4), (-1, -1, -1), (1, 1, 1))
    f.params[:] = np.linspace(-3, 3, f.params.size)
    s = sample_field(f, [p])
    assert np.isfinite(s.sigma).all() and s.sigma[0] >= 0
    if s.inside[0]:
        assert s.weight[0].sum() == pytest.approx(1.0, abs=1e-12)
    else:
        assert s.sigma[0] == 0.0
