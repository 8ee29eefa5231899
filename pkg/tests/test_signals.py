import json

import numpy as np
import pytest

from nnetm.signals import generate_sinusoid_batch, load_batch_csv, n_grid_steps, save_batch_csv


def test_shapes_and_grid():
    b = generate_sinusoid_batch(4, 3, horizon=2.0, step=0.01, seed=1)
    assert b.values.shape == (4, 3, 201)
    assert b.n_steps == 200
    assert b.times[-1] == pytest.approx(2.0)
    assert b.second_derivatives.shape == b.values.shape


def test_parameter_ranges_and_rate_bound():
    b = generate_sinusoid_batch(50, 5, horizon=1.0, seed=2)
    assert np.all((b.offsets >= 1) & (b.offsets <= 5))
    assert np.all((b.frequencies >= 0) & (b.frequencies <= 1))
    assert np.max(np.abs(b.derivatives)) <= b.rate_bound + 1e-15
    np.testing.assert_allclose(b.values[:, :, 0], b.offsets)


def test_analytic_derivative_matches_difference_quotient():
    b = generate_sinusoid_batch(2, 2, horizon=1.0, step=1e-4, seed=3)
    fd = (b.values[..., 2:] - b.values[..., :-2]) / (2 * b.step)
    np.testing.assert_allclose(fd, b.derivatives[..., 1:-1], atol=1e-7)
    fd2 = (b.derivatives[..., 2:] - b.derivatives[..., :-2]) / (2 * b.step)
    np.testing.assert_allclose(fd2, b.second_derivatives[..., 1:-1], atol=1e-7)


def test_seed_reproducible():
    a = generate_sinusoid_batch(3, 2, horizon=0.5, seed=11)
    b = generate_sinusoid_batch(3, 2, horizon=0.5, seed=11)
    c = generate_sinusoid_batch(3, 2, horizon=0.5, seed=12)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_grid_validation():
    assert n_grid_steps(10.0, 1e-3) == 10_000
    with pytest.raises(ValueError):
        n_grid_steps(1.0, 0.3)
    with pytest.raises(ValueError):
        n_grid_steps(1.0, 0.0)
    with pytest.raises(ValueError):
        generate_sinusoid_batch(0, 2)
    with pytest.raises(ValueError):
        generate_sinusoid_batch(1, 2, freq_range=(1.0, 0.0))


def test_csv_round_trip(tmp_path):
    b = generate_sinusoid_batch(3, 2, horizon=0.2, step=1e-3, seed=4)
    paths = save_batch_csv(b, tmp_path)
    assert [p.name for p in paths] == ["seq_000.csv", "seq_001.csv", "seq_002.csv"]
    header = paths[0].read_text().splitlines()[0]
    assert header == "t,r_1,r_2,dr_1,dr_2"
    meta = json.loads((tmp_path / "batch.json").read_text())
    assert meta["batch_size"] == 3
    c = load_batch_csv(tmp_path)
    np.testing.assert_array_equal(c.values, b.values)
    np.testing.assert_array_equal(c.derivatives, b.derivatives)
    np.testing.assert_allclose(c.second_derivatives, b.second_derivatives, atol=1e-15)
    assert c.rate_bound == b.rate_bound
    assert c.step == b.step


def test_load_without_meta(tmp_path):
    b = generate_sinusoid_batch(2, 2, horizon=0.1, step=1e-3, seed=4)
    save_batch_csv(b, tmp_path)
    (tmp_path / "batch.json").unlink()
    c = load_batch_csv(tmp_path)
    np.testing.assert_array_equal(c.values, b.values)
    assert c.rate_bound == pytest.approx(np.max(np.abs(b.derivatives)))


def test_load_empty_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_batch_csv(tmp_path)


def test_subset():
    b = generate_sinusoid_batch(5, 2, horizon=0.1, seed=0)
    s = b.subset(slice(1, 3))
    assert s.batch_size == 2
    np.testing.assert_array_equal(s.values, b.values[1:3])
    assert b.subset(4).batch_size == 1
