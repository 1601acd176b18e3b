import numpy as np
import pytest

from amplab.ensembles import (
    EnsembleSpec,
    SignalSpec,
    load_matrix,
    moment_check,
    sample_ginibre,
    sample_haar_orthogonal,
    sample_noise,
    sample_signal,
    sample_wigner,
    save_matrix,
)
from amplab.exceptions import DimensionError, SpecError
from amplab.rng import RngStream


def test_same_stream_is_bitwise_reproducible():
    spec = EnsembleSpec("wigner_iid", 30, 30, "uniform")
    a = sample_wigner(spec, RngStream(123, 5))
    b = sample_wigner(spec, RngStream(123, 5))
    assert np.array_equal(a, b)


def test_distinct_streams_differ():
    spec = EnsembleSpec("goe", 20, 20)
    a = sample_wigner(spec, RngStream(123, 0))
    b = sample_wigner(spec, RngStream(123, 1))
    assert not np.array_equal(a, b)


def test_nonsquare_symmetric_spec_rejected():
    with pytest.raises(DimensionError):
        EnsembleSpec("goe", 3, 4)


def test_goe_scalar_entry_variance_is_two_over_n():
    # n = 1: the single diagonal entry has variance 2
    draws = np.array([
        sample_wigner(EnsembleSpec("goe", 1, 1), RngStream(9, k))[0, 0]
        for k in range(4000)
    ])
    var = draws.var()
    se = np.sqrt(2.0) * 2.0 / np.sqrt(len(draws) - 1)  # sd of the variance of N(0,2)
    assert abs(var - 2.0) < 3 * se


def test_wigner_rademacher_two_by_two():
    w = sample_wigner(EnsembleSpec("wigner_iid", 2, 2, "rademacher"), RngStream(3))
    assert np.array_equal(w, w.T)
    assert set(np.round(np.abs(w).ravel(), 12)) == {round(1 / np.sqrt(2), 12)}


def test_goe_offdiagonal_second_moment():
    n = 500
    w = sample_wigner(EnsembleSpec("goe", n, n), RngStream(17))
    off = w[~np.eye(n, dtype=bool)]
    # each squared entry has mean 1/n and variance 2/n^2
    se = np.sqrt(2.0 / n**2 / off.size)
    assert abs((off**2).mean() - 1.0 / n) < 3 * se


def test_ginibre_scalar_is_standard_normal():
    draws = np.array([
        sample_ginibre(EnsembleSpec("ginibre_iid", 1, 1), RngStream(11, k))[0, 0]
        for k in range(3000)
    ])
    assert abs(draws.var() - 1.0) < 3 * np.sqrt(2.0 / len(draws))
    assert abs(draws.mean()) < 3 / np.sqrt(len(draws))


def test_ginibre_rademacher_entries():
    g = sample_ginibre(EnsembleSpec("ginibre_iid", 4, 6, "rademacher"), RngStream(5))
    assert set(np.abs(g).ravel()) == {0.5}


def test_ginibre_column_norms_near_one():
    g = sample_ginibre(EnsembleSpec("ginibre_iid", 400, 300), RngStream(23))
    mean_sq = (g**2).sum(axis=0).mean()
    assert abs(mean_sq - 1.0) < 0.05


def test_haar_dim_one_is_sign():
    vals = {sample_haar_orthogonal(1, RngStream(1, k))[0, 0] for k in range(20)}
    assert vals <= {-1.0, 1.0}
    assert len(vals) == 2


def test_haar_orthogonality_and_det():
    for k in range(5):
        q = sample_haar_orthogonal(3, RngStream(2, k))
        assert np.abs(q.T @ q - np.eye(3)).max() <= 1e-10
        assert abs(abs(np.linalg.det(q)) - 1.0) <= 1e-8


def test_haar_first_coordinate_centered():
    dim, reps = 50, 10_000
    vals = np.array([
        sample_haar_orthogonal(dim, RngStream(31, k))[0, 0] for k in range(reps)
    ])
    se = 1.0 / np.sqrt(dim) / np.sqrt(reps)
    assert abs(vals.mean()) < 3 * se


def test_zero_signal():
    s = sample_signal(SignalSpec(kind="zero", dims=7), RngStream(0))
    assert np.array_equal(s.vector, np.zeros(7))


def test_low_rank_signal_factors():
    spec = SignalSpec(kind="low_rank", dims=100 * 150, M=100, N=150, rank=20)
    s = sample_signal(spec, RngStream(77))
    sv = s.singular_values
    assert np.count_nonzero(sv) == 20
    assert sv.size == 100
    assert np.all(sv <= np.sqrt(150)) and np.all(sv >= 0)
    # reconstruction has exactly those singular values
    from amplab.vecmat import mat

    d = np.linalg.svd(mat(s.vector, 100, 150), compute_uv=False)
    assert np.allclose(np.sort(d)[::-1][:20], np.sort(sv[sv > 0])[::-1], atol=1e-10)
    assert np.all(d[20:] < 1e-10)


def test_sparse_signal_support_count():
    n, density = 10_000, 0.1
    s = sample_signal(SignalSpec(kind="sparse", dims=n, density=density), RngStream(13))
    count = np.count_nonzero(s.vector)
    assert abs(count - n * density) < 3 * np.sqrt(n * density * (1 - density))


def test_smooth_image_bounded():
    spec = SignalSpec(kind="smooth_image", dims=40 * 30, M=40, N=30)
    s = sample_signal(spec, RngStream(4))
    assert np.abs(s.vector).max() <= 1.0


def test_rank_above_min_dim_rejected():
    with pytest.raises(SpecError):
        SignalSpec(kind="low_rank", dims=12, M=3, N=4, rank=5)


def test_moment_check_rademacher_exact():
    g = sample_ginibre(EnsembleSpec("ginibre_iid", 50, 50, "rademacher"), RngStream(3))
    report = moment_check(g, [2, 4, 6])
    for k, val in report.items():
        assert val == pytest.approx(1.0, abs=1e-12)


def test_moment_check_goe_and_gaussian():
    n = 300
    w = sample_wigner(EnsembleSpec("goe", n, n), RngStream(19))
    r2 = moment_check(w, [2], exclude_diagonal=True)[2]
    count = n * n - n
    assert abs(r2 - 1.0) < 3 * np.sqrt(2.0 / count)
    g = sample_ginibre(EnsembleSpec("ginibre_iid", 200, 200), RngStream(21))
    r4 = moment_check(g, [4])[4]
    assert abs(r4 - 3.0) < 3 * np.sqrt(96.0 / g.size)


@pytest.mark.parametrize("dist", ["gaussian", "rademacher", "uniform"])
def test_scaled_moments_bounded_across_sizes(dist):
    for n in (50, 100, 200, 400):
        w = sample_wigner(EnsembleSpec("wigner_iid", n, n, dist), RngStream(29, n))
        report = moment_check(w, [2, 3, 4], exclude_diagonal=True)
        assert all(v < 5.0 for v in report.values())
        g = sample_ginibre(EnsembleSpec("ginibre_iid", n, n, dist), RngStream(31, n))
        assert all(v < 5.0 for v in moment_check(g, [2, 3, 4]).values())


def test_noise_scaling():
    e = sample_noise(20_000, 0.05, RngStream(8))
    assert abs(e.std() - 0.05) < 3 * 0.05 / np.sqrt(2 * len(e))


def test_matrix_io_roundtrip(tmp_path):
    a = RngStream(55).generator().standard_normal((7, 3))
    path = tmp_path / "mat.txt"
    save_matrix(path, a)
    b = load_matrix(path)
    assert np.array_equal(a, b)
    v = RngStream(56).generator().standard_normal(9)
    save_matrix(path, v.reshape(-1, 1))
    assert np.array_equal(load_matrix(path).ravel(), v)
