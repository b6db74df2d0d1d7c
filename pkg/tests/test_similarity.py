import numpy as np
import pytest

from patchsel360 import (
    DegenerateInputError,
    DistanceMetric,
    InputError,
    SpectrumError,
    eig_sym,
    pairwise_distance,
    similarity_from_distance,
    similarity_of_embeddings,
    spectral_target,
)


class TestPairwiseDistance:
    def test_euclidean_pythagorean(self):
        d = pairwise_distance(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert d[0, 1] == pytest.approx(5.0)

    def test_manhattan(self):
        d = pairwise_distance(
            np.array([[0.0, 0.0], [3.0, 4.0]]), DistanceMetric(kind="MAN")
        )
        assert d[0, 1] == pytest.approx(7.0)

    def test_properties(self):
        rng = np.random.default_rng(0)
        e = rng.standard_normal((7, 4))
        for metric in (DistanceMetric("EUC"), DistanceMetric("MAN"),
                       DistanceMetric("MAH"),
                       DistanceMetric("MAH", mah_mode="diagonal-covariance")):
            d = pairwise_distance(e, metric)
            assert np.array_equal(d, d.T)
            assert np.all(np.diag(d) == 0.0)
            assert np.all(d >= 0.0)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal((10, 5))
        for metric in (DistanceMetric("EUC"), DistanceMetric("MAN"),
                       DistanceMetric("MAH")):
            d = pairwise_distance(e, metric)
            for _ in range(50):
                i, j, k = rng.integers(0, 10, size=3)
                assert d[i, j] <= d[i, k] + d[k, j] + 1e-9

    def test_mah_matches_quadratic_form(self):
        rng = np.random.default_rng(2)
        e = rng.standard_normal((8, 3))
        lam = 0.5
        metric = DistanceMetric("MAH", mah_regularization=lam)
        d = pairwise_distance(e, metric)
        centered = e - e.mean(axis=0)
        cov = centered.T @ centered / (e.shape[0] - 1)
        inv = np.linalg.inv(cov + lam * np.eye(3))
        for i in range(8):
            for j in range(8):
                diff = e[i] - e[j]
                assert d[i, j] ** 2 == pytest.approx(diff @ inv @ diff, abs=1e-9)

    def test_mah_diagonal_on_unit_variance_equals_euc(self):
        rng = np.random.default_rng(3)
        e = rng.standard_normal((200, 4))
        e = (e - e.mean(axis=0)) / e.std(axis=0, ddof=1)
        d_euc = pairwise_distance(e, DistanceMetric("EUC"))
        d_mah = pairwise_distance(
            e, DistanceMetric("MAH", mah_regularization=0.0,
                              mah_mode="diagonal-covariance")
        )
        assert np.abs(d_euc - d_mah).max() < 1e-9

    def test_single_row_rejected(self):
        with pytest.raises(InputError):
            pairwise_distance(np.ones((1, 3)))

    def test_unknown_kind_rejected(self):
        with pytest.raises(InputError):
            DistanceMetric(kind="COS")


class TestSimilarityFromDistance:
    def test_kernel_value_at_sigma_sqrt2(self):
        sigma = 1.5
        d = np.array([[0.0, sigma * np.sqrt(2.0)], [sigma * np.sqrt(2.0), 0.0]])
        s = similarity_from_distance(d, bandwidth=sigma)
        assert s.s[0, 1] == pytest.approx(np.exp(-1.0))

    def test_unit_diagonal_and_range(self):
        rng = np.random.default_rng(4)
        d = pairwise_distance(rng.standard_normal((6, 3)))
        s = similarity_from_distance(d)
        assert np.all(np.diag(s.s) == 1.0)
        assert np.all((s.s >= 0.0) & (s.s <= 1.0))
        assert np.array_equal(s.s, s.s.T)

    def test_median_bandwidth_three_points(self):
        # Distances 1, 2, 3 -> sigma = 2, entries exp(-1/8), exp(-4/8), exp(-9/8).
        d = np.array([
            [0.0, 1.0, 2.0],
            [1.0, 0.0, 3.0],
            [2.0, 3.0, 0.0],
        ])
        s = similarity_from_distance(d)
        assert s.bandwidth == pytest.approx(2.0)
        assert s.s[0, 1] == pytest.approx(np.exp(-1.0 / 8.0))
        assert s.s[0, 2] == pytest.approx(np.exp(-4.0 / 8.0))
        assert s.s[1, 2] == pytest.approx(np.exp(-9.0 / 8.0))

    def test_all_zero_distances_degenerate(self):
        with pytest.raises(DegenerateInputError):
            similarity_from_distance(np.zeros((3, 3)))

    def test_negative_distance_rejected(self):
        d = np.array([[0.0, -1.0], [-1.0, 0.0]])
        with pytest.raises(InputError):
            similarity_from_distance(d)

    def test_nonzero_diagonal_rejected(self):
        d = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(InputError):
            similarity_from_distance(d)


class TestSpectralTarget:
    def test_identity_full_rank(self):
        t = spectral_target(np.eye(4), 4)
        assert np.abs(t.z @ t.z.T - np.eye(4)).max() < 1e-8
        assert t.discarded_energy == 0.0

    def test_diagonal_top1(self):
        t = spectral_target(np.diag([4.0, 1.0, 0.0]), 1)
        assert np.allclose(np.abs(t.z[:, 0]), [2.0, 0.0, 0.0], atol=1e-12)
        assert t.kept_eigenvalues[0] == pytest.approx(4.0)
        assert t.discarded_energy == pytest.approx(1.0)

    def test_column_norms_match_eigenvalues(self):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((6, 6))
        s = m @ m.T
        t = spectral_target(s, 3)
        for j in range(3):
            assert (t.z[:, j] ** 2).sum() == pytest.approx(
                t.kept_eigenvalues[j], abs=1e-8
            )
        assert np.all(np.diff(t.kept_eigenvalues) <= 1e-12)

    def test_discarded_energy_equals_residual(self):
        rng = np.random.default_rng(6)
        m = rng.standard_normal((6, 6))
        s = m @ m.T
        t = spectral_target(s, 2)
        values = eig_sym(s).values
        assert np.linalg.norm(t.z @ t.z.T - s) ** 2 == pytest.approx(
            (values[2:] ** 2).sum(), abs=1e-8
        )
        assert t.discarded_energy == pytest.approx((values[2:] ** 2).sum(), abs=1e-8)

    def test_beats_random_candidates(self):
        rng = np.random.default_rng(7)
        m = rng.standard_normal((6, 4))
        s = m @ m.T
        t = spectral_target(s, 2)
        best = np.linalg.norm(t.z @ t.z.T - s) ** 2
        for _ in range(100):
            x = rng.standard_normal((6, 2))
            assert best <= np.linalg.norm(x @ x.T - s) ** 2 + 1e-10

    def test_h_out_of_range(self):
        with pytest.raises(InputError):
            spectral_target(np.eye(3), 0)
        with pytest.raises(InputError):
            spectral_target(np.eye(3), 4)

    def test_negative_eigenvalue_in_window_rejected(self):
        s = np.diag([2.0, 1.0, -1.0])
        with pytest.raises(SpectrumError) as err:
            spectral_target(s, 3)
        assert err.value.available == 2

    def test_tiny_negative_clamped(self):
        s = np.diag([2.0, 1.0, -1e-14])
        t = spectral_target(s, 3)
        assert t.kept_eigenvalues[2] == 0.0

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        e = rng.standard_normal((7, 4))
        perm = rng.permutation(7)
        t = spectral_target(similarity_of_embeddings(e), 3)
        tp = spectral_target(similarity_of_embeddings(e[perm]), 3)
        assert np.allclose(tp.kept_eigenvalues, t.kept_eigenvalues, atol=1e-9)
        # Gram matrices permute consistently even when eigenvectors flip sign.
        g = t.z @ t.z.T
        gp = tp.z @ tp.z.T
        assert np.abs(gp - g[np.ix_(perm, perm)]).max() < 1e-8
