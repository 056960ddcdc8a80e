import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seriate_tn.dataset import BitDataset, gen_markov_chain, markov_chain_distribution, sample_from_distribution
from seriate_tn.errors import IsolatedVertexError, ValidationError
from seriate_tn.mi_graph import (
    EPS_EIG,
    LapSpectrum,
    connected_components,
    eigendecompose,
    empirical_pairwise_mi,
    exact_pairwise_mi,
    jacobi_eigh,
    laplacian,
    laplacian_spectrum,
    load_matrix_csv,
    load_spectrum,
    pairwise_difference_sum,
    quadratic_form,
    save_matrix_csv,
    save_spectrum,
)


def ds(*rows):
    return BitDataset(np.array([[int(c) for c in r] for r in rows]))


def random_weights(rng, n, density=1.0):
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    return W + W.T


def binary_mi_from_correlation(r):
    """MI of two fair bits with correlation r (closed form)."""
    return sum(q * math.log(2 * q) for q in ((1 + r) / 2, (1 - r) / 2) if q > 0)


class TestEmpiricalMI:
    def test_perfect_correlation(self):
        assert empirical_pairwise_mi(ds("00", "11"))[0, 1] == pytest.approx(math.log(2), abs=1e-15)

    def test_independent(self):
        assert empirical_pairwise_mi(ds("00", "01", "10", "11"))[0, 1] == pytest.approx(0.0, abs=1e-15)

    def test_hand_example(self):
        expected = 0.5 * math.log(4 / 3) + 0.25 * math.log(2) + 0.25 * math.log(2 / 3)
        W = empirical_pairwise_mi(ds("00", "00", "11", "10"))
        assert W[0, 1] == pytest.approx(expected, abs=1e-12)
        assert W[0, 1] == pytest.approx(0.2158, abs=1e-4)

    def test_constant_column(self):
        W = empirical_pairwise_mi(ds("010", "110", "011"))
        assert W[0, 1] == 0 and W[1, 2] == 0

    @settings(max_examples=40)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 30), st.integers(2, 6)), elements=st.integers(0, 1)))
    def test_symmetric_nonnegative(self, X):
        W = empirical_pairwise_mi(BitDataset(X))
        np.testing.assert_array_equal(W, W.T)
        assert (W >= 0).all() and (np.diag(W) == 0).all()
        assert (W <= math.log(2) + 1e-12).all()

    def test_matches_exact_on_empirical_law(self):
        # the plug-in estimate is the exact MI of the empirical distribution
        data = gen_markov_chain(5, 0.3, 200, seed=1)
        p = np.zeros(32)
        idx = data.samples @ (1 << np.arange(4, -1, -1))
        np.add.at(p, idx, 1 / data.T)
        np.testing.assert_allclose(empirical_pairwise_mi(data), exact_pairwise_mi(p), atol=1e-12)


class TestExactMI:
    def test_uniform(self):
        np.testing.assert_allclose(exact_pairwise_mi(np.full(16, 1 / 16)), 0, atol=1e-15)

    def test_ghz(self):
        p = np.zeros(2**5)
        p[0] = p[-1] = 0.5
        W = exact_pairwise_mi(p)
        off = ~np.eye(5, dtype=bool)
        np.testing.assert_allclose(W[off], math.log(2), rtol=1e-12)

    def test_markov_closed_form(self):
        n, fp = 6, 0.1
        W = exact_pairwise_mi(markov_chain_distribution(n, fp))
        for i in range(n):
            for j in range(i + 1, n):
                r = (1 - 2 * fp) ** (j - i)
                assert W[i, j] == pytest.approx(binary_mi_from_correlation(r), rel=1e-10)

    def test_markov_decreasing_in_distance(self):
        W = exact_pairwise_mi(markov_chain_distribution(5, 0.1))
        for i in range(5):
            row = [W[i, j] for j in range(i + 1, 5)]
            assert all(a > b for a, b in zip(row, row[1:]))

    def test_not_normalized(self):
        with pytest.raises(ValidationError):
            exact_pairwise_mi(np.full(8, 0.2))

    def test_chunking_is_invisible(self):
        p = markov_chain_distribution(8, 0.2)
        np.testing.assert_allclose(exact_pairwise_mi(p, chunk=7), exact_pairwise_mi(p), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_estimator_consistency(seed):
    # small fixed law: n = 4 Markov chain
    p = markov_chain_distribution(4, 0.15)
    exact = exact_pairwise_mi(p)
    est = empirical_pairwise_mi(sample_from_distribution(p, 4, 100_000, seed))
    assert np.abs(est - exact).max() < 0.02


class TestLaplacian:
    def test_two_nodes(self):
        np.testing.assert_array_equal(laplacian([[0, 1], [1, 0]]), [[1, -1], [-1, 1]])

    def test_row_sums_zero(self):
        W = random_weights(np.random.default_rng(0), 9)
        np.testing.assert_allclose(laplacian(W).sum(axis=1), 0, atol=EPS_EIG)

    def test_zero_matrix(self):
        spec = laplacian_spectrum(np.zeros((4, 4)))
        np.testing.assert_array_equal(spec.eigenvalues, 0)
        assert len(connected_components(np.zeros((4, 4)))) == 4

    def test_normalized_isolated_vertex(self):
        W = np.zeros((3, 3))
        W[0, 1] = W[1, 0] = 1
        with pytest.raises(IsolatedVertexError) as exc:
            laplacian(W, normalized=True)
        assert exc.value.vertex == 2

    def test_normalized_by_definition(self):
        W = random_weights(np.random.default_rng(1), 6)
        d = W.sum(1)
        expected = np.eye(6) - W / np.sqrt(np.outer(d, d))
        np.testing.assert_allclose(laplacian(W, normalized=True), expected, atol=1e-14)

    def test_rejects_invalid(self):
        with pytest.raises(ValidationError):
            laplacian([[0, 1], [2, 0]])
        with pytest.raises(ValidationError):
            laplacian([[0, -1], [-1, 0]])
        with pytest.raises(ValidationError):
            laplacian([[1, 1], [1, 0]])


class TestEigendecompose:
    def test_two_by_two(self):
        spec = eigendecompose([[1, -1], [-1, 1]])
        np.testing.assert_allclose(spec.eigenvalues, [0, 2], atol=1e-15)
        x0 = spec.eigenvectors[:, 0]
        assert abs(x0[0] - x0[1]) < 1e-15

    @pytest.mark.parametrize("n", [3, 7, 12, 20])
    def test_path_graph_closed_form(self, n):
        W = np.diag(np.ones(n - 1), 1)
        spec = laplacian_spectrum(W + W.T)
        expected = 2 - 2 * np.cos(np.pi * np.arange(n) / n)
        np.testing.assert_allclose(spec.eigenvalues, expected, atol=1e-12)

    def test_two_components(self):
        rng = np.random.default_rng(3)
        W = np.zeros((8, 8))
        W[:4, :4] = random_weights(rng, 4)
        W[4:, 4:] = random_weights(rng, 4)
        spec = laplacian_spectrum(W)
        assert spec.num_zero() == 2
        assert len(connected_components(W)) == 2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 14), st.integers(0, 2**32 - 1))
    def test_reconstruction_and_orthonormality(self, n, seed):
        W = random_weights(np.random.default_rng(seed), n)
        L = laplacian(W)
        spec = eigendecompose(L)
        X, lam = spec.eigenvectors, spec.eigenvalues
        scale = max(1.0, np.linalg.norm(L))
        assert np.linalg.norm(L - X @ np.diag(lam) @ X.T) <= EPS_EIG * scale
        np.testing.assert_allclose(X.T @ X, np.eye(n), atol=1e-8)
        assert (np.diff(lam) >= 0).all()
        assert lam[0] >= -EPS_EIG
        for k in range(n):
            assert np.linalg.norm(L @ X[:, k] - lam[k] * X[:, k]) <= EPS_EIG * scale

    def test_agrees_with_lapack(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(15, 15))
        A = A + A.T
        np.testing.assert_allclose(jacobi_eigh(A)[0], np.linalg.eigvalsh(A), atol=1e-12)

    def test_connected_kernel_is_constant(self):
        W = random_weights(np.random.default_rng(4), 10)
        spec = laplacian_spectrum(W)
        x0 = spec.eigenvectors[:, 0]
        np.testing.assert_allclose(x0, np.full(10, 1 / math.sqrt(10)), atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValidationError):
            eigendecompose([[0, 1], [0.5, 0]])

    def test_deterministic_signs(self):
        W = random_weights(np.random.default_rng(5), 7)
        a = laplacian_spectrum(W).eigenvectors
        b = laplacian_spectrum(W).eigenvectors
        np.testing.assert_array_equal(a, b)
        for k in range(7):
            col = a[:, k]
            assert col[np.argmax(np.abs(col))] > 0


class TestQuadraticForm:
    def test_constant_vector(self):
        L = laplacian(random_weights(np.random.default_rng(0), 5))
        assert quadratic_form(L, np.ones(5)) == pytest.approx(0, abs=1e-12)

    def test_two_nodes(self):
        assert quadratic_form(laplacian([[0, 1], [1, 0]]), [0, 1]) == 1

    @settings(max_examples=60)
    @given(st.integers(1, 16), st.integers(0, 2**32 - 1))
    def test_matches_double_sum(self, n, seed):
        rng = np.random.default_rng(seed)
        W = random_weights(rng, n)
        f = rng.normal(size=n)
        lhs = quadratic_form(laplacian(W), f)
        rhs = pairwise_difference_sum(W, f)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            quadratic_form(np.eye(3), [1, 2])


class TestComponents:
    def test_full(self):
        assert connected_components(random_weights(np.random.default_rng(0), 6) + 0.01 * (1 - np.eye(6))) == [
            list(range(6))
        ]

    def test_threshold(self):
        W = np.array([[0, 0.5, 0.01], [0.5, 0, 0.02], [0.01, 0.02, 0]])
        assert connected_components(W, edge_threshold=0.1) == [[0, 1], [2]]

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_zero_eigenvalues(self, k):
        rng = np.random.default_rng(k)
        sizes = [3, 4, 5][:k]
        labels = rng.permutation(np.repeat(np.arange(k), sizes))
        W = random_weights(rng, labels.size) + 0.05
        W[labels[:, None] != labels[None, :]] = 0
        np.fill_diagonal(W, 0)
        assert len(connected_components(W)) == k
        assert laplacian_spectrum(W).num_zero() == k


class TestPersistence:
    def test_matrix_csv(self, tmp_path):
        W = random_weights(np.random.default_rng(0), 5)
        save_matrix_csv(W, tmp_path / "w.csv")
        np.testing.assert_array_equal(load_matrix_csv(tmp_path / "w.csv"), W)

    def test_spectrum_json(self, tmp_path):
        spec = laplacian_spectrum(random_weights(np.random.default_rng(0), 4), normalized=True)
        save_spectrum(spec, tmp_path / "s.json")
        obj = json.loads((tmp_path / "s.json").read_text())
        assert obj["kind"] == "normalized"
        # row per eigenvector
        np.testing.assert_array_equal(obj["eigenvectors"][1], spec.eigenvectors[:, 1])
        back = load_spectrum(tmp_path / "s.json")
        assert isinstance(back, LapSpectrum)
        np.testing.assert_array_equal(back.eigenvectors, spec.eigenvectors)
