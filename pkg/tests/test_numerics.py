import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sievenpiv import numerics
from sievenpiv.errors import DomainError


def random_psd(rng, k):
    m = rng.standard_normal((k, k))
    return m @ m.T + np.eye(k)


class TestSvd:
    def test_identity(self):
        np.testing.assert_allclose(numerics.svd(np.eye(2)).singular_values, [1.0, 1.0])

    def test_diagonal(self):
        np.testing.assert_allclose(numerics.svd(np.diag([3.0, 0.0])).singular_values, [3.0, 0.0])

    def test_reconstruction(self):
        a = np.random.default_rng(1).standard_normal((5, 3))
        r = numerics.svd(a)
        rec = r.u @ np.diag(r.singular_values) @ r.vt
        assert np.linalg.norm(rec - a) / np.linalg.norm(a) < 1e-10
        np.testing.assert_allclose(r.u.T @ r.u, np.eye(3), atol=1e-12)
        assert np.all(np.diff(r.singular_values) <= 0)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            numerics.svd(np.array([[np.nan, 1.0]]))


class TestPinv:
    def test_identity(self):
        np.testing.assert_allclose(numerics.pinv(np.eye(3)), np.eye(3))

    def test_projector(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(numerics.pinv(p), p)

    def test_matches_inverse(self):
        a = np.random.default_rng(2).standard_normal((4, 4)) + 4 * np.eye(4)
        np.testing.assert_allclose(numerics.pinv(a), np.linalg.solve(a, np.eye(4)), atol=1e-8)

    def test_truncation_flag(self):
        _, flag = numerics.pinv(np.diag([1.0, 1e-14]), 1e-12, return_truncated=True)
        assert flag
        _, flag = numerics.pinv(np.diag([1.0, 1e-3]), 1e-12, return_truncated=True)
        assert not flag

    @given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_penrose_identities(self, seed, r, c):
        a = np.random.default_rng(seed).standard_normal((r, c))
        x = numerics.pinv(a)
        np.testing.assert_allclose(a @ x @ a, a, atol=1e-8)
        np.testing.assert_allclose(x @ a @ x, x, atol=1e-8)
        np.testing.assert_allclose((a @ x).T, a @ x, atol=1e-8)
        np.testing.assert_allclose((x @ a).T, x @ a, atol=1e-8)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_double_pinv(self, seed):
        a = np.random.default_rng(seed).standard_normal((4, 4)) + 3 * np.eye(4)
        np.testing.assert_allclose(numerics.pinv(numerics.pinv(a)), a, atol=1e-8)


class TestInvSqrt:
    def test_identity(self):
        np.testing.assert_allclose(numerics.inv_sqrt_psd(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(numerics.inv_sqrt_psd(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))

    @given(st.integers(0, 10_000), st.integers(1, 6))
    @settings(max_examples=30, deadline=None)
    def test_whitening_and_commuting(self, seed, k):
        a = random_psd(np.random.default_rng(seed), k)
        r = numerics.inv_sqrt_psd(a)
        np.testing.assert_allclose(r @ a @ r, np.eye(k), atol=1e-8)
        np.testing.assert_allclose(r, r.T, atol=1e-12)
        np.testing.assert_allclose(r @ a, a @ r, atol=1e-8 * np.abs(a).max())

    def test_singular_rejected(self):
        with pytest.raises(DomainError):
            numerics.inv_sqrt_psd(np.diag([1.0, 0.0]))

    def test_asymmetric_rejected(self):
        with pytest.raises(DomainError):
            numerics.inv_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestNorms:
    def test_identity(self):
        assert numerics.spectral_norm(np.eye(5)) == pytest.approx(1.0)

    def test_absolute_largest(self):
        assert numerics.spectral_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0)

    def test_matches_svd(self):
        a = np.random.default_rng(3).standard_normal((6, 4))
        assert numerics.spectral_norm(a) == numerics.svd(a).singular_values[0]

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_submultiplicative(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        assert numerics.spectral_norm(a @ b) <= numerics.spectral_norm(a) * numerics.spectral_norm(b) + 1e-12

    def test_min_eig(self):
        assert numerics.min_eig_sym(np.diag([1.0, 3.0])) == pytest.approx(1.0)
        with pytest.raises(DomainError):
            numerics.min_eig_sym(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestQuadrature:
    def test_monomial(self):
        rule = numerics.gauss_legendre(5, 1)
        assert rule.integrate(lambda x: x**4) == pytest.approx(0.2, abs=1e-14)

    @pytest.mark.parametrize("n_nodes,sub", [(1, 1), (3, 4), (10, 32)])
    def test_weights_normalized(self, n_nodes, sub):
        rule = numerics.gauss_legendre(n_nodes, sub)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(rule.weights > 0)
        assert np.all((rule.nodes > 0) & (rule.nodes < 1))

    @pytest.mark.parametrize("deg", range(0, 20))
    def test_exact_degree(self, deg):
        rule = numerics.gauss_legendre(10, 3)
        assert rule.integrate(lambda x: x**deg) == pytest.approx(1.0 / (deg + 1), abs=1e-13)

    def test_composite_piecewise(self):
        # |x - 1/3|^3 is a polynomial on each side of the breakpoint
        rule = numerics.composite_gauss_legendre([0.0, 1 / 3, 1.0], 2)
        exact = ((1 / 3) ** 4 + (2 / 3) ** 4) / 4
        assert rule.integrate(lambda x: np.abs(x - 1 / 3) ** 3) == pytest.approx(exact, abs=1e-14)

    def test_tensor_order(self):
        a = numerics.gauss_legendre(2, 1)
        nodes, w = numerics.tensor_rule(a, a)
        assert nodes.shape == (4, 2)
        np.testing.assert_allclose(nodes[:2, 0], [a.nodes[0]] * 2)
        assert w.sum() == pytest.approx(1.0)
