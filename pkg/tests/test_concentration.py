import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rayleigh_sup
from sievenpiv.concentration import (
    BoundParams,
    EnsembleSpec,
    beta_tropp_tail,
    default_block_length,
    empirical_tail,
    gram_bound_params,
    ident_stat,
    scaling_study,
    simulate_norms,
    tropp_tail,
    wilson_interval,
)
from sievenpiv.errors import ConfigurationError, DomainError
from sievenpiv.sieve import SieveSpec, Uniform, orthonormalize, zeta0

positive = st.floats(1e-4, 10.0)


class TestTropp:
    def test_zero_threshold(self):
        assert tropp_tail(0.0, BoundParams(0.1, 0.2), (3, 5)) == 8.0

    def test_scalar_bernstein(self):
        s2, r, t = 0.3, 0.05, 0.7
        expected = 2 * np.exp(-t**2 / 2 / (s2 + r * t / 3))
        assert tropp_tail(t, BoundParams(r, s2), (1, 1)) == pytest.approx(expected, rel=1e-14)

    def test_negative_threshold(self):
        with pytest.raises(DomainError):
            tropp_tail(-0.1, BoundParams(1, 1), (1, 1))

    def test_vectorized(self):
        t = np.linspace(0, 2, 5)
        out = tropp_tail(t, BoundParams(0.1, 0.2), (2, 2))
        assert out.shape == (5,)
        assert out[0] == 4.0

    @given(positive, positive, positive, positive)
    @settings(max_examples=100, deadline=None)
    def test_monotone(self, r, s2, t, dt):
        p = BoundParams(r, s2)
        assert tropp_tail(t + dt, p, (4, 4)) <= tropp_tail(t, p, (4, 4))
        assert tropp_tail(t, BoundParams(r + dt, s2), (4, 4)) >= tropp_tail(t, p, (4, 4))
        assert tropp_tail(t, BoundParams(r, s2 + dt), (4, 4)) >= tropp_tail(t, p, (4, 4))


class TestBetaTropp:
    def test_blocking_is_lossy(self):
        n, sigma2, r = 1000, 0.02, 0.004
        iid = BoundParams(r, sigma2)
        blocked = BoundParams(r, sigma2, s2_n=sigma2 / n, q=n // 2, beta_q=0.0)
        t = np.linspace(0.01, 1.0, 50)
        assert np.all(beta_tropp_tail(t, blocked, (8, 8), n) >= tropp_tail(6 * t, iid, (8, 8)))

    def test_degenerate_mixing(self):
        n, q = 1000, 10
        p = BoundParams(0.01, 0.1, s2_n=1e-4, q=q, beta_q=1.0)
        assert np.all(beta_tropp_tail(np.linspace(0, 5, 20), p, (4, 4), n) >= n / q)

    def test_block_below_one(self):
        with pytest.raises(DomainError):
            BoundParams(0.1, 0.1, q=0)

    def test_block_above_half(self):
        with pytest.raises(DomainError):
            beta_tropp_tail(1.0, BoundParams(0.1, 0.1, q=501), (2, 2), 1000)

    def test_remainder_term(self):
        # same q and zero variance proxy: only the remainder block differs
        p = BoundParams(0.5, 0.0, s2_n=0.0, q=10)
        exact = beta_tropp_tail(10.0, p, (1, 1), 100)
        ragged = beta_tropp_tail(10.0, p, (1, 1), 105)
        assert ragged - exact == pytest.approx(5 * 0.5 / 10.0)
        assert beta_tropp_tail(1.0, p, (1, 1), 105) - beta_tropp_tail(1.0, p, (1, 1), 100) == pytest.approx(1.0)

    @given(positive, positive, positive, positive, st.floats(0, 0.1))
    @settings(max_examples=100, deadline=None)
    def test_monotone(self, r, s2, t, dt, beta):
        n = 400
        p = BoundParams(r, 0.0, s2_n=s2, q=8, beta_q=beta)
        f = lambda pp, tt: beta_tropp_tail(tt, pp, (4, 4), n)
        assert f(p, t + dt) <= f(p, t) + 1e-15
        assert f(BoundParams(r + dt, 0.0, s2_n=s2, q=8, beta_q=beta), t) >= f(p, t) - 1e-15
        assert f(BoundParams(r, 0.0, s2_n=s2 + dt, q=8, beta_q=beta), t) >= f(p, t) - 1e-15

    @pytest.mark.parametrize("n,q", [(27, 3), (2000, 13), (2, 1)])
    def test_default_block_length(self, n, q):
        assert default_block_length(n) == q


@pytest.fixture(scope="module")
def handle():
    return orthonormalize(SieveSpec.bspline(3, 3), Uniform())


class TestIdentStat:
    def test_repeated_point(self, handle):
        x0 = np.full(25, 0.37)
        b = handle(np.array([0.37]))[0]
        expected = np.linalg.norm(np.outer(b, b) - np.eye(handle.dim), 2)
        assert ident_stat(x0, handle) == pytest.approx(expected, rel=1e-12)

    def test_large_sample_small(self, handle):
        x = np.random.default_rng(0).random(200_000)
        assert ident_stat(x, handle) < 0.05

    @pytest.mark.parametrize("seed", range(5))
    def test_rayleigh_brute_force(self, handle, seed):
        rng = np.random.default_rng(seed)
        x = rng.random(60)
        stat = ident_stat(x, handle)
        bt = handle(x)
        assert rayleigh_sup(bt, 10_000, rng) <= stat + 1e-12
        g = bt.T @ bt / bt.shape[0] - np.eye(handle.dim)
        w, v = np.linalg.eigh(g)
        top = v[:, np.argmax(np.abs(w))]
        assert abs(np.mean((bt @ top) ** 2) - 1) == pytest.approx(stat, abs=1e-6)


class TestGramParams:
    def test_haar_closed_form(self):
        # Haar basis: ||b(x)||^2 = K everywhere, so E[||b||^2 b b'] - I = (K - 1) I
        spec = EnsembleSpec(K=8, n=400, family="wavelet", n_vanishing=1)
        p = gram_bound_params(spec)
        assert p.R_n == pytest.approx(7 / 400, rel=1e-8)
        assert p.sigma2_n == pytest.approx(7 / 400, rel=1e-8)
        assert p.s2_n == pytest.approx(7 / 400**2, rel=1e-8)

    def test_spline_envelope(self):
        spec = EnsembleSpec(K=16, n=500)
        p = gram_bound_params(spec)
        z = zeta0(orthonormalize(spec.sieve(), Uniform()))
        assert p.R_n * 500 == pytest.approx(z**2 - 1, rel=1e-3)
        assert p.sigma2_n * 500 <= z**2

    def test_mixing_carries_beta(self):
        p = gram_bound_params(EnsembleSpec(K=8, n=2000, rho=0.5), q=25)
        assert p.q == 25 and 0 < p.beta_q < 1e-6

    def test_custom_requires_params(self):
        with pytest.raises(ConfigurationError):
            EnsembleSpec(kind="custom")


class TestTails:
    def test_wilson_reference(self):
        lo, hi = wilson_interval(np.array([10]), 100, 1.959964)
        assert lo[0] == pytest.approx(0.0552, abs=1e-4)
        assert hi[0] == pytest.approx(0.1744, abs=1e-4)

    def test_iid_small(self):
        check = empirical_tail(EnsembleSpec(K=8, n=200), reps=2000, seed=1)
        assert check.n_violations == 0
        assert np.all(np.diff(check.bound) <= 0)

    def test_mixing_small(self):
        check = empirical_tail(EnsembleSpec(K=8, n=400, rho=0.5), reps=1000, seed=2, q=8)
        assert check.n_violations == 0

    def test_custom_rademacher(self):
        n = 100

        def draw(rng, size):
            return (rng.choice([-1.0, 1.0], size) / size).reshape(size, 1, 1)

        params = BoundParams(R_n=1 / n, sigma2_n=1 / n)
        spec = EnsembleSpec(kind="custom", n=n, dims=(1, 1), draw=draw, params=params)
        check = empirical_tail(spec, reps=2000, seed=0)
        assert check.n_violations == 0

    def test_violation_is_detected(self):
        # a bound that is far too small must be flagged
        spec = EnsembleSpec(kind="custom", n=50, dims=(1, 1), params=BoundParams(1e-6, 1e-8),
                            draw=lambda rng, n: rng.standard_normal((n, 1, 1)) / n)
        assert empirical_tail(spec, reps=500, seed=0).n_violations > 0

    def test_replication_streams(self):
        spec = EnsembleSpec(K=8, n=100)
        all_norms = simulate_norms(spec, 30, 5, chunk=7)
        np.testing.assert_array_equal(all_norms[10:], simulate_norms(spec, 20, 15))


class TestScaling:
    def test_corollary_regime(self):
        k = 8
        scaled, regime = [], []
        for n in (250, 1000, 4000):
            spec = EnsembleSpec(K=k, n=n)
            p = gram_bound_params(spec)
            regime.append(p.R_n * np.sqrt(np.log(2 * k)) / np.sqrt(p.sigma2_n))
            norms = simulate_norms(spec, 300, 0)
            scaled.append(np.quantile(norms, 0.9) / (np.sqrt(p.sigma2_n) * np.sqrt(np.log(2 * k))))
        assert np.all(np.diff(regime) < 0)
        assert max(scaled) < 3 and max(scaled) / min(scaled) < 1.5

    def test_exponent_in_n(self):
        rep = scaling_study(EnsembleSpec(K=8), [250, 500, 1000, 2000, 4000], [8], reps=150, seed=0)
        assert rep.exponent_n == pytest.approx(-0.5, abs=0.05)
        assert np.isnan(rep.exponent_k)

    def test_envelope_in_k(self):
        rep = scaling_study(EnsembleSpec(), [2000], [8, 16, 32, 64], reps=60, seed=0)
        assert rep.envelope_ratio_spread < 2.0
        assert np.all(np.diff([c["median"] for c in rep.cells]) > 0)

    def test_mixing_dominates(self):
        for n in (500, 2000):
            iid = np.median(simulate_norms(EnsembleSpec(K=8, n=n), 200, 0))
            dep = np.median(simulate_norms(EnsembleSpec(K=8, n=n, rho=0.8), 200, 0))
            assert dep > iid

    def test_report_export(self, tmp_path):
        rep = scaling_study(EnsembleSpec(K=8), [200, 400], [8], reps=20, seed=0)
        rep.to_csv(tmp_path / "s.csv")
        rep.to_json(tmp_path / "s.json")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,k,median,q25,q75,envelope_ratio"
        assert json.loads((tmp_path / "s.json").read_text())["exponent_n"] == rep.exponent_n

    def test_empty_grid(self):
        with pytest.raises(DomainError):
            scaling_study(EnsembleSpec(), [], [8])
