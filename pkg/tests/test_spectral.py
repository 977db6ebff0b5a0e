import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irlab import spectral
from irlab.errors import DegenerateSpectrumError, InputError, OutOfRegimeError, UndefinedRankError


def random_symmetric(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) * scale
    return (a + a.T) / 2


def charpoly_roots(a, tol=1e-13):
    """Eigenvalues by bisection on det(A - tI), brackets found by a fine sign scan."""
    a = mpmath.matrix(a.tolist())
    n = a.rows
    radius = max(sum(abs(a[i, j]) for j in range(n)) for i in range(n)) + 1

    def p(t):
        return mpmath.det(a - mpmath.mpf(float(t)) * mpmath.eye(n))

    grid = np.linspace(-float(radius), float(radius), 4001)
    vals = [p(t) for t in grid]
    roots = []
    for lo, hi, flo, fhi in zip(grid, grid[1:], vals, vals[1:]):
        if flo == 0:
            roots.append(lo)
        elif flo * fhi < 0:
            lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
            while hi - lo > tol:
                mid = (lo + hi) / 2
                if p(mid) * p(lo) <= 0:
                    hi = mid
                else:
                    lo = mid
            roots.append(float((lo + hi) / 2))
    return np.sort(roots)[::-1]


class TestEigendecompose:
    def test_identity(self):
        d = spectral.eigendecompose(np.eye(3))
        np.testing.assert_allclose(d.lambdas, [1, 1, 1])
        np.testing.assert_allclose(d.V.T @ d.V, np.eye(3), atol=1e-14)

    def test_diagonal(self):
        d = spectral.eigendecompose(np.diag([1.0, 10.0, 5.0]))
        np.testing.assert_allclose(d.lambdas, [10, 5, 1])
        np.testing.assert_allclose(np.abs(d.V), np.eye(3)[:, [1, 2, 0]])

    def test_charpoly_oracle(self):
        a = random_symmetric(5, seed=11)
        d = spectral.eigendecompose(a)
        roots = charpoly_roots(a)
        assert roots.size == 5
        assert np.max(np.abs(d.lambdas - roots)) <= 1e-8

    def test_non_finite_rejected(self):
        a = np.eye(3)
        a[0, 1] = np.nan
        with pytest.raises(InputError):
            spectral.eigendecompose(a)

    def test_non_square_rejected(self):
        with pytest.raises(InputError):
            spectral.eigendecompose(np.ones((2, 3)))

    def test_canonical_signs(self):
        d = spectral.eigendecompose(random_symmetric(6, seed=3))
        for i in range(6):
            j = np.argmax(np.abs(d.V[:, i]))
            assert d.V[j, i] > 0

    def test_deterministic(self):
        a = random_symmetric(7, seed=5)
        d1, d2 = spectral.eigendecompose(a), spectral.eigendecompose(a)
        assert np.array_equal(d1.V, d2.V) and np.array_equal(d1.lambdas, d2.lambdas)

    def test_round_off_gap_is_degenerate(self):
        w = spectral.synthesize(spectral.SpectrumSpec(leading=(10, 5, 1), n=8))
        assert spectral.eigendecompose(w).delta_s == 0.0

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 25), seed=st.integers(0, 2**32 - 1))
    def test_orthogonal_and_reconstructs(self, n, seed):
        a = random_symmetric(n, seed)
        d = spectral.eigendecompose(a)
        scale = max(1.0, np.linalg.norm(a))
        assert np.max(np.abs(d.V.T @ d.V - np.eye(n))) <= 1e-10
        assert np.max(np.abs(d.reconstruct() - a)) <= 1e-10 * scale
        assert np.all(np.diff(d.lambdas) <= 0)

    def test_orthogonality_1000_matrices(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 26))
            a = rng.standard_normal((n, n))
            a = (a + a.T) / 2
            d = spectral.eigendecompose(a)
            worst = max(worst, np.max(np.abs(d.V.T @ d.V - np.eye(n))),
                        np.max(np.abs(d.reconstruct() - a)) / np.linalg.norm(a))
        assert worst <= 1e-10


class TestEffectiveRank:
    def test_identity(self):
        assert spectral.effective_rank(np.eye(7)) == pytest.approx(7)

    def test_rank_one(self):
        v = np.arange(1.0, 5.0)
        assert spectral.effective_rank(np.outer(v, v)) == pytest.approx(1)

    def test_diagonal_example(self):
        w = np.diag([10, 5, 1] + [0] * 5)
        assert spectral.effective_rank(w) == pytest.approx(1.6)

    def test_zero_matrix(self):
        with pytest.raises(UndefinedRankError):
            spectral.effective_rank(np.zeros((3, 3)))

    def test_negative_eigenvalues_use_absolute_values(self):
        assert spectral.effective_rank(np.diag([-4.0, 2.0, 1.0])) == pytest.approx(7 / 4)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 12), seed=st.integers(0, 2**32 - 1),
           c=st.floats(1e-3, 1e3).flatmap(lambda x: st.sampled_from([x, -x])))
    def test_scale_invariant(self, n, seed, c):
        w = random_symmetric(n, seed)
        assert spectral.effective_rank(c * w) == pytest.approx(spectral.effective_rank(w), abs=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 12), r=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
    def test_bounded_by_rank(self, n, r, seed):
        r = min(r, n)
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, r))
        w = x @ np.diag(rng.choice([-1.0, 1.0], r)) @ x.T
        lam = np.linalg.eigvalsh(w)
        rank = int(np.sum(np.abs(lam) > 1e-9 * np.max(np.abs(lam))))
        er = spectral.effective_rank(w)
        assert 1 - 1e-12 <= er <= rank + 1e-9 <= n + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(2, 12), seed=st.integers(0, 2**32 - 1))
    def test_psd_nuclear_norm_is_trace(self, n, seed):
        x = np.random.default_rng(seed).standard_normal((n, n))
        w = x @ x.T
        assert spectral.nuclear_norm(w) == pytest.approx(np.trace(w), abs=1e-9 * max(1, np.trace(w)))


class TestBestRankL:
    def test_diagonal(self):
        d = spectral.eigendecompose(np.diag([10.0, 5.0, 1.0]))
        np.testing.assert_allclose(spectral.best_rank_L(d, 2), np.diag([10.0, 5.0, 0.0]), atol=1e-14)

    def test_full_rank_reconstructs(self):
        w = random_symmetric(6, seed=9)
        d = spectral.eigendecompose(w)
        assert np.max(np.abs(spectral.best_rank_L(d, 6) - w)) <= 1e-9

    @pytest.mark.parametrize("L", [0, 4])
    def test_out_of_range(self, L):
        with pytest.raises(InputError):
            spectral.best_rank_L(spectral.eigendecompose(np.eye(3)), L)

    def test_random_search_oracle(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((6, 6))
        w = x @ x.T
        best = np.linalg.norm(w - spectral.best_rank_L(spectral.eigendecompose(w), 3))
        for _ in range(20000):
            y = rng.standard_normal((6, 3))
            s = rng.choice([-1.0, 1.0], 3)
            cand = y @ np.diag(s) @ y.T
            assert np.linalg.norm(w - cand) >= best - 1e-6
        # local refinement around the truncation also never wins
        d = spectral.eigendecompose(w)
        base = d.V[:, :3] * np.sqrt(d.lambdas[:3])
        for _ in range(5000):
            y = base + 1e-2 * rng.standard_normal((6, 3))
            assert np.linalg.norm(w - y @ y.T) >= best - 1e-6

    def test_truncate_rank_matches(self):
        w = random_symmetric(8, seed=1)
        np.testing.assert_allclose(spectral.truncate_rank(w, 3),
                                   spectral.best_rank_L(spectral.eigendecompose(w), 3), atol=1e-10)


class TestWeyl:
    def test_examples(self):
        assert spectral.weyl_gap(5, 5, 0)
        assert not spectral.weyl_gap(5, 7, 1)

    @pytest.mark.parametrize("sigma", [0.01, 0.1, 1.0])
    def test_seeded_perturbations(self, sigma):
        w = random_symmetric(10, seed=0)
        lam = spectral.eigendecompose(w).lambdas
        for s in range(100):
            e = random_symmetric(10, seed=1000 + s, scale=sigma)
            en = spectral.spectral_norm(e)
            lt = spectral.eigendecompose(w + e).lambdas
            assert all(spectral.weyl_gap(a, b, en) for a, b in zip(lam, lt))


class TestDavisKahan:
    def test_identical_and_orthogonal(self):
        v = np.array([0.6, 0.8])
        assert spectral.sin_theta(v, v) == pytest.approx(0, abs=1e-8)
        assert spectral.sin_theta(v, np.array([-0.8, 0.6])) == pytest.approx(1)

    def test_non_unit_rejected(self):
        with pytest.raises(InputError):
            spectral.sin_theta(np.array([1.0, 1.0]), np.array([1.0, 0.0]))

    def test_zero_gap(self):
        with pytest.raises(DegenerateSpectrumError):
            spectral.davis_kahan_bound(0.1, 0.0)

    def test_distance_bound_examples(self):
        assert spectral.eigvec_distance_bound(0, 4) == 0
        assert spectral.eigvec_distance_bound(2, 4) == pytest.approx(math.sqrt(2))
        with pytest.raises(OutOfRegimeError):
            spectral.eigvec_distance_bound(2.1, 4)

    def test_holds_gated_by_regime(self):
        assert spectral.davis_kahan_holds(0.1, 0.1, 1.0) is True
        assert spectral.davis_kahan_holds(0.1, 0.6, 1.0) is None

    def test_seeded_instances(self):
        lam = np.array([10.0, 8.0, 6.0, 4.0, 2.0, 0.5])
        spec = spectral.SpectrumSpec(leading=tuple(lam), n=6)
        w = spectral.synthesize(spec)
        d = spectral.eigendecompose(w)
        checked = 0
        for s in range(60):
            e = random_symmetric(6, seed=s, scale=0.15)
            en = spectral.spectral_norm(e)
            if en > d.delta_s / 2:
                continue
            dt = spectral.eigendecompose(w + e)
            vt = spectral.align_signs(d.V, dt.V)
            for i in range(6):
                assert spectral.sin_theta(d.V[:, i], vt[:, i]) <= spectral.davis_kahan_bound(en, d.delta_s)
                assert np.linalg.norm(d.V[:, i] - vt[:, i]) <= spectral.eigvec_distance_bound(en, d.delta_s)
            checked += 1
        assert checked >= 20


class TestSynthesis:
    def test_spectrum(self):
        spec = spectral.SpectrumSpec(leading=(10, 5, 1), n=20)
        lam = spectral.eigendecompose(spectral.synthesize(spec)).lambdas
        np.testing.assert_allclose(lam, [10, 5, 1] + [0.01] * 17, atol=1e-12)

    def test_logspace_tail(self):
        spec = spectral.SpectrumSpec(leading=(10, 5), n=6, tail=("logspace", 0.1, 0.001))
        np.testing.assert_allclose(spec.eigenvalues()[2:], [0.1, 0.1 ** (5 / 3), 0.1 ** (7 / 3), 0.001])

    def test_orthogonal_basis(self):
        q = spectral.random_orthogonal(9, seed=4)
        np.testing.assert_allclose(q.T @ q, np.eye(9), atol=1e-12)
        assert np.linalg.det(q) == pytest.approx(1.0)
        assert np.array_equal(q, spectral.random_orthogonal(9, seed=4))
