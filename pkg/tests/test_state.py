import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frustrated_fermions.errors import DegeneracyError, ParameterError
from frustrated_fermions.state import (
    GaussianState,
    ModelParams,
    check_correlation_matrix,
    correlation_matrix,
    default_dt,
    from_modes,
    init_random_occupation,
    normalize,
    orthonormalize,
)


def random_modes(L, N, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(L, N)) + 1j * rng.normal(size=(L, N))


class TestModelParams:
    def test_defaults(self):
        p = ModelParams(L=8)
        assert p.N == 4
        assert p.dt == 0.02
        assert ModelParams(L=8, gamma=0.5).dt == 0.05

    @pytest.mark.parametrize("kw", [
        dict(L=7), dict(L=0), dict(L=8, N=0), dict(L=8, N=9), dict(L=8, theta=-0.1),
        dict(L=8, theta=3.2), dict(L=8, gamma=-1.0), dict(L=8, dt=0.0),
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ParameterError):
            ModelParams(**kw)

    def test_measurement_only_forces_zero_hopping(self):
        p = ModelParams(L=8, J=3.0, measurement_only=True)
        assert p.J == 0.0
        assert p.dt == default_dt(1.0, True) == 0.02

    def test_orbital_weights(self):
        c, s = ModelParams(L=4, theta=math.pi).orbital_weights
        assert c == pytest.approx(s) == pytest.approx(math.sqrt(0.5))


class TestInitialState:
    def test_full_filling_is_permutation(self):
        s = init_random_occupation(ModelParams(L=4, N=4), 11)
        assert sorted(np.argmax(np.abs(s.U), axis=0)) == [0, 1, 2, 3]
        np.testing.assert_array_equal(np.abs(s.U) ** 2 @ np.ones(4), np.ones(4))

    def test_deterministic(self):
        p = ModelParams(L=8, N=4)
        np.testing.assert_array_equal(init_random_occupation(p, 5).U, init_random_occupation(p, 5).U)

    def test_product_state_correlation(self):
        s = init_random_occupation(ModelParams(L=8, N=4), 5)
        G = correlation_matrix(s)
        np.testing.assert_array_equal(G, np.diag(np.diag(G)))
        assert sorted(np.diag(G).real) == [0, 0, 0, 0, 1, 1, 1, 1]
        assert s.t == 0.0

    def test_sites_are_uniform(self):
        p = ModelParams(L=6, N=2)
        counts = np.zeros(6)
        for seed in range(3000):
            counts += np.abs(np.diag(correlation_matrix(init_random_occupation(p, seed))))
        # each site occupied with probability 1/3
        assert np.all(np.abs(counts / 3000 - 1 / 3) < 0.04)


class TestCorrelationMatrix:
    def test_basis_state(self):
        U = np.zeros((4, 2), complex)
        U[0, 0] = U[2, 1] = 1
        np.testing.assert_array_equal(correlation_matrix(U), np.diag([1, 0, 1, 0]))

    def test_convention_conjugate(self):
        # single mode (1, i)/sqrt(2): <c_0^dag c_1> = conj(u_0) u_1 = i/2
        U = np.array([[1], [1j]]) / math.sqrt(2)
        G = correlation_matrix(U)
        assert G[0, 1] == pytest.approx(0.5j)

    def test_projector_spectrum(self):
        Q = orthonormalize(random_modes(10, 4, 1))
        lam = np.linalg.eigvalsh(correlation_matrix(Q))
        np.testing.assert_allclose(lam, [0] * 6 + [1] * 4, atol=1e-12)
        check_correlation_matrix(correlation_matrix(Q), 4)


class TestNormalize:
    def test_idempotent_on_projector(self):
        Q = orthonormalize(random_modes(8, 4, 2))
        Q2 = orthonormalize(Q)
        np.testing.assert_allclose(correlation_matrix(Q2), correlation_matrix(Q), atol=1e-12)

    def test_column_scaling_is_gauge(self):
        U = random_modes(8, 4, 3)
        V = U.copy()
        V[:, 2] *= 7
        np.testing.assert_allclose(correlation_matrix(orthonormalize(U)), correlation_matrix(orthonormalize(V)), atol=1e-12)

    def test_pseudoinverse_oracle(self):
        U = random_modes(8, 4, 4)
        Q = orthonormalize(U)
        np.testing.assert_allclose(Q.conj().T @ Q, np.eye(4), atol=1e-12)
        P = U @ np.linalg.pinv(U)
        np.testing.assert_allclose(Q @ Q.conj().T, P, atol=1e-12)

    def test_gauge_fixed_positive_r(self):
        U = random_modes(8, 4, 5)
        Q = orthonormalize(U)
        R = Q.conj().T @ U
        np.testing.assert_allclose(np.tril(R, -1), 0, atol=1e-12)
        d = np.diag(R)
        assert np.all(d.real > 0)
        np.testing.assert_allclose(d.imag, 0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_cholesky_matches_householder(self, seed):
        U = orthonormalize(random_modes(16, 8, seed))
        # a mild non-unitary perturbation like one Kraus layer
        U = U + 0.1 * random_modes(16, 8, seed + 100)
        np.testing.assert_allclose(orthonormalize(U, "cholesky"), orthonormalize(U, "householder"), atol=1e-12)

    def test_cholesky_falls_back_when_ill_conditioned(self):
        U = random_modes(8, 3, 6)
        U[:, 2] = U[:, 1] + 1e-4 * random_modes(8, 1, 60)[:, 0]
        np.testing.assert_allclose(orthonormalize(U, "cholesky"), orthonormalize(U, "householder"), atol=1e-12)

    def test_rank_deficient(self):
        U = random_modes(8, 3, 7)
        U[:, 2] = 2 * U[:, 0]
        with pytest.raises(DegeneracyError):
            orthonormalize(U)
        with pytest.raises(DegeneracyError):
            orthonormalize(U, "cholesky")

    def test_unknown_method(self):
        with pytest.raises(ParameterError):
            orthonormalize(random_modes(4, 2, 0), "gram-schmidt")

    def test_normalize_in_place(self):
        s = GaussianState(np.asfortranarray(random_modes(6, 3, 8)))
        normalize(s)
        np.testing.assert_allclose(s.U.conj().T @ s.U, np.eye(3), atol=1e-12)


def test_from_modes_checks_orthonormality():
    with pytest.raises(ParameterError):
        from_modes(random_modes(6, 3, 0))
    s = from_modes(orthonormalize(random_modes(6, 3, 0)), t=1.5)
    assert s.t == 1.5 and s.L == 6 and s.N == 3


@settings(max_examples=100, deadline=None)
@given(L=st.integers(2, 12).map(lambda x: 2 * x), seed=st.integers(0, 2**32 - 1), frac=st.floats(0.05, 1.0))
def test_gauge_invariance(L, seed, frac):
    N = max(1, int(frac * L))
    rng = np.random.default_rng(seed)
    U = orthonormalize(random_modes(L, N, seed))
    V, _ = np.linalg.qr(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
    np.testing.assert_allclose(correlation_matrix(U @ V), correlation_matrix(U), atol=1e-12)
