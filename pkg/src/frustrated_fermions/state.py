"""Gaussian (Slater-determinant) states of N fermions on a periodic chain of L sites.

A state is stored as an L x N complex mode matrix ``U`` whose columns are the
occupied single-particle orbitals,

    |psi> = prod_n ( sum_i U[i, n] c_i^dag ) |0>,

and every observable follows from the correlation matrix
``G[i, j] = <c_i^dag c_j> = conj(U U^dag)[i, j]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg.blas as blas
import scipy.linalg.lapack as lapack

from .errors import DegeneracyError, ParameterError

#: smallest admissible |R_ii| in the QR factorization
RANK_TOL = 1e-13


def default_dt(gamma: float, measurement_only: bool = False) -> float:
    """Time step used by the reference simulations: 0.05 for weak monitoring, 0.02 otherwise."""
    if measurement_only or gamma >= 1.0:
        return 0.02
    return 0.05


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters of one monitored chain.

    ``theta`` is the misalignment angle in radians. In ``measurement_only``
    mode the Hamiltonian step is skipped and ``J`` is forced to zero; time is
    then measured in units of ``1/gamma``.
    """

    L: int
    N: int | None = None
    J: float = 1.0
    gamma: float = 1.0
    theta: float = math.pi
    dt: float | None = None
    measurement_only: bool = False

    def __post_init__(self):
        L = self.L
        if isinstance(L, bool) or int(L) != L or L < 2:
            raise ParameterError(f"L must be a positive integer >= 2, got {L!r}")
        if L % 2:
            raise ParameterError(f"L must be even, got {L}")
        object.__setattr__(self, "L", int(L))
        N = self.L // 2 if self.N is None else self.N
        if int(N) != N or not 1 <= N <= self.L:
            raise ParameterError(f"N must satisfy 1 <= N <= L={self.L}, got {N!r}")
        object.__setattr__(self, "N", int(N))
        if not 0.0 <= self.theta <= math.pi:
            raise ParameterError(f"theta must lie in [0, pi], got {self.theta}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.measurement_only:
            object.__setattr__(self, "J", 0.0)
        dt = default_dt(self.gamma, self.measurement_only) if self.dt is None else self.dt
        if not dt > 0:
            raise ParameterError(f"dt must be > 0, got {dt}")
        object.__setattr__(self, "dt", float(dt))

    @property
    def orbital_weights(self) -> tuple[float, float]:
        """(cos(theta/4), sin(theta/4)): weights of sites k and k+1 in the measured orbital."""
        return math.cos(self.theta / 4), math.sin(self.theta / 4)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass
class GaussianState:
    """Mode matrix ``U`` (L x N, orthonormal columns) and the current time ``t``."""

    U: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def L(self) -> int:
        return self.U.shape[0]

    @property
    def N(self) -> int:
        return self.U.shape[1]

    def copy(self) -> "GaussianState":
        return GaussianState(self.U.copy(order="F"), self.t, dict(self.meta))


def init_random_occupation(params: ModelParams, seed) -> GaussianState:
    """Product state with N particles on a uniformly random N-subset of sites.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`
    (an integer or a :class:`numpy.random.SeedSequence`).
    """
    L, N = params.L, params.N
    if not 1 <= N <= L:
        raise ParameterError(f"need 1 <= N <= L, got N={N}, L={L}")
    rng = np.random.default_rng(seed)
    sites = np.sort(rng.choice(L, size=N, replace=False))
    U = np.zeros((L, N), dtype=np.complex128, order="F")
    U[sites, np.arange(N)] = 1.0
    return GaussianState(U, 0.0)


def from_modes(U, t: float = 0.0, check: bool = True) -> GaussianState:
    """Wrap a caller-provided orthonormal mode matrix."""
    U = np.array(U, dtype=np.complex128, order="F", copy=True)
    if U.ndim != 2 or U.shape[1] > U.shape[0]:
        raise ParameterError(f"mode matrix must be L x N with N <= L, got shape {U.shape}")
    if check:
        err = np.abs(U.conj().T @ U - np.eye(U.shape[1])).max()
        if err > 1e-10:
            raise ParameterError(f"columns are not orthonormal (max deviation {err:.2e})")
    return GaussianState(U, t)


def _householder_q(U: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(U)
    d = np.diagonal(R)
    mag = np.abs(d)
    if mag.min() < RANK_TOL:
        raise DegeneracyError(f"rank-deficient mode matrix: min |R_ii| = {mag.min():.3e}")
    # gauge fix: positive real diagonal of R
    return np.asfortranarray(Q * (d / mag))


def _cholesky_q(U: np.ndarray) -> np.ndarray | None:
    # Q = U R^{-1} with U^H U = R^H R; identical to Householder Q with positive diag(R).
    # Returns None when the Gram matrix is too ill-conditioned to trust.
    U = np.asfortranarray(U)
    S = blas.zherk(1.0, U, trans=2)
    R, info = lapack.zpotrf(S, lower=0, clean=1, overwrite_a=1)
    if info != 0:
        return None
    d = np.diagonal(R).real
    # orthogonality loss scales as cond(U)^2 * eps; keep it below ~1e-13
    if d.min() < 3e-2 * d.max():
        return None
    return blas.ztrsm(1.0, R, U, side=1, lower=0)


def orthonormalize(U: np.ndarray, method: str = "householder") -> np.ndarray:
    """Q factor of the thin QR decomposition of ``U`` with gauge ``diag(R) > 0``.

    ``method="cholesky"`` computes the same factor through the Gram matrix,
    which is about three times faster for the near-orthonormal matrices
    produced by a single Kraus layer, and falls back to Householder when the
    Gram matrix is ill-conditioned.
    """
    if method == "cholesky":
        Q = _cholesky_q(U)
        if Q is not None:
            return Q
        return _householder_q(U)
    if method == "householder":
        return _householder_q(U)
    raise ParameterError(f"unknown orthonormalization method {method!r}")


def normalize(state: GaussianState, method: str = "householder") -> GaussianState:
    """Replace ``U`` by the Q factor of its thin QR decomposition (in place)."""
    state.U = orthonormalize(state.U, method)
    return state


def correlation_matrix(state_or_U) -> np.ndarray:
    """``G[i, j] = <c_i^dag c_j> = sum_n conj(U[i, n]) U[j, n]``."""
    U = state_or_U.U if isinstance(state_or_U, GaussianState) else np.asarray(state_or_U)
    return U.conj() @ U.T


def check_correlation_matrix(G: np.ndarray, N: int | None = None, tol: float = 1e-10) -> None:
    """Assert the invariants of a pure-state correlation matrix."""
    herm = np.abs(G - G.conj().T).max()
    assert herm < 1e2 * tol, f"G not Hermitian ({herm:.2e})"
    lam = np.linalg.eigvalsh(G)
    assert lam.min() > -tol and lam.max() < 1 + tol, "eigenvalues outside [0, 1]"
    if N is not None:
        tr = abs(np.trace(G).real - N)
        assert tr < tol, f"trace deviates from N by {tr:.2e}"
