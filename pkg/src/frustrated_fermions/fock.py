"""Exact many-body reference for small chains.

States live in the fixed-N sector of the full Fock space. A basis state is an
N-subset ``S`` of sites stored as a bitmask and stands for
``c_{s1}^dag c_{s2}^dag ... c_{sN}^dag |0>`` with ``s1 < s2 < ... < sN``
(Jordan-Wigner ordering by ascending site). One-body operators
``sum_ij h_ij c_i^dag c_j`` are built as sparse matrices, so the oracle shares
no code with the Gaussian engine beyond the noise stream. Sites are labelled
from 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .dynamics import (
    EVEN,
    ODD,
    NoiseStream,
    Propagator,
    apply_hopping,
    apply_measurement_layer,
    hopping_matrix,
    trajectory_seeds,
)
from .errors import NoiseDesyncError, ParameterError
from .observables import charge_cumulants, entanglement_entropy
from .state import GaussianState, ModelParams, correlation_matrix, init_random_occupation

#: largest Hilbert-space dimension the oracle accepts
MAX_DIM = 20000
#: above this dimension hopping uses a sparse Krylov exponential instead of eigh
DENSE_HOP_MAX = 3000


def _popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        out += x & 1
        x = x >> 1
    return out


@dataclass
class FockBasis:
    L: int
    N: int
    masks: np.ndarray = field(repr=False)
    index: dict = field(repr=False)

    @classmethod
    def build(cls, L: int, N: int) -> "FockBasis":
        dim = math.comb(L, N)
        if dim > MAX_DIM:
            raise ParameterError(f"Hilbert-space dimension C({L},{N}) = {dim} exceeds {MAX_DIM}")
        masks = np.array([sum(1 << s for s in c) for c in combinations(range(L), N)], dtype=np.int64)
        masks.sort()
        return cls(L, N, masks, {int(m): k for k, m in enumerate(masks)})

    @property
    def dim(self) -> int:
        return len(self.masks)

    def occupations(self) -> np.ndarray:
        """Boolean (dim, L) table of site occupations."""
        return ((self.masks[:, None] >> np.arange(self.L)) & 1).astype(bool)


def _sign_below(masks: np.ndarray, i: int) -> np.ndarray:
    # (-1)^{number of occupied sites < i}
    return 1 - 2 * (_popcount(masks & ((1 << i) - 1)) & 1)


def one_body_operator(basis: FockBasis, h: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of ``sum_ij h[i, j] c_i^dag c_j`` in the fixed-N sector."""
    L = basis.L
    masks = basis.masks
    rows, cols, vals = [], [], []
    for j in range(L):
        has_j = (masks >> j) & 1 == 1
        src = np.nonzero(has_j)[0]
        m_j = masks[src]
        sgn_j = _sign_below(m_j, j)
        removed = m_j & ~(1 << j)
        for i in range(L):
            if h[i, j] == 0:
                continue
            ok = ((removed >> i) & 1) == 0
            if not np.any(ok):
                continue
            new = removed[ok] | (1 << i)
            sgn = sgn_j[ok] * _sign_below(removed[ok], i)
            rows.append(np.array([basis.index[int(m)] for m in new]))
            cols.append(src[ok])
            vals.append(h[i, j] * sgn)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    return sp.csr_matrix(
        (np.concatenate(vals).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )


@dataclass
class FockState:
    basis: FockBasis
    psi: np.ndarray
    t: float = 0.0

    def normalized(self) -> "FockState":
        return FockState(self.basis, self.psi / np.linalg.norm(self.psi), self.t)


def lift_basis_state(basis: FockBasis, sites) -> FockState:
    """Fock state of fermions on ``sites`` (any order; created in ascending order)."""
    mask = sum(1 << int(s) for s in sites)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index[mask]] = 1.0
    return FockState(basis, psi)


def lift_gaussian(state: GaussianState, basis: FockBasis | None = None) -> FockState:
    """Amplitudes ``<S|psi> = det U[S, :]`` of a Slater determinant."""
    L, N = state.U.shape
    basis = FockBasis.build(L, N) if basis is None else basis
    occ = basis.occupations()
    rows = np.nonzero(occ)[1].reshape(basis.dim, N)
    psi = np.linalg.det(state.U[rows, :])
    return FockState(basis, psi, state.t)


def fock_correlation(fs: FockState) -> np.ndarray:
    """``G[i, j] = <c_i^dag c_j>`` from the many-body wavefunction."""
    basis = fs.basis
    L, N = basis.L, basis.N
    lower = FockBasis.build(L, N - 1) if N > 1 else None
    psi = fs.psi / np.linalg.norm(fs.psi)
    dim_lower = lower.dim if lower is not None else 1
    # column j holds c_j |psi> in the (N-1)-particle sector
    ann = np.zeros((dim_lower, L), dtype=complex)
    for j in range(L):
        src = np.nonzero((basis.masks >> j) & 1)[0]
        m = basis.masks[src]
        sgn = _sign_below(m, j)
        if lower is None:
            tgt = np.zeros(len(src), dtype=int)
        else:
            tgt = np.array([lower.index[int(x)] for x in m & ~(1 << j)])
        np.add.at(ann[:, j], tgt, sgn * psi[src])
    return ann.conj().T @ ann


def prefix_entropy(fs: FockState, ell: int) -> float:
    """Entanglement entropy of sites ``[0, ell)`` from the Schmidt decomposition.

    With ascending-site ordering all creation operators of the prefix come
    first, so the amplitude matrix ``Psi[a, b]`` needs no extra sign.
    """
    basis = fs.basis
    a = basis.masks & ((1 << ell) - 1)
    b = basis.masks >> ell
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    M = np.zeros((len(ua), len(ub)), dtype=complex)
    M[ia, ib] = fs.psi / np.linalg.norm(fs.psi)
    sv = np.linalg.svd(M, compute_uv=False)
    p = sv**2
    p = p[p > 1e-300]
    return float(-(p * np.log(p)).sum())


def number_distribution(fs: FockState, region) -> np.ndarray:
    """Full counting statistics ``P(N_A = n)`` for ``n = 0..|A|``."""
    mask = sum(1 << int(i) for i in region)
    n = _popcount(fs.basis.masks & mask)
    w = np.abs(fs.psi) ** 2
    return np.bincount(n, weights=w / w.sum(), minlength=len(region) + 1)


def cumulants_from_distribution(P: np.ndarray) -> tuple[float, float]:
    """Second and fourth cumulants of an integer distribution."""
    n = np.arange(len(P))
    mu = (P * n).sum()
    d = n - mu
    m2 = (P * d**2).sum()
    m4 = (P * d**4).sum()
    return float(m2), float(m4 - 3 * m2**2)


def many_body_hamiltonian(basis: FockBasis, J: float) -> sp.csr_matrix:
    """``J sum_i (c_{i+1}^dag c_i + h.c.)`` on the periodic chain."""
    return one_body_operator(basis, hopping_matrix(basis.L, J))


def bond_operator(basis: FockBasis, k: int, theta: float) -> sp.csr_matrix:
    """``M_k = d_k^dag d_k`` with ``d_k = cos(theta/4) c_k + sin(theta/4) c_{k+1}``."""
    L = basis.L
    v = np.zeros(L)
    v[k % L] += math.cos(theta / 4)
    v[(k + 1) % L] += math.sin(theta / 4)
    return one_body_operator(basis, np.outer(v, v))


class HoppingPropagator:
    """``exp(i dt H_MB)`` from a dense eigendecomposition computed once."""

    def __init__(self, basis: FockBasis, J: float, dt: float):
        self.H = many_body_hamiltonian(basis, J)
        self.dt = dt
        self.identity = J == 0
        self._eig = None
        if not self.identity and basis.dim <= DENSE_HOP_MAX:
            w, V = np.linalg.eigh(self.H.toarray())
            self._eig = (np.exp(1j * dt * w), V)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        if self.identity:
            return psi
        if self._eig is None:
            return expm_multiply(1j * self.dt * self.H, psi)
        ph, V = self._eig
        return V @ (ph * (V.conj().T @ psi))


def apply_many_body_hopping(fs: FockState, prop: HoppingPropagator) -> FockState:
    return FockState(fs.basis, prop(fs.psi), fs.t)


def apply_many_body_kraus(fs: FockState, M: sp.spmatrix, A: float, normalize: bool = True) -> FockState:
    """``psi <- [1 + (e^A - 1) M] psi``; exact because ``M`` is a projector."""
    psi = fs.psi + math.expm1(A) * (M @ fs.psi)
    if normalize:
        psi = psi / np.linalg.norm(psi)
    return FockState(fs.basis, psi, fs.t)


class FockEngine:
    """Many-body version of one time step: exact hopping, rank-1 Kraus operators, renormalization."""

    def __init__(self, params: ModelParams, basis: FockBasis | None = None):
        self.params = params
        self.basis = FockBasis.build(params.L, params.N) if basis is None else basis
        J = 0.0 if params.measurement_only else params.J
        self.hop = HoppingPropagator(self.basis, J, params.dt)
        self.bond_ops = [bond_operator(self.basis, k, params.theta) for k in range(params.L)]

    def bonds(self, parity: int) -> range:
        return range(parity, self.params.L, 2)

    def expectation(self, fs: FockState, k: int) -> float:
        psi = fs.psi
        return float(np.vdot(psi, self.bond_ops[k] @ psi).real / np.vdot(psi, psi).real)

    def apply_hopping(self, fs: FockState) -> FockState:
        return apply_many_body_hopping(fs, self.hop)

    def apply_layer(self, fs: FockState, parity: int, A=None, draws=None) -> tuple[FockState, np.ndarray]:
        """Kraus layer of one parity, normalized once. Uses the given ``A`` or builds it from ``draws``."""
        ks = self.bonds(parity)
        if A is None:
            gdt = self.params.gamma * self.params.dt
            m = np.array([self.expectation(fs, k) for k in ks])
            A = (2 * m - 1) * gdt + math.sqrt(gdt) * np.asarray(draws)
        for k, a in zip(ks, A):
            fs = apply_many_body_kraus(fs, self.bond_ops[k], a, normalize=False)
        return fs.normalized(), np.asarray(A)


@dataclass
class OracleReport:
    n_steps: int
    mode: str
    max_dG: float
    max_dS: float
    max_dC2: float
    max_dC4: float
    per_step: list = field(repr=False, default_factory=list)

    @property
    def max_deviation(self) -> float:
        """``max_t ||G_fock - G_gauss||_max``."""
        return self.max_dG

    def passed(self, tol: float = 1e-8) -> bool:
        return self.max_dG < tol

    def to_dict(self, params: ModelParams | None = None) -> dict:
        out = {
            "max_deviation": self.max_dG,
            "steps": self.n_steps,
            "mode": self.mode,
            "max_entropy_deviation": self.max_dS,
            "max_C2_deviation": self.max_dC2,
            "max_C4_deviation": self.max_dC4,
        }
        if params is not None:
            out["params"] = {
                "L": params.L, "N": params.N, "J": params.J, "gamma": params.gamma,
                "theta_over_pi": params.theta / math.pi, "dt": params.dt,
                "measurement_only": params.measurement_only,
            }
        return out


def oracle_trajectory_compare(
    params: ModelParams,
    master_seed: int,
    trajectory_id: int = 0,
    n_steps: int = 50,
    mode: str = "shared",
    method: str = "householder",
) -> OracleReport:
    """Run the Gaussian engine and the many-body engine side by side on one trajectory.

    ``mode="shared"`` feeds the Gaussian ``A_k`` into the many-body Kraus
    operators. ``mode="strict"`` gives each engine its own copy of the noise
    stream and recomputes ``<M_k>`` from the many-body state; both streams
    must stay in step. Differences in ``G`` and in the half-chain entropy and
    cumulants are recorded after every step.
    """
    if mode not in ("shared", "strict"):
        raise ParameterError(f"mode must be 'shared' or 'strict', got {mode!r}")
    L = params.L
    engine = FockEngine(params)
    init_seed, _ = trajectory_seeds(master_seed, trajectory_id)
    gs = init_random_occupation(params, init_seed)
    sites = np.nonzero(np.abs(gs.U).sum(axis=1) > 0.5)[0]
    fs = lift_basis_state(engine.basis, sites)
    noise_g = NoiseStream(master_seed, trajectory_id, L)
    noise_f = NoiseStream(master_seed, trajectory_id, L) if mode == "strict" else None
    prop = Propagator.for_params(params, "dense")
    half = np.arange(L // 2)
    report = OracleReport(n_steps, mode, 0.0, 0.0, 0.0, 0.0)
    for step in range(n_steps):
        record: list = []
        if not params.measurement_only:
            apply_hopping(gs, prop)
        fs = engine.apply_hopping(fs)
        for parity in (EVEN, ODD):
            apply_measurement_layer(gs, parity, noise_g, params, method, record)
            if mode == "shared":
                fs, _ = engine.apply_layer(fs, parity, A=record[-1][1])
            else:
                fs, _ = engine.apply_layer(fs, parity, draws=noise_f.next_layer(parity))
                if noise_f.layers_consumed != noise_g.layers_consumed:
                    raise NoiseDesyncError(f"noise streams diverged at step {step}")
        gs.t += params.dt
        fs.t = gs.t
        G = correlation_matrix(gs)
        Gf = fock_correlation(fs)
        S_g = entanglement_entropy(G, half)
        S_f = prefix_entropy(fs, L // 2)
        c2_g, c4_g = charge_cumulants(G, half)
        c2_f, c4_f = cumulants_from_distribution(number_distribution(fs, half))
        row = (abs(G - Gf).max(), abs(S_g - S_f), abs(c2_g - c2_f), abs(c4_g - c4_f))
        report.per_step.append(row)
        report.max_dG = max(report.max_dG, float(row[0]))
        report.max_dS = max(report.max_dS, row[1])
        report.max_dC2 = max(report.max_dC2, row[2])
        report.max_dC4 = max(report.max_dC4, row[3])
    return report
