"""Observables of a pure Gaussian state, computed from its correlation matrix ``G``.

Entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy, zeta

from .errors import ConsistencyError, ParameterError

CLAMP_TOL = 1e-12
HERMITIAN_TOL = 1e-10


def _region(region, L: int) -> np.ndarray:
    idx = np.asarray(region, dtype=int).ravel()
    if idx.size == 0:
        raise ParameterError("region must be non-empty")
    if idx.min() < -L or idx.max() >= L:
        raise ParameterError(f"region indices outside [0, {L})")
    return idx % L


def half_chain(L: int) -> np.ndarray:
    return np.arange(L // 2)


def antipodal_regions(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Regions [0, L/4) and [L/2, 3L/4)."""
    q = L // 4
    return np.arange(q), np.arange(L // 2, L // 2 + q)


def subsystem_spectrum(G: np.ndarray, region) -> np.ndarray:
    """Eigenvalues of the restriction of ``G`` to ``region``, clamped to [0, 1]."""
    idx = _region(region, G.shape[0])
    sub = G[np.ix_(idx, idx)]
    herm = np.abs(sub - sub.conj().T).max()
    if herm > HERMITIAN_TOL:
        raise ConsistencyError(f"correlation submatrix not Hermitian (deviation {herm:.2e})")
    lam = np.linalg.eigvalsh(sub)
    lam = np.clip(lam, 0.0, 1.0)
    lam[lam < CLAMP_TOL] = 0.0
    lam[lam > 1.0 - CLAMP_TOL] = 1.0
    return lam


def entropy_from_spectrum(lam: np.ndarray) -> float:
    return float(-(xlogy(lam, lam) + xlogy(1.0 - lam, 1.0 - lam)).sum())


def cumulants_from_spectrum(lam: np.ndarray) -> tuple[float, float]:
    """Second and fourth charge cumulants, each a sum of independent Bernoulli cumulants."""
    v = lam * (1.0 - lam)
    return float(v.sum()), float((v * (1.0 - 6.0 * v)).sum())


def entanglement_entropy(G: np.ndarray, region) -> float:
    """Von Neumann entropy ``-sum[lam ln lam + (1-lam) ln(1-lam)]`` of ``region``."""
    return entropy_from_spectrum(subsystem_spectrum(G, region))


def charge_cumulants(G: np.ndarray, region) -> tuple[float, float]:
    """(C2, C4) of the particle number in ``region``.

    ``C2 = sum lam(1-lam)`` and ``C4 = sum lam(1-lam)(1-6lam+6lam^2)``.
    """
    return cumulants_from_spectrum(subsystem_spectrum(G, region))


def klich_levitov_partial(C2: float, C4: float | None = None) -> float:
    """Entropy estimate from the even-cumulant series truncated after C2 (and C4)."""
    s = 2 * zeta(2) * C2
    if C4 is not None:
        s += 2 * zeta(4) * C4
    return float(s)


def pair_correlation(G: np.ndarray) -> np.ndarray:
    """Translation-averaged ``Cbar(x) = (1/L) sum_i C[i, i+x]`` with ``C_ij = G_ij delta_ij - G_ij G_ji``."""
    L = G.shape[0]
    w = np.abs(G) ** 2
    # rotate row i left by i so column x holds |G[i, i+x]|^2
    i = np.arange(L)
    shifted = w[i[:, None], (i[:, None] + i[None, :]) % L]
    cbar = -shifted.mean(axis=0)
    cbar[0] += np.trace(G).real / L
    return cbar


def momentum_correlation(cbar: np.ndarray) -> np.ndarray:
    """``C(q_n) = sum_x exp(-i q_n x) Cbar(x)`` with ``q_n = 2 pi n / L``."""
    return np.fft.fft(np.asarray(cbar, dtype=float)).real


def momenta(L: int) -> np.ndarray:
    return 2 * np.pi * np.arange(L) / L


def rescaled_momentum(q) -> np.ndarray:
    """``q~ = 2 sin(q/2)``."""
    return 2 * np.sin(np.asarray(q) / 2)


def number_covariance(G: np.ndarray, A=None, B=None) -> float:
    """``G_AB = sum_{i in A, j in B} |G_ij|^2 = <N_A><N_B> - <N_A N_B>``.

    Defaults to the antipodal quarter-chains.
    """
    L = G.shape[0]
    if A is None and B is None:
        A, B = antipodal_regions(L)
    a, b = _region(A, L), _region(B, L)
    if np.intersect1d(a, b).size:
        raise ParameterError("regions A and B overlap")
    return float((np.abs(G[np.ix_(a, b)]) ** 2).sum())


@dataclass
class ObservableRecord:
    """Observables of one state at time ``t`` (half-chain region, antipodal quarters)."""

    t: float
    S_half: float
    C2_half: float
    C4_half: float
    Cbar: np.ndarray
    Cq: np.ndarray
    G_AB: float

    SCALARS = ("S_half", "C2_half", "C4_half", "G_AB")
    VECTORS = ("Cbar", "Cq")


def measure(G: np.ndarray, t: float = 0.0) -> ObservableRecord:
    L = G.shape[0]
    lam = subsystem_spectrum(G, half_chain(L))
    c2, c4 = cumulants_from_spectrum(lam)
    cbar = pair_correlation(G)
    return ObservableRecord(
        t=t,
        S_half=entropy_from_spectrum(lam),
        C2_half=c2,
        C4_half=c4,
        Cbar=cbar,
        Cq=momentum_correlation(cbar),
        G_AB=number_covariance(G),
    )


def fermi_sea_correlation(L: int, N: int | None = None) -> np.ndarray:
    """Correlation matrix of N plane waves with contiguous momenta (a filled Fermi sea)."""
    N = L // 2 if N is None else N
    n = np.arange(N) - N // 2
    k = 2 * np.pi * n / L
    x = np.arange(L)
    U = np.exp(1j * np.outer(x, k)) / math.sqrt(L)
    return U.conj() @ U.T
