"""Discrete-time monitored evolution of a Gaussian state.

One time step is

    U <- N[ exp(sum_odd M^(k)) N[ exp(sum_even M^(k)) exp(i dt H) U ] ]

with ``N`` the QR normalization and ``M^(k) = A_k v_k v_k^T`` the single-particle
image of the two-site measurement on bond ``k`` (sites ``k`` and ``k+1``,
periodic). Bonds are labelled from 0, and "even"/"odd" refers to that label.
Because ``v_k v_k^T`` is a projector, ``exp(M^(k)) = 1 + (exp(A_k) - 1) v_k v_k^T``
exactly, and bonds of equal parity have disjoint supports.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg.blas as blas

from .errors import NoiseDesyncError, ParameterError
from .state import GaussianState, ModelParams, orthonormalize

EVEN, ODD = 0, 1
_INIT_KEY, _NOISE_KEY = 0, 1


def _parity(parity) -> int:
    if parity in (EVEN, "even"):
        return EVEN
    if parity in (ODD, "odd"):
        return ODD
    raise ParameterError(f"parity must be 'even' or 'odd', got {parity!r}")


def bond_sites(L: int, parity) -> tuple[np.ndarray, np.ndarray]:
    """Left and right sites of all bonds of one parity."""
    left = np.arange(_parity(parity), L, 2)
    return left, (left + 1) % L


def trajectory_seeds(master_seed: int, trajectory_id: int):
    """Independent seed sequences for the initial occupation and the noise of one trajectory."""
    entropy = int(master_seed) % 2**64
    return (
        np.random.SeedSequence(entropy, spawn_key=(int(trajectory_id), _INIT_KEY)),
        np.random.SeedSequence(entropy, spawn_key=(int(trajectory_id), _NOISE_KEY)),
    )


class NoiseStream:
    """Standard-normal draws for the measurement record of one trajectory.

    Layout is ``(step, parity, bond)`` lexicographic: every step consumes
    ``L/2`` draws for the even layer followed by ``L/2`` for the odd layer.
    The stream depends only on ``(master_seed, trajectory_id)``; draws are
    generated in blocks, which does not change the sequence.
    """

    def __init__(self, master_seed: int, trajectory_id: int, L: int, block_steps: int = 512):
        if L % 2:
            raise ParameterError(f"L must be even, got {L}")
        self.master_seed = int(master_seed)
        self.trajectory_id = int(trajectory_id)
        self.L = L
        self._rng = np.random.default_rng(trajectory_seeds(master_seed, trajectory_id)[1])
        self._block_steps = block_steps
        self._buf = np.empty((0, L))
        self._row = 0
        self.layers_consumed = 0

    def _refill(self):
        self._buf = self._rng.standard_normal((self._block_steps, self.L))
        self._row = 0

    def next_step(self) -> np.ndarray:
        """Draws for a full step: even-layer draws then odd-layer draws."""
        if self.layers_consumed % 2:
            raise NoiseDesyncError("next_step() called in the middle of a step")
        if self._row >= len(self._buf):
            self._refill()
        out = self._buf[self._row]
        self._row += 1
        self.layers_consumed += 2
        return out

    def next_layer(self, parity) -> np.ndarray:
        p = _parity(parity)
        if self.layers_consumed % 2 != p:
            raise NoiseDesyncError(
                f"requested {('even', 'odd')[p]} layer after {self.layers_consumed} layers"
            )
        if p == EVEN:
            if self._row >= len(self._buf):
                self._refill()
            out = self._buf[self._row, : self.L // 2]
        else:
            out = self._buf[self._row, self.L // 2:]
            self._row += 1
        self.layers_consumed += 1
        return out

    @property
    def steps_consumed(self) -> int:
        return self.layers_consumed // 2


class RecordedNoise:
    """Replays a fixed array of draws with shape ``(steps, L)``; same interface as NoiseStream."""

    def __init__(self, draws):
        self.draws = np.asarray(draws, dtype=float)
        self.L = self.draws.shape[1]
        self.layers_consumed = 0

    def next_step(self) -> np.ndarray:
        if self.layers_consumed % 2:
            raise NoiseDesyncError("next_step() called in the middle of a step")
        out = self.draws[self.layers_consumed // 2]
        self.layers_consumed += 2
        return out

    def next_layer(self, parity) -> np.ndarray:
        p = _parity(parity)
        if self.layers_consumed % 2 != p:
            raise NoiseDesyncError(f"requested parity {p} after {self.layers_consumed} layers")
        row = self.draws[self.layers_consumed // 2]
        self.layers_consumed += 1
        half = self.L // 2
        return row[:half] if p == EVEN else row[half:]

    @property
    def steps_consumed(self) -> int:
        return self.layers_consumed // 2


def hopping_matrix(L: int, J: float) -> np.ndarray:
    """Single-particle hopping matrix ``H[i, j] = J (delta_{i,j+1} + delta_{i,j-1})``, periodic."""
    H = np.zeros((L, L))
    i = np.arange(L)
    H[i, (i + 1) % L] += J
    H[(i + 1) % L, i] += J
    return H


class Propagator:
    """The single-particle unitary ``exp(i dt H)`` of the periodic hopping chain.

    ``method="fft"`` diagonalizes the circulant in momentum space, with
    dispersion ``2 J cos k``. ``method="dense"`` multiplies by the explicit
    L x L unitary, which is faster for small L on a single core.
    ``method="auto"`` picks between them by system size.
    """

    DENSE_MAX_L = 48

    def __init__(self, L: int, J: float, dt: float, method: str = "fft", dispersion=None):
        self.L, self.J, self.dt = L, float(J), float(dt)
        k = 2 * np.pi * np.arange(L) / L
        eps = 2 * self.J * np.cos(k) if dispersion is None else np.asarray(dispersion(k), float)
        self.phases = np.exp(1j * dt * eps)
        if method == "auto":
            method = "dense" if L <= self.DENSE_MAX_L else "fft"
        if method not in ("fft", "dense"):
            raise ParameterError(f"unknown propagator method {method!r}")
        self.method = method
        self._dense = None
        if method == "dense":
            self._dense = np.asfortranarray(self.matrix())

    @classmethod
    def for_params(cls, params: ModelParams, method: str = "fft") -> "Propagator":
        return cls(params.L, params.J, params.dt, method)

    def matrix(self) -> np.ndarray:
        """Dense L x L unitary, assembled from the momentum-space phases."""
        if self._dense is not None:
            return self._dense
        return np.fft.ifft(self.phases[:, None] * np.fft.fft(np.eye(self.L), axis=0), axis=0)

    @property
    def is_identity(self) -> bool:
        return self.J == 0.0

    def apply(self, U: np.ndarray) -> np.ndarray:
        if U.shape[0] != self.L:
            raise ParameterError(f"propagator built for L={self.L}, state has L={U.shape[0]}")
        if self._dense is not None:
            return blas.zgemm(1.0, self._dense, U)
        # transform along rows of the C-ordered transpose so the result is Fortran-ordered
        return np.fft.ifft(np.fft.fft(U.T, axis=1) * self.phases, axis=1).T


def apply_hopping(state: GaussianState, prop: Propagator) -> GaussianState:
    """Multiply every mode by ``exp(i dt H)``; orthonormality is preserved."""
    if not prop.is_identity:
        state.U = prop.apply(np.asfortranarray(state.U))
    return state


def measurement_expectation(state: GaussianState, bond: int, theta: float) -> float:
    """``<M_k> = sum_l |U[k, l] cos(theta/4) + U[k+1, l] sin(theta/4)|^2`` (bond label from 0)."""
    U = state.U
    L = U.shape[0]
    proj = math.cos(theta / 4) * U[bond % L] + math.sin(theta / 4) * U[(bond + 1) % L]
    return float(np.vdot(proj, proj).real)


def bond_expectations(U: np.ndarray, parity, theta: float) -> np.ndarray:
    """``<M_k>`` for all bonds of one parity, in ascending bond order."""
    a, b = bond_sites(U.shape[0], parity)
    proj = math.cos(theta / 4) * U[a] + math.sin(theta / 4) * U[b]
    return np.einsum("ij,ij->i", proj.conj(), proj).real


def kraus_strengths(expect: np.ndarray, draws: np.ndarray, gamma: float, dt: float) -> np.ndarray:
    """``A_k = (2 <M_k> - 1) gamma dt + dxi_k`` with ``dxi_k = sqrt(gamma dt) * draw``."""
    return (2.0 * expect - 1.0) * (gamma * dt) + math.sqrt(gamma * dt) * draws


def apply_bond_kraus(U: np.ndarray, bond: int, A: float, theta: float) -> np.ndarray:
    """In-place ``U <- (1 + (e^A - 1) v v^T) U`` for a single bond (no normalization)."""
    L = U.shape[0]
    c, s = math.cos(theta / 4), math.sin(theta / 4)
    i, j = bond % L, (bond + 1) % L
    f = math.expm1(A)
    proj = c * U[i] + s * U[j]
    U[i] += (c * f) * proj
    U[j] += (s * f) * proj
    return U


def _pair_views(U: np.ndarray):
    # (2, L/2, N) view: [0] = even sites, [1] = odd sites; requires Fortran order
    return U.reshape((2, U.shape[0] // 2, U.shape[1]), order="F")


def _layer_update(U: np.ndarray, parity: int, draws, gdt, sig, c: float, s: float):
    """Kraus update of one parity layer in place on a Fortran-ordered ``U``; returns ``A_k``.

    ``A_k`` uses ``<M_k>`` of the incoming (orthonormal) ``U`` and standard
    normal ``draws``. With ``gdt=None`` the draws are used as ``A_k`` directly.
    """
    V = _pair_views(U)
    if parity == EVEN:
        left, right = V[0], V[1]
        proj = c * left + s * right
    else:
        # bond 2m+1 couples odd site 2m+1 with even site 2m+2 (mod L)
        left, right = V[1], V[0]
        proj = c * left
        proj[:-1] += s * right[1:]
        proj[-1] += s * right[0]
    if gdt is None:
        A = np.asarray(draws, dtype=float)
    else:
        m = np.einsum("ij,ij->i", proj.real, proj.real) + np.einsum("ij,ij->i", proj.imag, proj.imag)
        A = (2.0 * m - 1.0) * gdt + sig * draws
    proj *= np.expm1(A)[:, None]
    left += c * proj
    proj *= s
    if parity == EVEN:
        right += proj
    else:
        right[1:] += proj[:-1]
        right[0] += proj[-1]
    return A


def apply_kraus_layer(U: np.ndarray, parity, A: np.ndarray, theta: float) -> np.ndarray:
    """Rank-1 Kraus updates ``1 + (e^A - 1) v v^T`` on all bonds of one parity (no normalization).

    Works in place when ``U`` is Fortran-ordered; always use the return value.
    """
    U = np.asfortranarray(U)
    _layer_update(U, _parity(parity), A, None, None, math.cos(theta / 4), math.sin(theta / 4))
    return U


def apply_measurement_layer(
    state: GaussianState,
    parity,
    noise,
    params: ModelParams,
    method: str = "householder",
    record: list | None = None,
) -> GaussianState:
    """Measure every bond of one parity, then renormalize once.

    All ``<M_k>`` are evaluated in the state at the start of the layer. If
    ``record`` is a list, the strengths ``A_k`` used are appended to it.
    """
    p = _parity(parity)
    draws = noise.next_layer(p)
    gdt = params.gamma * params.dt
    c, s = params.orbital_weights
    U = np.asfortranarray(state.U)
    A = _layer_update(U, p, draws, gdt, math.sqrt(gdt), c, s)
    if record is not None:
        record.append((p, A))
    state.U = orthonormalize(U, method)
    return state


def step(
    state: GaussianState,
    params: ModelParams,
    prop: Propagator,
    noise,
    method: str = "householder",
    record: list | None = None,
) -> GaussianState:
    """One full time step: hopping, even layer + QR, odd layer + QR; advances ``t`` by ``dt``."""
    if not params.measurement_only:
        apply_hopping(state, prop)
    apply_measurement_layer(state, EVEN, noise, params, method, record)
    apply_measurement_layer(state, ODD, noise, params, method, record)
    state.t += params.dt
    return state


def step_sequential(
    state: GaussianState,
    params: ModelParams,
    prop: Propagator,
    noise,
    method: str = "householder",
) -> GaussianState:
    """Comparison protocol: bonds measured one by one from left to right, each followed by QR.

    Consumes the same draws as :func:`step` (bond ``k`` uses the draw at its
    position in the ``(parity, bond)`` layout).
    """
    L = params.L
    if not params.measurement_only:
        apply_hopping(state, prop)
    draws = noise.next_step()
    gdt = params.gamma * params.dt
    for k in range(L):
        m = measurement_expectation(state, k, params.theta)
        xi = draws[(k % 2) * (L // 2) + k // 2]
        A = (2 * m - 1) * gdt + math.sqrt(gdt) * xi
        apply_bond_kraus(state.U, k, A, params.theta)
        state.U = orthonormalize(state.U, method)
    state.t += params.dt
    return state


class Evolver:
    """Fast stepping loop for one trajectory.

    Same arithmetic as repeated :func:`step` calls, but with the propagator
    choice left to system size and the Cholesky-QR normalization by default.
    """

    def __init__(self, params: ModelParams, noise, propagator: str = "auto", qr_method: str = "cholesky"):
        self.params = params
        self.noise = noise
        self.qr_method = qr_method
        self.prop = None
        if not params.measurement_only and params.J != 0:
            self.prop = Propagator.for_params(params, propagator)
        self._c, self._s = params.orbital_weights
        self._gdt = params.gamma * params.dt
        self._sig = math.sqrt(self._gdt)

    def advance(self, state: GaussianState, n_steps: int) -> GaussianState:
        half = self.params.L // 2
        gdt, sig, c, s, method = self._gdt, self._sig, self._c, self._s, self.qr_method
        U = np.asfortranarray(state.U)
        for _ in range(n_steps):
            if self.prop is not None:
                U = self.prop.apply(U)
            draws = self.noise.next_step()
            _layer_update(U, EVEN, draws[:half], gdt, sig, c, s)
            U = orthonormalize(U, method)
            _layer_update(U, ODD, draws[half:], gdt, sig, c, s)
            U = orthonormalize(U, method)
        state.U = U
        state.t += n_steps * self.params.dt
        return state
