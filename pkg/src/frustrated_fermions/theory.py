"""Closed-form long-wavelength predictions for the monitored chain.

Conventions: ``delta = theta - pi``; ``alpha`` is the Levy exponent of the
temporal kernel (3/2 at theta = pi, 2 for ordinary diffusion); ``r`` is the
subsystem fraction ``ell / L``. Divergent points return ``math.inf`` where a
marker is the natural answer and raise :class:`DivergenceError` where the
formula has no meaning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.special import zeta

from .errors import DivergenceError, ParameterError

#: coefficient of |q l0|^(2/3) in the superdiffusive branch of C(q)
SUPERDIFFUSIVE_COEFF = 2 ** (-2 / 3) * 3 ** (-1 / 2)
CATALAN = 0.915965594177219015054603514932


@dataclass(frozen=True)
class TheoryPrediction:
    name: str
    value: float
    formula: str


def _abs_cos_half(theta: float) -> float:
    # |cos(theta/2)| written as sin((pi - theta)/2): exact zero at theta = pi, exact one at 0
    return abs(math.sin((math.pi - theta) / 2))


def gamma_k(gamma: float, theta: float, k):
    """Momentum-resolved decay rate ``gamma (1 + sin(theta/2) cos k)``."""
    return gamma * (1 + math.sin(theta / 2) * np.cos(k))


def diffusion_coefficient(J: float, gamma: float, theta: float) -> float:
    """``D = (4J^2/gamma) / (1 + |cos(theta/2)|) + (gamma/4)(1 - |cos(theta/2)|)``."""
    if gamma <= 0:
        raise DivergenceError("diffusion coefficient diverges at gamma = 0")
    c = _abs_cos_half(theta)
    return 4 * J**2 / gamma / (1 + c) + gamma / 4 * (1 - c)


def diffusion_coefficient_integral(J: float, gamma: float, theta: float) -> float:
    """Brillouin-zone integral ``int (dk/2pi) [xi_k'^2 + gamma_k'^2 / 4] / gamma_k`` defining D."""
    s = math.sin(theta / 2)

    def f(k):
        gk = gamma * (1 + s * math.cos(k))
        if gk == 0.0:
            return 0.0
        dxi = -2 * J * math.sin(k)
        dg = -gamma * s * math.sin(k)
        return (dxi**2 + dg**2 / 4) / gk

    val, _ = integrate.quad(f, -math.pi, math.pi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val / (2 * math.pi)


def mean_free_path(J: float, gamma: float, theta: float) -> float:
    """``l0 = sqrt(D / gamma)``."""
    return math.sqrt(diffusion_coefficient(J, gamma, theta) / gamma)


def diffuson_kernel(gamma: float, theta: float, omega: float):
    """``B(omega) = [(gamma - i omega)^2 - gamma^2 sin^2(theta/2)]^(-1/2)``, principal branch.

    Returns ``math.inf`` at the pole ``theta = pi, omega = 0``. Only ``|B|``
    and ``Re B`` are validated; the phase for ``omega < 0`` is a convention.
    """
    z = (gamma - 1j * omega) ** 2 - gamma**2 * math.sin(theta / 2) ** 2
    if z == 0:
        return math.inf
    return 1 / np.sqrt(complex(z))


def diffuson_kernel_small_omega(gamma: float, theta: float, omega: float):
    """Leading small-frequency form of :func:`diffuson_kernel`."""
    if math.isclose(theta, math.pi, rel_tol=0, abs_tol=1e-15):
        if omega == 0:
            return math.inf
        return 1 / np.sqrt(-2j * gamma * complex(omega, 0.0))
    return 1 / (gamma * _abs_cos_half(theta))


def wiener_hopf_c0(alpha: float) -> float:
    """Amplitude ``c0 = 1 / sin(pi / alpha)`` of the saddle-point density response."""
    if not 1 <= alpha <= 2:
        raise ParameterError(f"alpha must lie in (1, 2], got {alpha}")
    s = math.sin(math.pi / alpha)
    if alpha == 1 or s < 1e-300:
        return math.inf
    return 1 / s


def _log_g(x: float, alpha: float) -> float:
    # ln g(x) = -(1/pi) int_0^inf dy ln(1 + (x y)^alpha) / (1 + y^2).
    # The y > 1 half is mapped to z = 1/y, which peels off the logarithmic
    # growth analytically: alpha (pi/4) ln x + alpha * Catalan.
    # For x < 1 use the reflection ln g(x) = ln g(1/x) - (alpha/2) ln x.
    if x < 1.0:
        return _log_g(1.0 / x, alpha) - alpha / 2 * math.log(x)
    # lower half in t = -ln y, split at the crossover y = 1/x
    def f(t):
        y = math.exp(-t)
        return math.log1p((x * y) ** alpha) * y / (1 + y * y)

    lx = math.log(x)
    lower = 0.0
    for a, b in ((0.0, lx), (lx, lx + 50.0)):
        if b > a:
            lower += integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-11, limit=200)[0]
    upper, _ = integrate.quad(
        lambda z: math.log1p((z / x) ** alpha) / (1 + z * z), 0.0, 1.0,
        epsabs=1e-14, epsrel=1e-11, limit=200,
    )
    upper += alpha * (math.pi / 4 * math.log(x) + CATALAN)
    return -(lower + upper) / math.pi


def wiener_hopf_c0_quadrature(alpha: float, x_max: float = 1e6) -> float:
    """Evaluate ``c0`` from its branch-cut integral representation by quadrature.

    ``c0 = sin(pi alpha / 2) / pi * int_0^inf dx x^(alpha-2) g(x)``. The
    integral is done in ``u = ln x`` up to ``x_max``; the remaining tail uses
    ``g(x) ~ x^(-alpha/2) (1 - kappa/x)`` with ``kappa = 1/sin(pi/alpha)``.
    Independent of :func:`wiener_hopf_c0`; used as a cross-check.
    """
    if not 1 < alpha < 2:
        raise ParameterError(f"quadrature path needs 1 < alpha < 2, got {alpha}")

    def integrand(u):
        x = math.exp(u)
        return x ** (alpha - 1) * math.exp(_log_g(x, alpha))

    u_max = math.log(x_max)
    lo = -40.0 / (alpha - 1)
    body = 0.0
    # piecewise on unit-length pieces of log x keeps quad well-conditioned
    edges = np.arange(math.floor(lo), math.ceil(u_max) + 1.0)
    edges[-1] = u_max
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-9)
        body += val
    kappa = 1 / math.sin(math.pi / alpha)
    p = alpha / 2 - 1
    tail = x_max**p / -p - kappa * x_max ** (p - 1) / (1 - p)
    return math.sin(math.pi * alpha / 2) / math.pi * (body + tail)


def _cos_series(r: float, s: float, tol: float) -> float:
    # sum_{n>=1} cos(n phi) / n^s. Summation by parts with the closed-form
    # partial sums D_n = sin((n+1/2) phi) / (2 sin(phi/2)) - 1/2 gives
    #   sum_{n>N} = -sin((N+1/2) phi) / (2 sin(phi/2)) (N+1)^(-s) + R,
    #   |R| <= s (N+1)^(-s-1) / (2 sin^2(phi/2)),
    # and N is chosen so that the bound on R is below tol.
    phi = 2 * math.pi * r
    sh = math.sin(phi / 2)
    N = int(math.ceil((s / (2 * sh * sh * tol)) ** (1 / (s + 1))))
    total = 0.0
    chunk = 1 << 20
    for start in range(1, N + 1, chunk):
        n = np.arange(start, min(start + chunk, N + 1), dtype=float)
        total += float(np.sum(np.cos(phi * n) * n ** (-s)))
    return total - math.sin((N + 0.5) * phi) / (2 * sh) * (N + 1) ** (-s)


def c_alpha_r(alpha: float, r: float, tol: float = 1e-8) -> float:
    """Dimensionless second-cumulant profile ``c_alpha(r)``.

    ``c_alpha(r) = 4 r / ((2 pi r)^(2/alpha) sin(pi/alpha)) [zeta(2/alpha) - Re Li_{2/alpha}(e^{2 pi i r})]``,
    with the polylogarithm summed directly to absolute accuracy ``tol``
    (rigorous remainder bound).
    """
    if alpha == 2:
        raise DivergenceError("c_alpha(r) diverges at alpha = 2 (logarithmic diffusive case)")
    if not 1 < alpha < 2:
        raise ParameterError(f"alpha must lie in (1, 2), got {alpha}")
    if not 0 < r <= 0.5:
        raise ParameterError(f"r must lie in (0, 1/2], got {r}; use c_alpha_r0 for r -> 0")
    s = 2 / alpha
    bracket = zeta(s) - _cos_series(r, s, tol)
    return float(4 * r / ((2 * math.pi * r) ** s * math.sin(math.pi / alpha)) * bracket)


def c_alpha_r0(alpha: float) -> float:
    """``lim_{r -> 0} c_alpha(r) = (4 / (pi alpha)) Gamma(-2/alpha)``."""
    if alpha == 2:
        raise DivergenceError("c_alpha(r) diverges at alpha = 2")
    if not 1 < alpha < 2:
        raise ParameterError(f"alpha must lie in (1, 2), got {alpha}")
    return 4 / (math.pi * alpha) * float(gamma_fn(-2 / alpha))


def c_alpha_half(alpha: float) -> float:
    """Closed form at ``r = 1/2``: ``4 (4^(1/alpha) - 1) zeta(2/alpha) / ((2 pi)^(2/alpha) sin(pi/alpha))``."""
    if not 1 < alpha < 2:
        raise ParameterError(f"alpha must lie in (1, 2), got {alpha}")
    s = 2 / alpha
    return float(4 * (4 ** (1 / alpha) - 1) * zeta(s) / ((2 * math.pi) ** s * math.sin(math.pi / alpha)))


def g0(alpha: float, ell0: float, theta: float = math.pi) -> float:
    """Stiffness of the scalar saddle-point action for the two universal cases."""
    if alpha == 1.5:
        return ell0 ** (2 / 3) / 2 ** (5 / 3)
    if alpha == 2:
        c = _abs_cos_half(theta)
        if c == 0:
            raise DivergenceError("diffusive stiffness diverges at theta = pi")
        return ell0 / (2 * math.sqrt(c))
    raise ParameterError(f"g0 is known only for alpha in {{3/2, 2}}, got {alpha}")


def second_cumulant_theory(J: float, gamma: float, L: float, r: float, alpha: float = 1.5, theta: float = math.pi) -> float:
    """``C2_A ~ g0 (r L)^(2/alpha - 1) c_alpha(r)``; valid for ``r L >> l0``."""
    ell0 = mean_free_path(J, gamma, theta)
    return g0(alpha, ell0, theta) * (r * L) ** (2 / alpha - 1) * c_alpha_r(alpha, r)


def entropy_theory(J: float, gamma: float, L: float, r: float = 0.5) -> float:
    """Entropy estimate ``(pi^2/3) C2`` at theta = pi."""
    return math.pi**2 / 3 * second_cumulant_theory(J, gamma, L, r)


def Cq_theory(J: float, gamma: float, theta: float, q, smooth: bool = False):
    """Density structure factor ``C(q)`` near ``theta = pi`` (three-regime crossover).

    Raw piecewise form: ``(2|delta|)^(-1/2) q l0`` below ``q l0 = |delta|^(3/2)``,
    ``2^(-2/3) 3^(-1/2) (q l0)^(2/3)`` up to ``q l0 = 1``, and the constant
    that makes it continuous beyond. ``smooth=True`` blends the branches with
    a soft minimum for plotting.
    """
    q = np.abs(np.asarray(q, dtype=float))
    ell0 = mean_free_path(J, gamma, theta)
    x = q * ell0
    ad = abs(theta - math.pi)
    super_ = SUPERDIFFUSIVE_COEFF * x ** (2 / 3)
    const = np.full_like(x, SUPERDIFFUSIVE_COEFF)
    diff = x / math.sqrt(2 * ad) if ad > 0 else np.full_like(x, np.inf)
    if smooth:
        p = 4.0
        with np.errstate(divide="ignore"):
            inv = sum(np.where(b > 0, b, np.inf) ** (-p) for b in (diff, super_, const))
            return inv ** (-1 / p)
    out = np.where(x < 1.0, super_, const)
    if ad > 0:
        out = np.where(x < ad**1.5, diff, out)
    return out


def branch_boundary_ratio() -> float:
    """Superdiffusive / diffusive branch ratio at ``q l0 = |delta|^(3/2)``: ``2^(-2/3) 3^(-1/2) sqrt(2)``."""
    return SUPERDIFFUSIVE_COEFF * math.sqrt(2)


def coupling_and_loc_length(J: float, gamma: float, theta: float) -> tuple[float, float, float]:
    """(g, l*, l_loc) with ``g = l0 |delta|^(-1/2) / sqrt(2)``, ``l* = l0 |delta|^(-3/2)``, ``l_loc = l* exp(4 pi g)``.

    The localization length carries an unknown O(1) prefactor, set to 1.
    """
    ad = abs(theta - math.pi)
    if ad == 0:
        return math.inf, math.inf, math.inf
    ell0 = mean_free_path(J, gamma, theta)
    g = ell0 / math.sqrt(2 * ad)
    ell_star = ell0 * ad**-1.5
    return g, ell_star, ell_star * math.exp(4 * math.pi * g)


def effective_exponent(J: float, gamma: float, theta: float) -> float:
    """``-d ln l_loc / d ln|delta|`` at fixed mean free path: ``3/2 + 2 pi g``."""
    g, _, _ = coupling_and_loc_length(J, gamma, theta)
    return 1.5 + 2 * math.pi * g


def prediction_table(J: float, gamma: float, theta: float, L: int | None = None) -> list[TheoryPrediction]:
    """Scalar predictions for one parameter point."""
    rows = [
        TheoryPrediction("gamma_min", float(gamma_k(gamma, theta, math.pi)), "gamma (1 - sin(theta/2))"),
        TheoryPrediction("D", diffusion_coefficient(J, gamma, theta), "4J^2/gamma/(1+|c|) + gamma/4 (1-|c|)"),
        TheoryPrediction("ell0", mean_free_path(J, gamma, theta), "sqrt(D/gamma)"),
        TheoryPrediction("c0_3/2", wiener_hopf_c0(1.5), "1/sin(pi/alpha)"),
        TheoryPrediction("c_3/2(0)", c_alpha_r0(1.5), "(4/(pi alpha)) Gamma(-2/alpha)"),
        TheoryPrediction("c_3/2(1/2)", c_alpha_r(1.5, 0.5), "polylog series"),
    ]
    g, ell_star, ell_loc = coupling_and_loc_length(J, gamma, theta)
    rows += [
        TheoryPrediction("g", g, "l0 |delta|^(-1/2) / sqrt(2)"),
        TheoryPrediction("ell_star", ell_star, "l0 |delta|^(-3/2)"),
        TheoryPrediction("ell_loc", ell_loc, "l* exp(4 pi g)"),
    ]
    if L is not None and math.isclose(theta, math.pi):
        c2 = second_cumulant_theory(J, gamma, L, 0.5)
        rows += [
            TheoryPrediction("C2_half", c2, "g0 (L/2)^(1/3) c_3/2(1/2)"),
            TheoryPrediction("S_half", math.pi**2 / 3 * c2, "(pi^2/3) C2"),
        ]
    return rows
