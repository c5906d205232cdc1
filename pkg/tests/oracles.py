"""Independent reference computations used to freeze expected values.

Nothing here calls into the package's spectral machinery: each oracle
evaluates the defining real-space formula by adaptive quadrature.
"""
import numpy as np
from scipy import integrate, special


def frac_constant(s):
    """Normalizing constant of the singular-integral form of ``(-Delta)^{s/2}`` in 1d."""
    return s * 2.0 ** (s - 1) * special.gamma((1 + s) / 2) / (np.sqrt(np.pi) * special.gamma(1 - s / 2))


def periodic_kernel(y, s, L):
    """``sum_m |y + 2Lm|^{-1-s}`` for ``0 < y < 2L``."""
    period = 2.0 * L
    return period ** (-1 - s) * (special.zeta(1 + s, y / period) + special.zeta(1 + s, 1 - y / period))


def frac_laplacian_pv(f, x, s, L):
    """``-(-Delta)^{s/2} f(x)`` for a ``2L``-periodic ``f`` by principal-value quadrature.

    The even-symmetric second difference cancels the singularity at the origin.
    """
    c = frac_constant(s)

    def integrand(y):
        return (2 * f(x) - f(x + y) - f(x - y)) * periodic_kernel(y, s, L)

    val, _ = integrate.quad(integrand, 0.0, L, limit=400, epsabs=1e-12, epsrel=1e-10, points=[1.0, 4.0])
    return -c * val


def gamma_form_pv(f, g, x, alpha, L):
    """``C int (f(y)-f(x))(g(y)-g(x)) |x-y|^{-1-alpha} dy`` for ``2L``-periodic ``f, g``."""
    c = frac_constant(alpha)

    def integrand(y):
        return (f(x + y) - f(x)) * (g(x + y) - g(x)) * periodic_kernel(y, alpha, L)

    pts = list(np.linspace(0, 2 * L, 17)[1:-1])
    val, _ = integrate.quad(integrand, 0.0, 2 * L, limit=800, epsabs=1e-13, epsrel=1e-12, points=pts)
    return c * val


def bump_mass(d):
    """Mass of ``exp(-1/(1-|x|^2))`` on the unit ball."""
    if d == 1:
        return 2 * integrate.quad(lambda r: np.exp(-1 / (1 - r * r)), 0, 1, epsabs=1e-15)[0]
    return 2 * np.pi * integrate.quad(lambda r: r * np.exp(-1 / (1 - r * r)), 0, 1, epsabs=1e-15)[0]


def mollify_trapezoid(f, x, n, nodes=4001):
    """``(f * rho_n)(x)`` in 1d by the trapezoid rule on the support of ``rho_n``."""
    y = np.linspace(-1.0 / n, 1.0 / n, nodes)
    r = np.clip(np.abs(n * y), 0, 1 - 1e-16)
    w = np.where(np.abs(n * y) < 1, np.exp(-1 / (1 - r * r)), 0.0) * n / bump_mass(1)
    x = np.atleast_1d(x)
    return np.array([integrate.trapezoid(f(xi - y) * w, y) for xi in x])
