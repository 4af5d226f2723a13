"""Explicit constants of the convergence proof.

Everything is a closed form in ``(c, gamma, d, sigma)``.  Products of many
factors, and powers with exponent ``4d + 2 gamma``, are evaluated through
logarithms so that large dimensions do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ConstantOverflowError, DomainError

LOG_MAX = math.log(1.7e308)


def sigma_of(alpha: float) -> float:
    """``sigma = min{1, alpha / 2}``."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return min(1.0, alpha / 2.0)


def schedule(alpha: float, ell: int) -> tuple[float, float]:
    """``(alpha_ell, sigma_ell)`` with ``sigma_ell = sigma / 2^(ell+2)`` and
    ``alpha_ell = alpha - 2 sum_{nu < ell} sigma_nu``."""
    if ell < 0:
        raise DomainError("step index must be >= 0")
    s = sigma_of(alpha)
    # 2 sum_{nu<ell} s/2^(nu+2) = (s/2)(2)(1 - 2^-ell) = s (1 - 2^-ell)
    return alpha - s * (1.0 - 2.0 ** (-ell)), s / 2.0 ** (ell + 2)


def exponent(d: int, gamma: float) -> float:
    return 4 * d + 2 * gamma


def _log_pref(c, gamma):
    # log of 12 c^2 (2 gamma / e)^(2 gamma)
    return math.log(12.0) + 2 * math.log(c) + 2 * gamma * (math.log(2 * gamma) - 1.0)


def _exp(x):
    if x > LOG_MAX:
        raise ConstantOverflowError(f"constant exceeds double range (log = {x:.1f})")
    return math.exp(x)


def log_big_phi(x: float, c: float, gamma: float, d: int) -> float:
    if x <= 0:
        raise DomainError(f"Phi needs x > 0, got {x}")
    return _log_pref(c, gamma) - exponent(d, gamma) * math.log(x)


def big_phi(x: float, c: float, gamma: float, d: int) -> float:
    """``Phi(x) = 12 c^2 (2 gamma/e)^(2 gamma) x^(-4d - 2 gamma)``."""
    return _exp(log_big_phi(x, c, gamma, d))


def log_phi_sequence(ell: int, c: float, gamma: float, d: int, sigma: float) -> float:
    """``log phi_ell`` with ``phi_ell = prod_{nu < ell} Phi(sigma_nu)^(1/2^(nu+1))``."""
    return math.fsum(
        log_big_phi(sigma / 2.0 ** (nu + 2), c, gamma, d) / 2.0 ** (nu + 1) for nu in range(ell)
    )


def phi_sequence(ell: int, c: float, gamma: float, d: int, sigma: float) -> float:
    return _exp(log_phi_sequence(ell, c, gamma, d, sigma))


def log_phi_infinity(c: float, gamma: float, d: int, sigma: float) -> float:
    return _log_pref(c, gamma) + exponent(d, gamma) * math.log(4.0 / sigma)


def phi_infinity(c: float, gamma: float, d: int, sigma: float) -> float:
    """``12 c^2 (2 gamma/e)^(2 gamma) (4/sigma)^(4d + 2 gamma)``."""
    return _exp(log_phi_infinity(c, gamma, d, sigma))


def log_phi_limit(c: float, gamma: float, d: int, sigma: float) -> float:
    """Limit of ``log phi_ell`` as ``ell -> inf``, summed exactly.

    ``sum_nu (nu + 2) / 2^(nu+1) = 3``, so the product tends to
    ``12 c^2 (2 gamma/e)^(2 gamma) (8/sigma)^(4d + 2 gamma)``.  This is larger
    than :func:`phi_infinity` by ``2^(4d + 2 gamma)``.
    """
    return _log_pref(c, gamma) + exponent(d, gamma) * math.log(8.0 / sigma)


def phi_limit(c: float, gamma: float, d: int, sigma: float) -> float:
    return _exp(log_phi_limit(c, gamma, d, sigma))


def _min_factor(c, gamma, d):
    r = 2.0 ** (4 * (2 * d + gamma)) * 3.0 * c * (2 * gamma / math.e) ** (2 * gamma)
    return min(r / (1.0 + r), 1.0 - 3.0**d / 2.0 ** (6 * d - 1))


def xi_value(c: float, gamma: float, d: int, sigma: float) -> float:
    """Largest admissible ``xi``; ``eps* = xi / (4 c ||V||_alpha)``."""
    p = exponent(d, gamma)
    log_den = math.log(3.0 * c) + 2 * gamma * (math.log(2 * gamma) - 1.0) + p * math.log(4.0)
    return math.exp(p * math.log(sigma) - log_den) * _min_factor(c, gamma, d)


def A_value(c: float, gamma: float, d: int) -> float:
    """Prefactor ``A`` with ``eps* = A min{1, alpha/2}^(4d+2gamma) / ||V||_alpha``."""
    log_den = _log_pref(c, gamma) + exponent(d, gamma) * math.log(4.0)
    return math.exp(-log_den) * _min_factor(c, gamma, d)


def eps_star(c: float, gamma: float, d: int, alpha: float, v_norm: float) -> float:
    """Threshold ``xi / (4 c ||V||_alpha)``."""
    if v_norm <= 0:
        raise DomainError(f"||V||_alpha must be positive, got {v_norm}")
    return xi_value(c, gamma, d, sigma_of(alpha)) / (4.0 * c * v_norm)


def eps_star_closed(c: float, gamma: float, d: int, alpha: float, v_norm: float) -> float:
    """Same threshold through ``A``: ``A sigma^(4d+2gamma) / ||V||_alpha``."""
    if v_norm <= 0:
        raise DomainError(f"||V||_alpha must be positive, got {v_norm}")
    return A_value(c, gamma, d) * sigma_of(alpha) ** exponent(d, gamma) / v_norm


def laplacian_eps_star(c: float, gamma: float, d: int, alpha: float) -> float:
    """``A e^-alpha min{1, alpha/2}^(4d+2gamma)`` (uses ``||Delta||_alpha = e^alpha``)."""
    return A_value(c, gamma, d) * math.exp(-alpha) * sigma_of(alpha) ** exponent(d, gamma)


def verify_xi_system(xi: float, c: float, gamma: float, d: int, sigma: float,
                     rtol: float = 1e-12) -> tuple[bool, bool, bool]:
    """Check the three inequalities ``xi`` must satisfy (first strict)."""
    x = xi / (4.0 * c) * phi_infinity(c, gamma, d, sigma)
    lhs2 = x / (1.0 - x) / (2.0 ** (2 * exponent(d, gamma)) * 12 * c**2 * (2 * gamma / math.e) ** (2 * gamma))
    first = x < 1.0
    second = lhs2 <= (1.0 / (4.0 * c)) * (1.0 + rtol)
    # 3^d / (2^(6d-1) (1 - x)) <= 1, rearranged: xi is chosen so that this can hold with
    # equality, and forming 1 - x would cost up to 13 digits
    third = x <= (1.0 - 3.0**d / 2.0 ** (6 * d - 1)) * (1.0 + rtol)
    return first, second, third


def sup_poly_exp(gamma: float, delta: float) -> float:
    """``sup_{r >= 0} r^(2 gamma) e^(-delta r) = (2 gamma / (e delta))^(2 gamma)``."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    return (2.0 * gamma / (math.e * delta)) ** (2.0 * gamma)


def homological_factor(c: float, gamma: float, delta: float) -> float:
    """``12 c^2 (2 gamma/(e delta))^(2 gamma)``, the loss factor of the homological solve."""
    return 12.0 * c**2 * sup_poly_exp(gamma, delta)


def reciprocal_bound(c: float, gamma: float, k_norm: float) -> float:
    """``12 c^2 |k|^(2 gamma)``."""
    return 12.0 * c**2 * k_norm ** (2.0 * gamma)


@dataclass(frozen=True)
class KamConstants:
    c: float
    gamma: float
    d: int
    alpha: float
    sigma: float
    phi_inf: float
    phi_limit: float
    xi: float
    A_const: float
    eps_star: float
    V_alpha_norm: float

    @classmethod
    def compute(cls, c: float, gamma: float, d: int, alpha: float, v_norm: float) -> "KamConstants":
        s = sigma_of(alpha)
        return cls(
            c=float(c), gamma=float(gamma), d=int(d), alpha=float(alpha), sigma=s,
            phi_inf=phi_infinity(c, gamma, d, s), phi_limit=phi_limit(c, gamma, d, s), xi=xi_value(c, gamma, d, s),
            A_const=A_value(c, gamma, d),
            eps_star=eps_star(c, gamma, d, alpha, v_norm) if v_norm > 0 else math.inf,
            V_alpha_norm=float(v_norm),
        )

    def schedule(self, ell: int) -> tuple[float, float]:
        return schedule(self.alpha, ell)

    def log_condition_B(self, ell: int) -> float:
        """``log (xi phi_ell / (4c))^(2^ell)``."""
        return 2.0**ell * (math.log(self.xi / (4 * self.c))
                           + log_phi_sequence(ell, self.c, self.gamma, self.d, self.sigma))

    def log_condition_CD(self, ell: int) -> float:
        """``log (xi phi_inf / (4c))^(2^ell)``."""
        return 2.0**ell * (math.log(self.xi / (4 * self.c))
                           + log_phi_infinity(self.c, self.gamma, self.d, self.sigma))

    def to_dict(self) -> dict:
        return asdict(self)
