"""Closed-form M/M/1 reference results.

For a stationary M/M/1 queue with arrival rate lambda, service rate mu,
and rho = lambda/mu < 1, the time-average age of the freshest delivered
update is

    age(rho; mu) = (1/mu) * (1 + 1/rho + rho^2 / (1 - rho))

which blows up at both ends of (0, 1) and has a single interior minimum.
These values serve as ground truth for the simulator and for locating the
age-minimizing send rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Mm1Spec:
    lam: float  # arrival rate, updates/s
    mu: float  # service rate, services/s

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError(f"rates must be positive, got lam={self.lam}, mu={self.mu}")

    @property
    def rho(self) -> float:
        return self.lam / self.mu


def _check_stable(lam: float, mu: float) -> float:
    if mu <= 0 or lam <= 0:
        raise ValueError(f"rates must be positive, got lam={lam}, mu={mu}")
    rho = lam / mu
    if not 0.0 < rho < 1.0:
        raise ValueError(f"need 0 < rho < 1 for steady state, got rho={rho}")
    return rho


def mm1_average_age(lam: float, mu: float = 1.0) -> float:
    rho = _check_stable(lam, mu)
    return (1.0 / mu) * (1.0 + 1.0 / rho + rho * rho / (1.0 - rho))


def mm1_mean_system_time(lam: float, mu: float = 1.0) -> float:
    _check_stable(lam, mu)
    return 1.0 / (mu - lam)


def mm1_mean_backlog(lam: float, mu: float = 1.0) -> float:
    """Stationary mean number in system, rho/(1-rho)."""
    rho = _check_stable(lam, mu)
    return rho / (1.0 - rho)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f, a: float, b: float, tol: float = 1e-6) -> tuple[float, float]:
    """Minimize a unimodal f on [a, b] to bracket width tol.

    Returns (argmin, f(argmin)). Plain golden-section search; one function
    evaluation per iteration after the initial two.
    """
    if b <= a:
        raise ValueError(f"empty bracket [{a}, {b}]")
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def mm1_optimal_rate(mu: float, tol: float = 1e-6, eps: float = 1e-3) -> tuple[float, float]:
    """Age-minimizing arrival rate for M/M/1: (lambda*, age*).

    Golden-section over rho in (eps, 1-eps); the optimum is well interior
    so the bracket never binds.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    rho_star, age_star = golden_section_min(
        lambda rho: mm1_average_age(rho * mu, mu), eps, 1.0 - eps, tol
    )
    return rho_star * mu, age_star
