"""Closed-form and quadrature reference values for Brownian scenarios."""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats


def ball_occupation(d: int, radius: float, T: float) -> float:
    """E of the time Brownian motion from 0 spends in B_radius(0) during [0, T]."""
    s, w = _gauss(0.0, T, 200)
    return float(np.sum(w * stats.chi2.cdf(radius**2 / s, d)))


def ball_occupation_second_moment(d: int, radius: float, T: float, nodes: int = 96) -> float:
    """E (time in the ball)^2 = 2 int_{s<u} P(|w_s| < R, |w_u| < R) by nested Gauss-Legendre."""
    total = 0.0
    s_n, s_w = _gauss(0.0, T, nodes)
    a_n, a_w = _gauss(0.0, radius, nodes)
    for s, ws in zip(s_n, s_w):
        # radial density of |w_s| on [0, R]
        dens = stats.chi.pdf(a_n / math.sqrt(s), d) / math.sqrt(s)
        u_n, u_w = _gauss(s, T, nodes)
        lag = (u_n - s)[:, None]
        inner = stats.ncx2.cdf(radius**2 / lag, d, (a_n**2)[None, :] / lag)
        total += ws * np.sum(u_w[:, None] * inner * (a_w * dens)[None, :])
    return 2.0 * total


def exit_time_capped(d: int, rho: float, n_terms: int = 200) -> float:
    """E min(tau, rho^2) for Brownian motion started at the center of B_rho (Bessel series)."""
    nu = d / 2.0 - 1.0
    j = special.jn_zeros(0, n_terms) if nu == 0 else _bessel_zeros(nu, n_terms)
    c = j ** (nu - 1) / (2 ** (nu - 1) * special.gamma(nu + 1) * special.jv(nu + 1, j))
    lam = j**2 / (2 * rho**2)
    return float(np.sum(c * (1 - np.exp(-lam * rho**2)) / lam))


def _bessel_zeros(nu: float, n: int) -> np.ndarray:
    from scipy.optimize import brentq

    xs = np.linspace(0.5, math.pi * (n + nu / 2 + 2), 40 * (n + 4))
    v = special.jv(nu, xs)
    roots = [brentq(lambda x: special.jv(nu, x), xs[i], xs[i + 1]) for i in np.flatnonzero(v[:-1] * v[1:] < 0)]
    return np.array(roots[:n])


def heat_time_integrated_norm(d: int, T: float, p_prime: float, q_prime: float) -> float:
    """Integral over (0, T] of ||N(0, tI)||_{L_p'}^{q'}."""
    beta = 0.5 * d * (1 - 1 / p_prime) * q_prime
    c = (2 * math.pi) ** (-0.5 * d * (1 - 1 / p_prime)) * p_prime ** (-0.5 * d / p_prime)
    return c**q_prime * T ** (1 - beta) / (1 - beta)


def _gauss(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w
