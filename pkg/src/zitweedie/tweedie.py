"""Tweedie, zero-truncated Tweedie and zero-inflated Tweedie densities.

Everything is on the log scale. For a power parameter ``1 < zeta < 2`` the
Tweedie law is a compound Poisson-gamma distribution with a point mass at
zero; the positive part needs the infinite series normalizer ``c(y, phi,
zeta)``, evaluated here in log space around its dominant term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, log_expit

EPS = 1e-10
# log(1e17): terms smaller than max-term * 1e-17 are dropped
_LOG_TERM_DROP = 39.2
MAX_SERIES_TERMS = 20_000
_CHUNK = 2048


class SeriesConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerParam:
    zeta: float

    def __post_init__(self):
        z = float(self.zeta)
        if not (1.0 < z < 2.0):
            raise ValueError(f"power parameter must lie in (1, 2), got {self.zeta!r}")
        object.__setattr__(self, "zeta", z)

    @property
    def alpha(self) -> float:
        return gamma_shape(self.zeta)

    def __float__(self):
        return self.zeta


@dataclass(frozen=True)
class TweedieParams:
    mu: float
    phi: float
    zeta: PowerParam

    def __post_init__(self):
        if not (self.mu > 0 and self.phi > 0):
            raise ValueError("mu and phi must be positive")
        if not isinstance(self.zeta, PowerParam):
            object.__setattr__(self, "zeta", PowerParam(self.zeta))


@dataclass(frozen=True)
class ZitParams:
    pi: float
    tweedie: TweedieParams

    def __post_init__(self):
        if not (0.0 <= self.pi < 1.0):
            raise ValueError("zero-state probability must lie in [0, 1)")


def as_zeta(zeta) -> float:
    if isinstance(zeta, PowerParam):
        return zeta.zeta
    return PowerParam(zeta).zeta


def gamma_shape(zeta) -> float:
    """Per-claim gamma shape ``alpha = (2 - zeta) / (zeta - 1)``."""
    z = as_zeta(zeta)
    return (2.0 - z) / (z - 1.0)


def log_prob_zero(mu, phi_over_w, zeta):
    z = as_zeta(zeta)
    mu = np.maximum(mu, EPS)
    phi_over_w = np.maximum(phi_over_w, EPS)
    return -(mu ** (2.0 - z)) / (phi_over_w * (2.0 - z))


def prob_zero(mu, phi_over_w, zeta):
    """Tweedie point mass at zero, ``exp(-mu^(2-zeta) / (phi' (2-zeta)))``."""
    return np.exp(log_prob_zero(mu, phi_over_w, zeta))


def _series_log_terms(j, log_y, log_phi, z, alpha):
    # log of y^{j a} / [phi^{j(1+a)} (2-z)^j (z-1)^{j a} j! Gamma(j a)]
    r = alpha * log_y - (1.0 + alpha) * log_phi - np.log(2.0 - z) - alpha * np.log(z - 1.0)
    return j * r[:, None] - gammaln(j + 1.0) - gammaln(j * alpha)


def _log_series_chunk(y, phi, z, alpha, moments):
    log_y = np.log(y)
    log_phi = np.log(phi)
    r = alpha * log_y - (1.0 + alpha) * log_phi - np.log(2.0 - z) - alpha * np.log(z - 1.0)
    jmode = np.exp((2.0 - z) * log_y - log_phi - np.log(2.0 - z))
    center = np.maximum(1, np.round(np.minimum(jmode, 1e9))).astype(np.int64)
    half = int(np.ceil(10.0 * np.sqrt(center.max()))) + 10
    while True:
        if 2 * half + 1 > MAX_SERIES_TERMS:
            raise SeriesConvergenceError(
                f"Tweedie series needs more than {MAX_SERIES_TERMS} terms "
                f"(y={y.min():.3g}..{y.max():.3g}, phi={phi.min():.3g}..{phi.max():.3g})"
            )
        offsets = np.arange(-half, half + 1)
        j = np.maximum(center[:, None] + offsets[None, :], 1)
        valid = (center[:, None] + offsets[None, :]) >= 1
        # the gamma-function part depends on j only, so tabulate it
        lo = int(j.min())
        jr = np.arange(lo, int(j.max()) + 1, dtype=float)
        table = gammaln(jr + 1.0) + gammaln(jr * alpha)
        terms = j * r[:, None] - table[j - lo]
        terms[~valid] = -np.inf
        top = terms.max(axis=1)
        upper_ok = terms[:, -1] < top - _LOG_TERM_DROP
        lower_ok = ~valid[:, 0] | (terms[:, 0] < top - _LOG_TERM_DROP)
        if np.all(upper_ok & lower_ok):
            break
        half *= 2
    weights = np.exp(terms - top[:, None])
    total = weights.sum(axis=1)
    logsum = top + np.log(total)
    if not moments:
        return logsum, None, None
    # moments of the term index under the normalised series weights
    jc = np.where(valid, offsets[None, :].astype(float), 0.0)
    m1 = (weights * jc).sum(axis=1) / total
    var = (weights * (jc - m1[:, None]) ** 2).sum(axis=1) / total
    return logsum, center + m1, var


def log_normalizer(y, phi, zeta, moments=False):
    """Series normalizer ``c(y, phi, zeta)`` for ``y > 0``.

    Terms are summed outward from the mode ``j* ~ y^(2-zeta) / ((2-zeta) phi)``
    until they fall below ``1e-17`` of the largest one. With ``moments=True``
    also returns the mean and variance of the term index ``j`` under the
    normalised term weights; these give the derivatives in ``log phi``,
    ``dc/dlog(phi) = -(1 + alpha) E[j]`` and
    ``d2c/dlog(phi)^2 = (1 + alpha)^2 Var[j]``.
    """
    z = as_zeta(zeta)
    alpha = gamma_shape(z)
    y, phi = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(phi, dtype=float))
    scalar = y.ndim == 0
    y = np.atleast_1d(y).ravel()
    phi = np.maximum(np.atleast_1d(phi).ravel(), EPS)
    if np.any(y <= 0):
        raise ValueError("log_normalizer is defined for y > 0 only")
    out = np.empty_like(y)
    mean_j = np.empty_like(y)
    var_j = np.empty_like(y)
    # rows with similar mode share a window width
    order = np.argsort((2.0 - z) * np.log(y) - np.log(phi), kind="stable")
    for start in range(0, len(order), _CHUNK):
        idx = order[start:start + _CHUNK]
        out[idx], m, v = _log_series_chunk(y[idx], phi[idx], z, alpha, moments)
        if moments:
            mean_j[idx], var_j[idx] = m, v
    out -= np.log(y)
    if not moments:
        return float(out[0]) if scalar else out
    if scalar:
        return float(out[0]), float(mean_j[0]), float(var_j[0])
    return out, mean_j, var_j


def deviance_form_log_normalizer(y, phi, zeta):
    """Normalizer of the density written as ``exp{-D(y; mu) / (2 phi) + c~}``.

    ``c~ = c - y^(2-zeta) / (phi (zeta-1) (2-zeta))``; this is the quantity the
    saddle-point formula approximates.
    """
    z = as_zeta(zeta)
    y = np.asarray(y, dtype=float)
    return log_normalizer(y, phi, z) - y ** (2.0 - z) / (phi * (z - 1.0) * (2.0 - z))


def saddlepoint_log_normalizer(y, phi, zeta):
    """Small-dispersion approximation ``-log(2 pi phi y^zeta) / 2`` of ``c~``."""
    z = as_zeta(zeta)
    return -0.5 * np.log(2.0 * np.pi * phi * np.asarray(y, dtype=float) ** z)


def log_density_tweedie(y, mu, phi, zeta, w=1.0):
    """Log density of ``Tweedie(mu, phi / w, zeta)`` at ``y >= 0`` (mass at 0)."""
    z = as_zeta(zeta)
    y, mu, phi, w = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (y, mu, phi, w)))
    scalar = y.ndim == 0
    y, mu, phi, w = (np.atleast_1d(a).ravel() for a in (y, mu, phi, w))
    if np.any(y < 0):
        raise ValueError("y must be non-negative")
    mu = np.maximum(mu, EPS)
    phi = np.maximum(phi, EPS)
    out = -(w / phi) * mu ** (2.0 - z) / (2.0 - z)
    pos = y > 0
    if pos.any():
        yp, mp, php, wp = y[pos], mu[pos], phi[pos], w[pos]
        out[pos] += (wp / php) * yp * mp ** (1.0 - z) / (1.0 - z)
        out[pos] += log_normalizer(yp, php / wp, z)
    return float(out[0]) if scalar else out


def log_density_positive_tweedie(y, mu, phi, zeta, w=1.0):
    """Log density of the zero-truncated Tweedie law at ``y > 0``."""
    if np.any(np.asarray(y) <= 0):
        raise ValueError("zero-truncated density is defined for y > 0 only")
    lp0 = log_prob_zero(mu, np.asarray(phi, dtype=float) / w, zeta)
    return log_density_tweedie(y, mu, phi, zeta, w) - np.log(-np.expm1(lp0))


def unit_deviance(y, mu, zeta):
    """Tweedie unit deviance; the ``y = 0`` terms take their limits."""
    z = as_zeta(zeta)
    y = np.asarray(y, dtype=float)
    mu = np.maximum(np.asarray(mu, dtype=float), EPS)
    y2 = y ** (2.0 - z)
    dev = 2.0 * (
        (y2 - y * mu ** (1.0 - z)) / (1.0 - z)
        - (y2 - mu ** (2.0 - z)) / (2.0 - z)
    )
    # the two terms cancel only up to rounding when y == mu
    dev = np.where(y == mu, 0.0, np.maximum(dev, 0.0))
    return float(dev) if dev.ndim == 0 else dev


def zit_log_likelihood(y, w, f_mu, f_phi, f_pi, zeta, total=True):
    """Observed-data log-likelihood of the zero-inflated Tweedie model.

    ``f_mu``, ``f_phi`` and ``f_pi`` are link-scale scores per row (log, log,
    logit). Returns the sum, or per-row contributions with ``total=False``.
    """
    z = as_zeta(zeta)
    y, w, f_mu, f_phi, f_pi = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(a, dtype=float)) for a in (y, w, f_mu, f_phi, f_pi))
    )
    mu = np.maximum(np.exp(f_mu), EPS)
    phi = np.maximum(np.exp(f_phi), EPS)
    log_pi = log_expit(f_pi)
    log_1mpi = log_expit(-f_pi)
    out = np.empty(y.shape)
    zero = y == 0
    out[zero] = np.logaddexp(
        log_pi[zero], log_1mpi[zero] + log_prob_zero(mu[zero], phi[zero] / w[zero], z)
    )
    pos = ~zero
    if pos.any():
        out[pos] = log_1mpi[pos] + log_density_tweedie(y[pos], mu[pos], phi[pos], z, w[pos])
    return float(out.sum()) if total else out


def zero_state_posterior(y, w, mu, phi, pi, zeta):
    """Posterior probability that each row came from the perfect zero state."""
    y = np.asarray(y, dtype=float)
    pi = np.asarray(pi, dtype=float)
    lp0 = log_prob_zero(mu, np.asarray(phi, dtype=float) / w, zeta)
    # Pi = 1 / (1 + (1 - pi) p0 / pi)
    log_odds = np.log(pi) - np.log1p(-pi) - lp0
    return np.where(y == 0, expit(log_odds), 0.0)
