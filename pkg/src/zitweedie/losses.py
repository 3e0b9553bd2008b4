"""Per-observation boosting objectives: value, gradient and Hessian in the score F.

Each loss returns ``(value, grad, hess)`` arrays. The boosting engine only
sees the :class:`Loss` interface, so these four are interchangeable there.
The EQL constant ``-log(2 pi y^zeta / w) / 2`` is dropped from the mean and
dispersion losses; it does not depend on F.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .tweedie import as_zeta, log_normalizer, unit_deviance

HESS_FLOOR = 1e-12


def _softplus(x):
    return np.logaddexp(0.0, x)


def loss_pi(target, F, weight=1.0):
    """Cross-entropy for a fractional zero-state target in [0, 1]."""
    target, F, weight = (np.asarray(a, dtype=float) for a in (target, F, weight))
    p = expit(F)
    value = weight * (target * _softplus(-F) + (1.0 - target) * _softplus(F))
    grad = weight * (p - target)
    hess = weight * p * (1.0 - p)
    return value, grad, hess


def loss_mu(y, weight, F, zeta):
    """Weighted Tweedie deviance ``weight * D(y; exp(F))``."""
    z = as_zeta(zeta)
    y, weight, F = (np.asarray(a, dtype=float) for a in (y, weight, F))
    e2 = np.exp((2.0 - z) * F)
    e1 = y * np.exp((1.0 - z) * F)
    value = weight * unit_deviance(y, np.exp(F), z)
    grad = 2.0 * weight * (e2 - e1)
    hess = 2.0 * weight * ((2.0 - z) * e2 - (1.0 - z) * e1)
    return value, grad, hess


def loss_phi(d, weight, F):
    """Gamma-type dispersion loss ``weight * (d exp(-F) + F)``."""
    d, weight, F = (np.asarray(a, dtype=float) for a in (d, weight, F))
    de = d * np.exp(-F)
    return weight * (de + F), weight * (1.0 - de), weight * de


def loss_init_positive(y, omega, F, zeta, weight=1.0):
    """Negative zero-truncated Tweedie log-likelihood in F (up to constants).

    ``omega`` is exposure over the initial dispersion, ``w / phi0``; it sits
    inside the truncation term, so the generic ``weight`` is kept separate.
    """
    z = as_zeta(zeta)
    y, omega, F, weight = (np.asarray(a, dtype=float) for a in (y, omega, F, weight))
    u = omega * np.exp((2.0 - z) * F)
    a = u / (2.0 - z)
    keep = -np.expm1(-a)  # 1 - P(Y = 0)
    yterm = omega * y * np.exp((1.0 - z) * F)
    value = weight * (a - yterm / (1.0 - z) + np.log(keep))
    grad = weight * (u / keep - yterm)
    with np.errstate(over="ignore"):
        ratio = np.where(a > 1e-300, a / np.expm1(a), 1.0)
    hess = weight * ((2.0 - z) * u / keep * (1.0 - ratio) - (1.0 - z) * yterm)
    return value, grad, np.maximum(hess, HESS_FLOOR)


class Loss:
    """Objective consumed by the boosting engine.

    ``evaluate(target, F, weight, aux)`` returns per-row ``(value, grad,
    hess)``; ``aux`` carries a loss-specific constant per row.
    """

    name = "loss"

    def evaluate(self, target, F, weight, aux=None):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class CrossEntropyLoss(Loss):
    name = "cross_entropy"

    def evaluate(self, target, F, weight, aux=None):
        return loss_pi(target, F, weight)


class TweedieDevianceLoss(Loss):
    name = "tweedie_deviance"

    def __init__(self, zeta):
        self.zeta = as_zeta(zeta)

    def evaluate(self, target, F, weight, aux=None):
        return loss_mu(target, weight, F, self.zeta)

    def __repr__(self):
        return f"TweedieDevianceLoss(zeta={self.zeta})"


class GammaDispersionLoss(Loss):
    name = "gamma_dispersion"

    def evaluate(self, target, F, weight, aux=None):
        return loss_phi(target, weight, F)


class PositiveTweedieLoss(Loss):
    name = "positive_tweedie"

    def __init__(self, zeta):
        self.zeta = as_zeta(zeta)

    def evaluate(self, target, F, weight, aux=None):
        if aux is None:
            raise ValueError("PositiveTweedieLoss needs omega = w / phi0 as aux")
        return loss_init_positive(target, aux, F, self.zeta, weight)

    def __repr__(self):
        return f"PositiveTweedieLoss(zeta={self.zeta})"


def loss_phi_exact(y, weight, F, w, kappa, zeta):
    """Exact Tweedie negative log-likelihood in the log-dispersion score F.

    ``kappa = y mu^(1-zeta)/(1-zeta) - mu^(2-zeta)/(2-zeta)`` at the current
    mean and ``w`` is the exposure. The series normalizer supplies the
    dispersion derivatives; the Hessian is floored at ``HESS_FLOOR`` since
    this loss need not be convex in F.
    """
    z = as_zeta(zeta)
    y, weight, F, w, kappa = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (y, weight, F, w, kappa)))
    alpha = (2.0 - z) / (z - 1.0)
    lin = w * np.exp(-F) * kappa
    c = np.zeros(y.shape)
    mean_j = np.zeros(y.shape)
    var_j = np.zeros(y.shape)
    pos = y > 0
    if pos.any():
        c[pos], mean_j[pos], var_j[pos] = log_normalizer(y[pos], np.exp(F[pos]) / w[pos], z, moments=True)
    value = -weight * (lin + c)
    grad = weight * (lin + (1.0 + alpha) * mean_j)
    hess = weight * (-lin - (1.0 + alpha) ** 2 * var_j)
    return value, grad, np.maximum(hess, HESS_FLOOR)


class ExactDispersionLoss(Loss):
    """Dispersion loss using the exact series likelihood.

    ``aux`` is an ``(n, 2)`` array of exposure and the mean-dependent
    ``kappa`` term (see :func:`loss_phi_exact`).
    """

    name = "exact_dispersion"

    def __init__(self, zeta):
        self.zeta = as_zeta(zeta)

    def evaluate(self, target, F, weight, aux=None):
        aux = np.asarray(aux, dtype=float)
        return loss_phi_exact(target, weight, F, aux[:, 0], aux[:, 1], self.zeta)

    def __repr__(self):
        return f"ExactDispersionLoss(zeta={self.zeta})"
