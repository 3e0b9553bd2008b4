"""Hold-out evaluation: point errors, Tweedie deviance and the ordered Lorenz curve."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .tweedie import unit_deviance


def pure_premium(model, X, w=None):
    """``(1 - pi) * mu`` per unit exposure; ``w`` does not enter the per-unit premium."""
    return model.pure_premium(X)


def _weights(weights, n):
    if weights is None:
        return np.ones(n)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (n,))
    if np.any(~(weights > 0)):
        raise ValueError("weights must be positive")
    return weights


def point_metrics(predictions, actuals, weights=None, zeta=1.5):
    """Weighted MSE, MAD and mean Tweedie deviance of premiums against responses."""
    pred = np.asarray(predictions, dtype=float)
    y = np.asarray(actuals, dtype=float)
    if pred.shape != y.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {y.shape} actuals")
    w = _weights(weights, y.size)
    wsum = w.sum()
    err = pred - y
    mse = float(np.sum(w * err * err) / wsum)
    mad = float(np.sum(w * np.abs(err)) / wsum)
    dev = float(np.sum(w * unit_deviance(y, pred, zeta)) / wsum)
    return mse, mad, dev


def ordered_lorenz_gini(premiums, losses, base_premiums=None, weights=None):
    """Gini index and ordered Lorenz points.

    Policies are sorted by relativity ``premium / base``; the abscissa is the
    cumulative weighted base-premium share and the ordinate the cumulative
    weighted loss share. Policies with equal relativity are merged into one
    segment, so the curve does not depend on how ties are ordered. Returns
    ``gini = 1 - 2 * area`` and an ``(m, 2)`` array of points.
    """
    prem = np.asarray(premiums, dtype=float)
    loss = np.asarray(losses, dtype=float)
    n = prem.size
    base = np.ones(n) if base_premiums is None else np.broadcast_to(np.asarray(base_premiums, dtype=float), (n,))
    if loss.shape != prem.shape:
        raise ValueError("premiums and losses differ in length")
    w = _weights(weights, n)
    if np.any(~(prem > 0)) or np.any(~(base > 0)):
        raise ValueError("premiums must be positive")
    if np.any(loss < 0):
        raise ValueError("losses must be non-negative")
    wb, wl = w * base, w * loss
    if not wl.sum() > 0:
        raise ValueError("total loss is zero")
    rel = prem / base
    order = np.argsort(rel, kind="stable")
    rel = rel[order]
    cb = np.cumsum(wb[order])
    cl = np.cumsum(wl[order])
    ends = np.append(np.flatnonzero(np.diff(rel) != 0), n - 1)
    x = np.concatenate([[0.0], cb[ends] / cb[-1]])
    y = np.concatenate([[0.0], cl[ends] / cl[-1]])
    x[-1] = y[-1] = 1.0
    area = float(np.sum(np.diff(x) * (y[1:] + y[:-1])) / 2.0)
    return 1.0 - 2.0 * area, np.column_stack([x, y])


@dataclass
class MetricsReport:
    mse: float
    mad: float
    mean_deviance: float
    gini: float
    lorenz: np.ndarray = field(repr=False)
    n: int = 0

    def scalars(self):
        d = asdict(self)
        d.pop("lorenz")
        return d


def evaluate(model, data, base_premium=None, weight_by="exposure"):
    """Score a fitted model on ``data``.

    ``base_premium`` defaults to the constant weighted mean response; with a
    constant base the Gini only depends on the model's premium ordering.
    ``weight_by`` is ``"exposure"`` or ``"count"`` for the Lorenz curve.
    """
    if weight_by not in ("exposure", "count"):
        raise ValueError("weight_by must be 'exposure' or 'count'")
    prem = model.pure_premium(data.X)
    mse, mad, dev = point_metrics(prem, data.y, data.w, model.zeta)
    if base_premium is None:
        base_premium = float(np.sum(data.w * data.y) / np.sum(data.w))
    lw = data.w if weight_by == "exposure" else None
    gini, lorenz = ordered_lorenz_gini(prem, data.y, base_premium, lw)
    return MetricsReport(mse, mad, dev, gini, lorenz, len(data))
