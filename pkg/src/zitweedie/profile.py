"""Profile-likelihood choice of the Tweedie power parameter over a grid."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .em import EmConfig, ZitModel, fit
from .tweedie import PowerParam

DEFAULT_GRID = (1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9)


class ProfileError(RuntimeError):
    def __init__(self, zeta, cause):
        super().__init__(f"fit at zeta={zeta} failed: {cause}")
        self.zeta = zeta


@dataclass(frozen=True)
class ZetaGrid:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(PowerParam(float(v)).zeta) for v in self.values)
        if not vals:
            raise ValueError("zeta grid is empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("zeta grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def default(cls):
        return cls(DEFAULT_GRID)

    @classmethod
    def parse(cls, text):
        """``"a:b:step"`` (inclusive of ``b`` up to rounding) or a comma list."""
        text = text.strip()
        if ":" in text:
            try:
                a, b, step = (float(t) for t in text.split(":"))
            except ValueError:
                raise ValueError(f"bad zeta grid {text!r}, expected a:b:step") from None
            if step <= 0 or b < a:
                raise ValueError(f"bad zeta grid {text!r}")
            k = int(np.floor((b - a) / step + 1e-9))
            # rounding keeps 1.3 + 2*0.1 == 1.5 rather than 1.5000000000000002
            return cls(tuple(round(a + i * step, 12) for i in range(k + 1)))
        return cls(tuple(float(t) for t in text.split(",")))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass
class ProfileResult:
    best_zeta: float
    best_model: ZitModel
    table: list  # (zeta, loglik) rows in grid order
    models: list = None  # every grid fit, same order as table

    @property
    def logliks(self):
        return np.array([ll for _, ll in self.table])


def _fit_one(args):
    data, zeta, config = args
    try:
        model = fit(data, zeta, config)
    except Exception as exc:  # noqa: BLE001 - re-raised with the zeta attached
        raise ProfileError(zeta, exc) from exc
    return model, model.log_likelihood(data)


def fit_profile(data: Dataset, grid: ZetaGrid | None = None, config: EmConfig = EmConfig(), n_jobs=1) -> ProfileResult:
    """Fit at every grid value and keep the one with the highest exact log-likelihood.

    The log-likelihood is recomputed on the training data with the series
    normalizer. Ties go to the smaller zeta. Fits are independent, so
    ``n_jobs > 1`` runs them in worker processes with identical results.
    """
    grid = ZetaGrid.default() if grid is None else grid
    jobs = [(data, z, config) for z in grid]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(n_jobs, len(jobs))) as ex:
            results = list(ex.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    table = [(z, float(ll)) for z, (_, ll) in zip(grid, results)]
    lls = np.array([ll for _, ll in table])
    # argmax returns the first maximum, i.e. the smallest zeta on ties
    k = int(np.argmax(np.where(np.isnan(lls), -np.inf, lls)))
    return ProfileResult(table[k][0], results[k][0], table, [m for m, _ in results])
