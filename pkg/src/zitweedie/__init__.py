"""Zero-inflated Tweedie models fitted by generalized EM with boosted trees."""
__version__ = "0.1.0"

from .data import Dataset, FeatureSchema, load_csv, train_test_split, undersample_nonzero
from .em import EmConfig, ZitModel, fit
from .gbdt import BoostConfig
from .io import load_model, save_model
from .metrics import MetricsReport, ordered_lorenz_gini, point_metrics
from .profile import ZetaGrid, fit_profile
from .simulation import make_dataset, sample_zit
from .tweedie import log_density_tweedie, log_normalizer, unit_deviance

__all__ = [
    "BoostConfig", "Dataset", "EmConfig", "FeatureSchema", "MetricsReport", "ZetaGrid", "ZitModel",
    "fit", "fit_profile", "load_csv", "load_model", "log_density_tweedie", "log_normalizer",
    "make_dataset", "ordered_lorenz_gini", "point_metrics", "sample_zit", "save_model",
    "train_test_split", "undersample_nonzero", "unit_deviance",
]
