"""Sky-image segmentation, PCNP features and GHI estimation."""

from .clustering import Centroids, FitConfig, assign, fit, inertia, init_centroids, partial_fit, quantize
from .features import StandardScaler, extract_pcnp, fit_scaler, transform
from .imaging import ImageRGB, SkyMask, apply_mask, load_ppm, store_ppm
from .models import (
    ClassifierConfig,
    RegressorConfig,
    classify,
    estimate_ghi,
    kfold_cv,
    train_classifier,
    train_regressor,
)
from .persistence import load_model, store_model
from .synthsky import SceneMix, SceneParams, render_scene

__version__ = "0.1.0"
