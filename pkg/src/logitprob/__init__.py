"""Post-hoc ML/MAP scoring from logit-layer densities, plus calibration metrics."""
from .baselines import TemperatureModel, apply_temperature, fit_temperature
from .datagen import GeneratorSpec, by_split, generate, make_overconfident_scenario
from .errors import LogitProbError
from .inference import (
    Method,
    ScoreVector,
    argmax_with_tiebreak,
    map_score,
    ml_score,
    score_batch,
    sigmoid_scores,
    softmax,
)
from .metrics import (
    PRCurve,
    ReliabilityReport,
    macro_fpr,
    macro_fscore,
    pr_curve,
    reliability,
    unseen_stats,
)
from .model import (
    CalibrationModel,
    ClassDensity,
    LogitRecord,
    Mode,
    Split,
    fit_gaussian,
    fit_histogram,
    fit_model,
    gaussian_pdf,
    lookup_likelihood,
)

__version__ = "0.1.0"
