"""Online learning of thin-plate RBF surrogates with validity-driven sampling."""
from .distance import DistanceReport, graphical_distance, report, vertical_distance
from .models import MODEL_IDS, Model, ModelSpec, PlateauParams, get_model
from .optimize import SolverConfig, SolverTrace, nelder_mead, run_ensemble
from .rbf import FitError, Hyperparams, Surrogate, fit, fit_arrays, predict
from .samplers import SamplerConfig, sample_iteration
from .store import EvalRecord, EvalStore
from .validity import ExtremaRegistry, IterationSummary, ToleranceConfig, converged, preset, test_valid, train_valid
from .workflow import WorkflowConfig, WorkflowResult, run_asymptotic, run_single, train_until_valid

__version__ = "0.1.0"
