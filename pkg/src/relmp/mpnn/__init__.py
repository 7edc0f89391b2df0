from .autodiff import Tape, Var
from .engine import (NONLINEARITIES, SCHEMES, ModelConfig, ModelParams, Operators, SchemeError,
                     batch_operators, forward, init_params, param_shapes, prepare, relation_signature)
from .sensitivity import (FD_STEP, SensitivityReport, UnsupportedScheme, empirical_jacobian, exact_jacobian,
                          jacobian_fd, lipschitz_constants, verify_sensitivity)
from .train import (Adam, RelationalMPNNClassifier, Sample, TrainConfig, TrainingDiverged, TrainResult,
                    accuracy, make_shifts, predict_logits, train)

__all__ = [
    "Tape", "Var", "NONLINEARITIES", "SCHEMES", "ModelConfig", "ModelParams", "Operators", "SchemeError",
    "batch_operators", "forward", "init_params", "param_shapes", "prepare", "relation_signature",
    "FD_STEP", "SensitivityReport", "UnsupportedScheme", "empirical_jacobian", "exact_jacobian",
    "jacobian_fd", "lipschitz_constants", "verify_sensitivity", "Adam", "RelationalMPNNClassifier",
    "Sample", "TrainConfig", "TrainingDiverged", "TrainResult", "accuracy", "make_shifts",
    "predict_logits", "train",
]
