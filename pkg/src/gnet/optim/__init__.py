"""Training algorithms for random neural networks."""

from .common import batch_forward
from .config import (ALGORITHMS, DELTA_P_RANGE, POLICIES, STOP_REASONS, ZETA_RANGE,
                     TrainerConfig, TrainReport)
from .gd import train_gd, train_gd_extended
from .linesearch import line_search
from .lm import lm_am_coefficients, lm_step, train_lm, train_lm_am
from .nonneg import NonnegState, apply_nonneg_policy, beta_gradient
from .quasi_newton import (QuasiNewtonState, bfgs_update, dfp_update, minimize_quasi_newton,
                           train_bfgs, train_dfp)

TRAINERS = {
    "gd": train_gd,
    "gd_ext": train_gd_extended,
    "bfgs": train_bfgs,
    "dfp": train_dfp,
    "lm": train_lm,
    "lm_am": train_lm_am,
}


def train(spec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """Run the trainer named by ``config.algorithm``."""
    return TRAINERS[config.algorithm](spec, dataset, config, callback=callback)


__all__ = [
    "ALGORITHMS", "DELTA_P_RANGE", "POLICIES", "STOP_REASONS", "ZETA_RANGE", "TRAINERS",
    "NonnegState", "QuasiNewtonState", "TrainReport", "TrainerConfig",
    "apply_nonneg_policy", "batch_forward", "beta_gradient", "bfgs_update", "dfp_update",
    "line_search", "lm_am_coefficients", "lm_step", "minimize_quasi_newton", "train",
    "train_bfgs", "train_dfp", "train_gd", "train_gd_extended", "train_lm", "train_lm_am",
]
