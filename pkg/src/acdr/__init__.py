"""Conditional diffusion feature refinement for CTC sequence models, in numpy."""

from .conditions import Codebook, build_codebook, combine_conditions, gloss_condition, temporal_condition
from .config import Config, load_config
from .constraints import KernelSpec, LossBreakdown, acdr_objective, jmmd, mmd, noise_loss, semantic_constraint
from .ctc import ctc_greedy_decode, ctc_loss
from .diffusion import (
    DiffusionSchedule,
    ancestral_step,
    ddim_subsequence,
    denoise_loop,
    forward_noise,
    make_linear_schedule,
    posterior_mean,
    predict_v0,
)
from .wer import WerReport, wer

__version__ = "0.1.0"
