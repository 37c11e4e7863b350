"""Diffusion-based receiver-side denoising for latent transmission over fading channels."""

from .channel import EqualizedOutput, draw_channel, equalize, transmit
from .denoiser import AnalyticDenoiser, NetworkDenoiser, TrainingConfig, train_denoiser
from .engine import denoise_fast, denoise_slow, forward_noise, reverse_step, water_fill
from .errors import ChandiffError
from .estimator import joint_estimate
from .schedule import NoiseSchedule, invert_noise_level, noise_level, step_match
from .sources import SourceModel, posterior_mean, sample_source

__version__ = "0.1.0"

__all__ = [
    "AnalyticDenoiser", "ChandiffError", "EqualizedOutput", "NetworkDenoiser", "NoiseSchedule",
    "SourceModel", "TrainingConfig", "denoise_fast", "denoise_slow", "draw_channel", "equalize",
    "forward_noise", "invert_noise_level", "joint_estimate", "noise_level", "posterior_mean",
    "reverse_step", "sample_source", "step_match", "train_denoiser", "transmit", "water_fill",
]
