from .schedule import NoiseSchedule, karras_sigmas, schedule_from_config, sigma_from_logsnr
from .vparam import alpha_sigma_hat, v_target, x0_from_v, xt_from_x0
from .model import DiT
from .sampler import NumericalError, cfg_combine, make_denoiser, sample, sampling_prefix_frames
from .text import TextEncoder, tokenize
from .train import prefix_frames_for_ms, train_step, train_diffusion, text_finetune

__all__ = [n for n in dir() if not n.startswith("_")]
