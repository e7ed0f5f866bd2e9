"""Fusion denoisers, losses and the two-stage trainer."""

from .dccrn import DccrnConfig, DccrnDenoiser, encoder_freq_chain
from .demucs import (DemucsConfig, DemucsDenoiser, MaskFusion,
                     bottleneck_frames, speech_valid_length,
                     ultrasound_valid_length)
from .losses import StftLossConfig, dccrn_loss, demucs_loss, multires_stft_loss
from .trainer import (MODEL_KINDS, STAGES, TrainResult, TrainSettings,
                      build_model, load_enhancer, select_feature_channels,
                      train)

__all__ = [
    "DccrnConfig", "DccrnDenoiser", "encoder_freq_chain",
    "DemucsConfig", "DemucsDenoiser", "MaskFusion", "bottleneck_frames",
    "speech_valid_length", "ultrasound_valid_length",
    "StftLossConfig", "dccrn_loss", "demucs_loss", "multires_stft_loss",
    "MODEL_KINDS", "STAGES", "TrainResult", "TrainSettings", "build_model",
    "load_enhancer", "select_feature_channels", "train",
]
