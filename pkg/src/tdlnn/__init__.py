"""Tapped-delay-line multipath channel estimation and channel-state sensing."""

__version__ = "0.1.0"

from .channel import (PerturbationEvent, Reflector, Scene, Tap, TapSet, Trajectory, Transmitter,
                      apply_channel, apply_events, evolve_channel, trace_paths, trace_scene)
from .estimator import (ChannelEstimate, TdlConfig, build_shift_bank, fit, fit_ls_oracle,
                        fit_sequence, prune, rmse)
from .signal import (ComplexSignal, ModulationConfig, add_awgn, generate_bits, oversample,
                     qpsk_demodulate, qpsk_modulate)

__all__ = [
    "ChannelEstimate", "ComplexSignal", "ModulationConfig", "PerturbationEvent", "Reflector",
    "Scene", "Tap", "TapSet", "TdlConfig", "Trajectory", "Transmitter", "add_awgn",
    "apply_channel", "apply_events", "build_shift_bank", "evolve_channel", "fit",
    "fit_ls_oracle", "fit_sequence", "generate_bits", "oversample", "prune", "qpsk_demodulate",
    "qpsk_modulate", "rmse", "trace_paths", "trace_scene",
]
