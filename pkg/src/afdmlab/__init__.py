"""AFDM and OFDM transceivers over doubly dispersive channels."""

__version__ = "0.1.0"

from .transforms import ChirpParams, TransformPlan, apply_transform, daft, daft_matrix, dft_matrix, idaft
from .channel import (
    PathSet,
    PrefixSpec,
    PulseKernel,
    ChannelOperator,
    ArrayGeometry,
    composite_channel,
    per_path_idid,
    per_path_fdfd,
    virtual_idid_expansion,
    mimo_channel,
)
from .modem import Constellation, QPSK, Waveform, Frame, modulate, demodulate, effective_channel, AccessMap
from .estimation import PilotLayout, EstimatedChannel, estimate_idid, estimate_frac_doppler, estimate_fdfd
from .detectors import DetectorConfig, DetectionResult, detect
from .impairments import ImpairmentConfig, phn_matrix, cfo_matrix, impaired_channel
from .metrics import CostModel, BerAccumulator, flops, im_rate, ber_update, ccdf

__all__ = [name for name in dir() if not name.startswith("_")]
