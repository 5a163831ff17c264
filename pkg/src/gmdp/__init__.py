"""Source image estimation for determined blind source separation.

Projection back, the minimal distortion principle, and its generalization
to mixed-norm residual models solved by iteratively reweighted least
squares, together with AuxIVA, an STFT, synthetic mixtures and
scale-invariant metrics.
"""
from .auxiva import AuxIvaConfig, demix_apply, separate
from .core import (
    ConfigError,
    GMDPError,
    InvalidExponent,
    MixedNormParams,
    NonFiniteEntry,
    ShapeMismatch,
    SingularCovariance,
    SingularDemixing,
    check_demixing,
    load_spectrogram,
    save_spectrogram,
    validate_compatible,
)
from .metrics import EvalReport, evaluate, si_sdr, si_sir
from .scaling import (
    ScalingResult,
    apply_scaling,
    estimate_images,
    gmdp,
    mdp,
    mixed_norm,
    projection_back,
)
from .simulate import MixConfig, make_filters, mix, synthetic_sources
from .stft import StftConfig

__version__ = "0.1.0"
