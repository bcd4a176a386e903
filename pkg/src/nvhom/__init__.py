"""Two-photon interference between remote solid-state emitters.

Analytic correlation models, a Monte Carlo click-stream simulator, a TCSPC
correlator, least-squares fitting, Stark tuning and noise budgeting.
"""

from .errors import ConfigError, DomainError, FitError, NotFoundError, NvHomError, ValidityError
from .model import (AutocorrParams, EmitterModel, PairConfig, dephasing_envelope, dip_fwhm, g1,
                    g2_auto, g2_cross, interference_feature_width, with_background)

__version__ = "0.1.0"

__all__ = [
    "AutocorrParams", "EmitterModel", "PairConfig", "g1", "g2_auto", "g2_cross",
    "dephasing_envelope", "with_background", "interference_feature_width", "dip_fwhm",
    "NvHomError", "DomainError", "ConfigError", "ValidityError", "NotFoundError", "FitError",
]
