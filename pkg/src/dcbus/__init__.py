"""DC-bus voltage loop design and verification for single-phase grid-connected VSCs."""
from .design import (
    ControllerGains,
    DCBusVoltageTuner,
    DesignPoint,
    bandwidth_for_attenuation,
    beta_from_phase_margin,
    build_gdp,
    build_gvl,
    design_conventional,
    design_improved,
    phase_margin_from_beta,
    xi_from_phase_margin,
)
from .plant import RATED_PLANT, VscParams

__version__ = "0.1.0"

__all__ = [
    "ControllerGains",
    "DCBusVoltageTuner",
    "DesignPoint",
    "RATED_PLANT",
    "VscParams",
    "bandwidth_for_attenuation",
    "beta_from_phase_margin",
    "build_gdp",
    "build_gvl",
    "design_conventional",
    "design_improved",
    "phase_margin_from_beta",
    "xi_from_phase_margin",
]
