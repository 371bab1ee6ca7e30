"""Beacon-rate congestion control for VANETs: Swarm FREDY, DIFRA, and a
window-level highway simulator to compare them."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    BeaconRateSet, ChannelParams, Difra, Fixed, Fredy, RadioParams, ScenarioConfig,
    SdidiParams, fredy, load_config, validate_config,
)

__all__ = [
    "BeaconRateSet", "ChannelParams", "Difra", "Fixed", "Fredy", "RadioParams",
    "ScenarioConfig", "SdidiParams", "fredy", "load_config", "validate_config",
]
