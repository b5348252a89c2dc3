"""Relay-assisted underwater wireless optical CDMA link simulator.

Submodules:
  ooc        - optical orthogonal code generation, validation, encoding
  transport  - Monte Carlo photon transport and impulse responses
  turbulence - scintillation index, lognormal fading statistics
  mai        - interference-pattern combinatorics
  ber        - analytic photon-counting BER (uplink, downlink, p2p)
  linksim    - bit-level Monte Carlo of the detect-and-forward chain
  scenario   - scenario files, campaigns, CSV output
"""

from .ber import (DetectorParams, HopSpec, LinkEvaluation, PowerPlan,
                  QuadratureSpec, downlink_ber, p2p_ber, thermal_variance,
                  uplink_ber)
from .linksim import SimResult, SimRun, run_simulation
from .mai import pattern_distribution
from .ooc import (ChipFrame, OocCodebook, OocParams, encode_bits,
                  generate_codebook, max_users, validate_codebook)
from .scenario import NetworkScenario, load_scenario, run_campaign
from .transport import (ImpulseResponse, LinkGeometry, McTransportConfig,
                        WaterOptics, channel_loss, simulate_impulse_response)
from .turbulence import (FadingModel, TurbulenceParams, fading_from_scintillation,
                         sample_fading, scintillation_index)

__version__ = "0.1.0"

__all__ = [
    "ChipFrame", "DetectorParams", "FadingModel", "HopSpec", "ImpulseResponse",
    "LinkEvaluation", "LinkGeometry", "McTransportConfig", "NetworkScenario",
    "OocCodebook", "OocParams", "PowerPlan", "QuadratureSpec", "SimResult",
    "SimRun", "TurbulenceParams", "WaterOptics", "channel_loss",
    "downlink_ber", "encode_bits", "fading_from_scintillation",
    "generate_codebook", "load_scenario", "max_users", "p2p_ber",
    "pattern_distribution", "run_campaign", "run_simulation", "sample_fading",
    "scintillation_index", "simulate_impulse_response", "thermal_variance",
    "uplink_ber", "validate_codebook",
]
