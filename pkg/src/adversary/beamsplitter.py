"""
Beamsplitter (photon-number splitting) attack on weak coherent pulses.

Model: Poissonian source, threshold detectors at Bob, and a lossless channel
for Eve. The attack is fully feasible when Eve can serve Bob's whole expected
click rate from multiphoton pulses alone.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np
from scipy.optimize import brentq
from scipy.stats import poisson

logger = logging.getLogger(__name__)

DETECTION_MODEL = ("threshold detectors, Poissonian source, lossless channel for Eve; "
                   "Bob's click rate taken as 1 - exp(-mu * eta * detector_efficiency)")


@dataclass(frozen=True)
class PhotonSourceModel:
    mean_photon_number: float
    channel_transmittance: float
    detector_efficiency: float = 1.0

    def __post_init__(self):
        if self.mean_photon_number <= 0:
            raise ValueError(f"Mean photon number must be positive, got {self.mean_photon_number}")
        if not 0 < self.channel_transmittance <= 1:
            raise ValueError(f"Channel transmittance must lie in (0, 1], got {self.channel_transmittance}")
        if not 0 < self.detector_efficiency <= 1:
            raise ValueError(f"Detector efficiency must lie in (0, 1], got {self.detector_efficiency}")

    @property
    def multiphoton_probability(self) -> float:
        return float(poisson.sf(1, self.mean_photon_number))

    @property
    def detection_rate(self) -> float:
        return float(-np.expm1(-self.mean_photon_number * self.channel_transmittance * self.detector_efficiency))


@dataclass(frozen=True)
class AttackReport:
    multiphoton_probability: float
    detection_rate: float
    fraction_tapped: float
    eve_key_information_fraction: float
    feasible: bool
    detection_model: str = DETECTION_MODEL

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def beamsplitter_attack(model: PhotonSourceModel) -> AttackReport:
    """Eve keeps one photon of every multiphoton pulse and forwards the rest
    losslessly, blocking single-photon pulses as needed to keep Bob's click
    rate unchanged.

    fraction_tapped is the share of Bob's clicks that came from tapped pulses,
    P(n >= 2) / click rate, capped at 1. For weak pulses it behaves like
    mu / (2 eta). Eve learns those key bits outright, so the same number is
    reported as her key information fraction."""
    p_multi = model.multiphoton_probability
    rate = model.detection_rate
    feasible = p_multi >= rate
    fraction = 1.0 if feasible else p_multi / rate
    if feasible:
        logger.info(f"Beamsplitter attack feasible: P(n>=2)={p_multi:.3e} >= click rate {rate:.3e}")
    return AttackReport(p_multi, rate, fraction, fraction, feasible)


def crossover_closed_form(mean_photon_number: float, detector_efficiency: float = 1.0) -> float:
    p_multi = float(poisson.sf(1, mean_photon_number))
    return float(-np.log1p(-p_multi) / (mean_photon_number * detector_efficiency))


def beamsplitter_crossover(mean_photon_number: float, detector_efficiency: float = 1.0) -> float:
    """Transmittance below which the attack becomes feasible."""
    p_multi = float(poisson.sf(1, mean_photon_number))

    def gap(eta: float) -> float:
        return float(-np.expm1(-mean_photon_number * eta * detector_efficiency)) - p_multi

    if gap(1.0) <= 0:
        raise ValueError(f"Attack is feasible for every transmittance at mu={mean_photon_number}, "
                         f"detector efficiency {detector_efficiency}")
    return float(brentq(gap, 0.0, 1.0, xtol=1e-15, rtol=1e-14))
