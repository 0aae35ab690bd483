"""Physical link between two nodes.

Path loss (Friis), propagation delay in air or coaxial cable, and the
Fresnel / Bragg geometry helpers used when picking a carrier frequency.
Everything works in the dB / dBm domain; linear power only appears inside
the Friis evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

#: LL335 low-loss coax, 14 dB per 100 m
CABLE_ATTENUATION_DB_PER_M = 0.14
CABLE_VELOCITY_FACTOR = 0.8


class DomainError(ValueError):
    """Argument outside the domain where a formula is physical."""


class MediumKind(Enum):
    AIR = "air"
    CABLE = "cable"


@dataclass(frozen=True)
class Medium:
    kind: MediumKind
    velocity_factor: float = 1.0
    attenuation_per_meter: float = 0.0  # dB/m, cable only

    def __post_init__(self):
        if not 0.0 < self.velocity_factor <= 1.0:
            raise DomainError(f"velocity_factor must be in (0, 1], got {self.velocity_factor}")
        if self.kind is MediumKind.AIR:
            if self.velocity_factor != 1.0:
                raise DomainError("air has velocity_factor 1.0")
            if self.attenuation_per_meter != 0.0:
                raise DomainError("air has no per-meter attenuation; use the Friis budget")
        if self.attenuation_per_meter < 0:
            raise DomainError("attenuation_per_meter must be >= 0")

    @classmethod
    def air(cls) -> "Medium":
        return cls(MediumKind.AIR)

    @classmethod
    def cable(cls, velocity_factor: float = CABLE_VELOCITY_FACTOR,
              attenuation_per_meter: float = CABLE_ATTENUATION_DB_PER_M) -> "Medium":
        return cls(MediumKind.CABLE, velocity_factor, attenuation_per_meter)

    @property
    def velocity(self) -> float:
        return SPEED_OF_LIGHT * self.velocity_factor


def wavelength(frequency_hz: float) -> float:
    if frequency_hz <= 0:
        raise DomainError("frequency must be positive")
    return SPEED_OF_LIGHT / frequency_hz


@dataclass(frozen=True)
class LinkBudget:
    """Inputs of the free-space link equation.

    Powers in dBm, gains in dBi, ``fixed_attenuation`` in dB (the attenuator
    array), ``distance`` and ``wavelength`` in meters.
    """

    tx_power: float = 0.0
    distance: float = 1.0
    wavelength: float = SPEED_OF_LIGHT / 868e6
    tx_gain: float = 0.0
    rx_gain: float = 0.0
    fixed_attenuation: float = 0.0
    rx_power: float | None = None

    @classmethod
    def at_frequency(cls, frequency_hz: float, **kwargs) -> "LinkBudget":
        return cls(wavelength=wavelength(frequency_hz), **kwargs)

    @property
    def eirp(self) -> float:
        return self.tx_power + self.tx_gain + self.rx_gain


def free_space_loss(distance: float, wavelength_m: float) -> float:
    """Free-space path loss in dB, ``-20 log10(lambda / (4 pi r))``."""
    if distance <= 0 or wavelength_m <= 0:
        raise DomainError("distance and wavelength must be positive")
    return -20.0 * math.log10(wavelength_m / (4.0 * math.pi * distance))


def friis_rx_power(budget: LinkBudget) -> float:
    """Maximum received power in dBm for the budget's distance."""
    return budget.eirp - free_space_loss(budget.distance, budget.wavelength)


def friis_distance(rx_power: float, budget: LinkBudget) -> float:
    """Invert :func:`friis_rx_power`: distance (m) that yields ``rx_power``."""
    if budget.wavelength <= 0:
        raise DomainError("wavelength must be positive")
    excess = budget.eirp - rx_power
    if excess < 0:
        raise DomainError(
            f"received power {rx_power} dBm exceeds transmitted {budget.eirp} dBm"
        )
    return budget.wavelength / (4.0 * math.pi) * 10.0 ** (excess / 20.0)


def propagation_delay(distance: float, medium: Medium) -> float:
    if distance < 0:
        raise DomainError("distance must be >= 0")
    return distance / medium.velocity


def fresnel_radius(n: int, wavelength_m: float, d1: float, d2: float) -> float:
    """Radius of the n-th Fresnel zone at a point d1 / d2 from the antennas."""
    if n < 1:
        raise DomainError("Fresnel zone index starts at 1")
    if d1 <= 0 or d2 <= 0 or wavelength_m <= 0:
        raise DomainError("d1, d2 and wavelength must be positive")
    return math.sqrt(n * wavelength_m * d1 * d2 / (d1 + d2))


def bragg_spacing(n: int, wavelength_m: float, theta: float) -> float:
    """Reflector spacing giving constructive interference of order n at angle theta."""
    if n < 1:
        raise DomainError("interference order starts at 1")
    if not 0.0 < theta <= math.pi / 2:
        raise DomainError("theta must be in (0, pi/2]")
    return n * wavelength_m / (2.0 * math.sin(theta))


def link_attenuation(budget: LinkBudget, medium: Medium) -> float:
    """Total attenuation (dB) seen by the receiver, including the attenuator array."""
    if medium.kind is MediumKind.CABLE:
        return medium.attenuation_per_meter * budget.distance + budget.fixed_attenuation
    return (free_space_loss(budget.distance, budget.wavelength)
            + budget.fixed_attenuation - budget.tx_gain - budget.rx_gain)


@dataclass(frozen=True)
class Channel:
    """A concrete link: medium, length, attenuator setting and fault injection.

    ``loss_probability`` drops packets and ``corruption_probability`` flips one
    bit of a reply frame; both exist to exercise the retry path.
    """

    medium: Medium = Medium.cable()
    distance: float = 2.0
    fixed_attenuation: float = 60.0
    frequency_hz: float = 868e6
    tx_gain: float = 0.0
    rx_gain: float = 0.0
    loss_probability: float = 0.0
    corruption_probability: float = 0.0

    def __post_init__(self):
        if self.distance < 0:
            raise DomainError("distance must be >= 0")
        for p in (self.loss_probability, self.corruption_probability):
            if not 0.0 <= p <= 1.0:
                raise DomainError("fault probabilities must be in [0, 1]")

    @classmethod
    def cable_with_total(cls, length: float, total_attenuation: float, **kwargs) -> "Channel":
        """Cable of ``length`` m with the attenuator set so the total is ``total_attenuation`` dB."""
        medium = kwargs.pop("medium", Medium.cable())
        fixed = total_attenuation - medium.attenuation_per_meter * length
        if fixed < 0:
            raise DomainError("cable alone exceeds the requested total attenuation")
        return cls(medium=medium, distance=length, fixed_attenuation=fixed, **kwargs)

    def budget(self, tx_power: float = 0.0) -> LinkBudget:
        return LinkBudget(tx_power=tx_power, distance=max(self.distance, 1e-9),
                          wavelength=wavelength(self.frequency_hz),
                          tx_gain=self.tx_gain, rx_gain=self.rx_gain,
                          fixed_attenuation=self.fixed_attenuation)

    def attenuation(self) -> float:
        if self.medium.kind is MediumKind.CABLE:
            return self.medium.attenuation_per_meter * self.distance + self.fixed_attenuation
        return link_attenuation(self.budget(), self.medium)

    def delay(self) -> float:
        return propagation_delay(self.distance, self.medium)

    def with_frequency(self, frequency_hz: float) -> "Channel":
        return replace(self, frequency_hz=frequency_hz)
