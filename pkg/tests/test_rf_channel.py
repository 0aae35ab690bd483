import math

import pytest
from hypothesis import given, strategies as st

from rttsim.rf_channel import (
    SPEED_OF_LIGHT, Channel, DomainError, LinkBudget, Medium, bragg_spacing, free_space_loss,
    fresnel_radius, friis_distance, friis_rx_power, link_attenuation, propagation_delay,
    wavelength,
)

LAM = SPEED_OF_LIGHT / 868e6


def test_wavelength_868():
    assert wavelength(868e6) == pytest.approx(0.34538, abs=1e-5)


def test_friis_unity_at_reference_radius():
    b = LinkBudget(tx_power=3.0, distance=LAM / (4 * math.pi), wavelength=LAM)
    assert friis_rx_power(b) == pytest.approx(3.0, abs=1e-12)


def test_friis_inverse_square():
    p1 = friis_rx_power(LinkBudget(distance=7.0, wavelength=LAM))
    p2 = friis_rx_power(LinkBudget(distance=14.0, wavelength=LAM))
    assert p1 - p2 == pytest.approx(20 * math.log10(2), abs=1e-9)
    assert p1 - p2 == pytest.approx(6.0206, abs=1e-4)


def test_friis_10m_at_868():
    oracle = 20 * math.log10(0.34538 / (4 * math.pi * 10))
    p = friis_rx_power(LinkBudget.at_frequency(868e6, distance=10.0))
    assert p == pytest.approx(-51.2, abs=0.1)
    assert p == pytest.approx(oracle, abs=1e-3)


def test_friis_distance_examples():
    b = LinkBudget(tx_power=0.0, wavelength=LAM)
    assert friis_distance(0.0, b) == pytest.approx(LAM / (4 * math.pi))
    p10 = friis_rx_power(LinkBudget(distance=10.0, wavelength=LAM))
    assert friis_distance(p10, b) == pytest.approx(10.0, abs=1e-6)
    r1 = friis_distance(-40.0, b)
    half = -40.0 - 10 * math.log10(2)
    assert friis_distance(half, b) / r1 == pytest.approx(math.sqrt(2), rel=1e-12)


def test_friis_distance_rejects_gain():
    with pytest.raises(DomainError):
        friis_distance(1.0, LinkBudget(tx_power=0.0, wavelength=LAM))


@given(st.floats(min_value=LAM / (4 * math.pi), max_value=1e4),
       st.floats(min_value=-10, max_value=20), st.floats(min_value=0, max_value=6))
def test_friis_round_trip(r, tx, gain):
    b = LinkBudget(tx_power=tx, distance=r, wavelength=LAM, tx_gain=gain, rx_gain=gain)
    assert friis_distance(friis_rx_power(b), b) == pytest.approx(r, rel=1e-9)
    assert friis_rx_power(b) <= b.eirp + 1e-9


@pytest.mark.parametrize("d, lam", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_free_space_loss_domain(d, lam):
    with pytest.raises(DomainError):
        free_space_loss(d, lam)


def test_propagation_delay_examples():
    cable = Medium.cable()
    assert propagation_delay(0.0, cable) == 0.0
    assert propagation_delay(9.2244, cable) == pytest.approx(1 / 26e6, rel=1e-5)
    assert propagation_delay(18.0, cable) == pytest.approx(7.506e-8, abs=1e-11)
    assert propagation_delay(18.0, cable) == pytest.approx(18.0 / (0.8 * 299792458.0), rel=1e-15)


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_propagation_delay_linear(a, b):
    m = Medium.cable()
    assert propagation_delay(a + b, m) == pytest.approx(
        propagation_delay(a, m) + propagation_delay(b, m), rel=1e-15, abs=1e-30)


def test_medium_invariants():
    assert Medium.air().velocity == SPEED_OF_LIGHT
    assert Medium.cable().attenuation_per_meter == 0.14
    with pytest.raises(DomainError):
        Medium.cable(velocity_factor=0.0)
    with pytest.raises(DomainError):
        Medium.cable(velocity_factor=1.2)


def test_fresnel_examples():
    assert fresnel_radius(1, 0.34538, 50, 50) == pytest.approx(2.938, abs=0.01)
    assert fresnel_radius(1, LAM, 30, 30) == pytest.approx(math.sqrt(LAM * 60 / 4))
    assert fresnel_radius(4, LAM, 12, 31) == pytest.approx(2 * fresnel_radius(1, LAM, 12, 31))
    with pytest.raises(DomainError):
        fresnel_radius(0, LAM, 1, 1)


@given(st.floats(min_value=0.01, max_value=0.99))
def test_fresnel_max_at_midpoint(frac):
    d = 100.0
    assert fresnel_radius(1, LAM, frac * d, (1 - frac) * d) <= fresnel_radius(1, LAM, d / 2, d / 2) + 1e-12


def test_bragg_examples():
    assert bragg_spacing(1, LAM, math.pi / 2) == pytest.approx(LAM / 2)
    assert bragg_spacing(2, LAM, 0.3) == pytest.approx(2 * bragg_spacing(1, LAM, 0.3))
    assert bragg_spacing(1, 0.34538, math.pi / 6) == pytest.approx(0.34538, abs=1e-6)
    with pytest.raises(DomainError):
        bragg_spacing(1, LAM, 0.0)


def test_link_attenuation_examples():
    cable = Medium.cable()
    assert link_attenuation(LinkBudget(distance=100.0), cable) == pytest.approx(14.0)
    assert link_attenuation(LinkBudget(distance=0.0, fixed_attenuation=60.0), cable) == 60.0
    assert link_attenuation(LinkBudget(distance=18.0, fixed_attenuation=57.48), cable) == pytest.approx(60.0, abs=0.01)
    assert Channel.cable_with_total(18.0, 60.0).attenuation() == pytest.approx(60.0, abs=1e-12)


@given(st.floats(0, 40), st.floats(0, 40))
def test_attenuators_stack(a, b):
    m = Medium.cable()
    two = link_attenuation(LinkBudget(distance=5.0, fixed_attenuation=a), m) + b
    one = link_attenuation(LinkBudget(distance=5.0, fixed_attenuation=a + b), m)
    assert two == pytest.approx(one, abs=1e-9)


def test_air_attenuation_matches_friis():
    ch = Channel(medium=Medium.air(), distance=10.0, fixed_attenuation=0.0)
    assert ch.attenuation() == pytest.approx(-friis_rx_power(ch.budget()), abs=1e-9)
