"""Round-trip-time ranging simulator for sub-GHz transceivers."""

from .campaign import (
    attenuation_sweep, batch_size_study, distance_sweep, measure, run_scenario,
    trilateration_study,
)
from .config import CampaignConfig, ConfigError, Scenario, load_config, parse_config
from .estimation import (
    BatchStats, CleaningPolicy, ExpFit, OffsetModel, batch_stats, calibrate_offset, clean_rssi,
    clean_rtt, cycles_to_distance, fit_attenuation_offset, required_samples, sigma_correction,
)
from .localization import Anchor, RangeObservation, gdop, plan_budget, rssi_range, trilaterate
from .node_sim import (
    AnalogDelayModel, ClockModel, DataRate, Frequency, Modulation, Node, RfSettings,
)
from .ranging_protocol import (
    CampaignCommand, RangingPacket, Role, RoundTrip, Station, corrected_rtt, decode_packet,
    encode_packet, run_campaign, run_round_trip,
)
from .rf_channel import Channel, LinkBudget, Medium, friis_distance, friis_rx_power

__version__ = "0.1.0"
