"""SINR, eavesdropping SINR, radar SCNR and transmit power of a beamformer state.

Everything here is linear scale; dB conversion happens in ``to_db`` at
reporting boundaries only.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, List, Tuple, TypedDict

import numpy as np

from .em_core import EmBeamformer, EmDictionary, SelectionMatrix, assemble_em_beamformer
from .errors import ChannelError

if TYPE_CHECKING:
    from .channel import ChannelSet

logger = logging.getLogger(__name__)

POWER_TOL = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """Noise powers in watts at the Bobs, at Eve and at the radar receiver."""

    sigma2_bob: float
    sigma2_eve: float
    sigma2_radar: float

    def __post_init__(self) -> None:
        if min(self.sigma2_bob, self.sigma2_eve, self.sigma2_radar) <= 0:
            raise ChannelError("noise powers must be positive")

    @classmethod
    def from_dbm(cls, bob_dbm: float, eve_dbm: float, radar_dbm: float) -> "NoiseModel":
        return cls(dbm_to_watts(bob_dbm), dbm_to_watts(eve_dbm), dbm_to_watts(radar_dbm))


@dataclass(frozen=True)
class BeamformerState:
    """Joint decision variables (S_F, S_W, F_BB, w_BB) plus the FP auxiliary γ.

    Columns ``0..K-1`` of ``digital_precoder`` carry the Bob streams, the rest
    are radar probing streams.
    """

    sel_tx: SelectionMatrix
    sel_rx: SelectionMatrix
    digital_precoder: np.ndarray
    digital_combiner: np.ndarray
    gamma: float = 0.0
    feasible: bool = True
    flags: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "digital_precoder", np.array(self.digital_precoder, dtype=complex))
        object.__setattr__(self, "digital_combiner", np.array(self.digital_combiner, dtype=complex).reshape(-1))

    def replace(self, **changes: object) -> "BeamformerState":
        return replace(self, **changes)  # type: ignore[arg-type]

    def em_beamformers(self, dictionary: EmDictionary) -> Tuple[EmBeamformer, EmBeamformer]:
        return assemble_em_beamformer(dictionary, self.sel_tx), assemble_em_beamformer(dictionary, self.sel_rx)


class MetricsReport(TypedDict):
    """Linear-scale metrics of one state."""

    scnr: float
    sinr: List[float]
    eve_sinr: List[float]
    power_w: float


def dbm_to_watts(dbm: float) -> float:
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def to_db(value: float) -> float:
    """10·log10, with -inf for zero."""
    return float(10.0 * np.log10(value)) if value > 0 else float("-inf")


def stream_sinr(signals: np.ndarray, k: int, sigma2: float) -> float:
    """SINR of stream k given the per-stream received amplitudes."""
    power = np.abs(signals) ** 2
    return float(power[k] / (power.sum() - power[k] + sigma2))


def bob_sinr(k: int, channels: "ChannelSet", em_tx: EmBeamformer, state: BeamformerState) -> float:
    row = channels.bobs[k].effective_row(em_tx, channels.bob_polarizations[k])
    return stream_sinr(row @ state.digital_precoder, k, channels.noise.sigma2_bob)


def eve_sinr(k: int, channels: "ChannelSet", em_tx: EmBeamformer, state: BeamformerState) -> float:
    row = channels.eve.effective_row(em_tx, channels.eve_polarization)
    return stream_sinr(row @ state.digital_precoder, k, channels.noise.sigma2_eve)


def radar_quadratic_forms(
    channels: "ChannelSet", em_tx: EmBeamformer, em_rx: EmBeamformer, state: BeamformerState
) -> Tuple[float, float]:
    """(numerator, denominator) of the SCNR ratio, each computed as squared row norms."""
    w = state.digital_combiner
    F = state.digital_precoder
    numerator = float(np.sum(np.abs(w.conj() @ channels.target.radar_matrix(em_tx, em_rx) @ F) ** 2))
    clutter = sum(float(np.sum(np.abs(w.conj() @ c.radar_matrix(em_tx, em_rx) @ F) ** 2)) for c in channels.clutters)
    denominator = clutter + channels.noise.sigma2_radar * float(np.vdot(w, w).real)
    return numerator, denominator


def radar_scnr(channels: "ChannelSet", em_tx: EmBeamformer, em_rx: EmBeamformer, state: BeamformerState) -> float:
    if not np.any(state.digital_combiner):
        raise ChannelError("radar combiner must be nonzero")
    numerator, denominator = radar_quadratic_forms(channels, em_tx, em_rx, state)
    return numerator / denominator


def transmit_power(state: BeamformerState) -> float:
    return float(np.sum(np.abs(state.digital_precoder) ** 2))


def evaluate_state(channels: "ChannelSet", dictionary: EmDictionary, state: BeamformerState) -> MetricsReport:
    em_tx, em_rx = state.em_beamformers(dictionary)
    return {
        "scnr": radar_scnr(channels, em_tx, em_rx, state),
        "sinr": [bob_sinr(k, channels, em_tx, state) for k in range(channels.K)],
        "eve_sinr": [eve_sinr(k, channels, em_tx, state) for k in range(channels.K)],
        "power_w": transmit_power(state),
    }
