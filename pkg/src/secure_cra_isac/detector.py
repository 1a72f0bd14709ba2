"""Monte Carlo energy detection on the combined radar output.

Each trial draws a fresh target scattering matrix, fresh clutter scattering
matrices, unit-power data symbols and receiver noise, and forms
y_r = w_BBᴴ (Σ_i W_EMᵀ M_i F_EM F_BB x + n) over a block of symbols. The
statistic is |y_r|² averaged over the block. Thresholds are empirical
quantiles of the target-absent statistics.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Mapping, Optional, Sequence, Tuple, TypedDict

import numpy as np
import pandas as pd

from .channel import ChannelSet, CompoundChannel, ScatteringModel, sample_scattering_matrices
from .em_core import EmDictionary
from .errors import DetectorError
from .metrics import BeamformerState

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_LENGTH = 64
DEFAULT_CHUNK_TRIALS = 4096
MIN_TRIALS_PER_PFA = 10
ROC_COLUMNS = ("scheme", "pfa", "pd", "threshold", "n_trials")


class RocPoint(TypedDict):
    pfa: float
    pd: float
    threshold: float


def binomial_sigma(p: float, n_trials: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n_trials))


def _link_factors(
    channel: CompoundChannel, state: BeamformerState, dictionary: EmDictionary
) -> Tuple[np.ndarray, np.ndarray]:
    """(u, z) with wᴴ W_EMᵀ M F_EM F_BB = Σ_l u_lᵀ Φ_l z_l for any scattering draw Φ."""
    em_tx, em_rx = state.em_beamformers(dictionary)
    u = np.einsum("n,lna->la", state.digital_combiner.conj(), channel.backward(em_rx))
    z = np.einsum("lbn,nj->lbj", channel.forward(em_tx), state.digital_precoder)
    return u, z


def _responses(u: np.ndarray, z: np.ndarray, scattering: np.ndarray) -> np.ndarray:
    """Per-trial stream responses, shape (trials, streams)."""
    return np.einsum("la,tlab,lbj->tj", u, scattering, z)


class _TrialKernel:
    """Everything a chunk of trials needs, precomputed once per state."""

    def __init__(
        self,
        state: BeamformerState,
        channels: ChannelSet,
        dictionary: EmDictionary,
        target_model: ScatteringModel,
        clutter_model: ScatteringModel,
        block_length: int,
    ) -> None:
        self.target = _link_factors(channels.target, state, dictionary)
        self.target_paths = channels.target.L
        self.clutters = [(_link_factors(c, state, dictionary), c.L) for c in channels.clutters]
        self.target_model = target_model
        self.clutter_model = clutter_model
        self.block_length = block_length
        self.streams = state.digital_precoder.shape[1]
        w = state.digital_combiner
        self.noise_power = channels.noise.sigma2_radar * float(np.vdot(w, w).real)

    def _draw(self, rng: np.random.Generator, model: ScatteringModel, trials: int, paths: int) -> np.ndarray:
        return sample_scattering_matrices(rng, model, trials * paths).reshape(trials, paths, 2, 2)

    def _complex_normal(self, rng: np.random.Generator, shape: Tuple[int, ...], power: float) -> np.ndarray:
        return np.sqrt(power / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    def statistics(self, rng: np.random.Generator, trials: int, target_present: bool) -> np.ndarray:
        response = np.zeros((trials, self.streams), dtype=complex)
        if target_present:
            u, z = self.target
            response += _responses(u, z, self._draw(rng, self.target_model, trials, self.target_paths))
        for (u, z), paths in self.clutters:
            response += _responses(u, z, self._draw(rng, self.clutter_model, trials, paths))
        symbols = self._complex_normal(rng, (trials, self.streams, self.block_length), 1.0)
        noise = self._complex_normal(rng, (trials, self.block_length), self.noise_power)
        output = np.einsum("tj,tjb->tb", response, symbols) + noise
        return np.mean(np.abs(output) ** 2, axis=1)


def simulate_statistics(
    state: BeamformerState,
    channels: ChannelSet,
    dictionary: EmDictionary,
    target_model: ScatteringModel,
    n_trials: int,
    rng: np.random.Generator,
    clutter_model: Optional[ScatteringModel] = None,
    block_length: int = DEFAULT_BLOCK_LENGTH,
    chunk_trials: int = DEFAULT_CHUNK_TRIALS,
    jobs: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Detector statistics under H0 (target absent) and H1 (target present).

    Trials are split into chunks, each with its own generator spawned from
    ``rng``, so the result does not depend on ``jobs``.
    """
    if n_trials < 1 or block_length < 1:
        raise DetectorError("n_trials and block_length must be positive")
    kernel = _TrialKernel(state, channels, dictionary, target_model, clutter_model or target_model, block_length)
    sizes = [min(chunk_trials, n_trials - start) for start in range(0, n_trials, chunk_trials)]
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(len(sizes))

    def run_chunk(index: int) -> Tuple[np.ndarray, np.ndarray]:
        chunk_rng = np.random.default_rng(seeds[index])
        h0 = kernel.statistics(chunk_rng, sizes[index], target_present=False)
        h1 = kernel.statistics(chunk_rng, sizes[index], target_present=True)
        return h0, h1

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            chunks = list(executor.map(run_chunk, range(len(sizes))))
    else:
        chunks = [run_chunk(i) for i in range(len(sizes))]
    h0 = np.concatenate([c[0] for c in chunks])
    h1 = np.concatenate([c[1] for c in chunks])
    logger.debug(
        f"[DETECTOR] {n_trials} trials in {len(sizes)} chunks, mean H0 {h0.mean():.3e}, mean H1 {h1.mean():.3e}"
    )
    return h0, h1


def roc_from_statistics(h0: np.ndarray, h1: np.ndarray, pfa_grid: Sequence[float]) -> List[RocPoint]:
    """Empirical-quantile thresholds from H0, detection rates from H1, in increasing pfa."""
    points: List[RocPoint] = []
    for pfa in sorted(float(p) for p in pfa_grid):
        if not 0.0 < pfa < 1.0:
            raise DetectorError(f"pfa values must lie in (0, 1), got {pfa}")
        threshold = float(np.quantile(h0, 1.0 - pfa))
        points.append({"pfa": pfa, "pd": float(np.mean(h1 > threshold)), "threshold": threshold})
    return points


def roc_curve(
    state: BeamformerState,
    channels: ChannelSet,
    dictionary: EmDictionary,
    scattering_model: ScatteringModel,
    n_trials: int,
    pfa_grid: Sequence[float],
    rng: np.random.Generator,
    clutter_model: Optional[ScatteringModel] = None,
    block_length: int = DEFAULT_BLOCK_LENGTH,
    jobs: int = 1,
) -> List[RocPoint]:
    if len(pfa_grid) == 0:
        raise DetectorError("pfa grid is empty")
    outside = [p for p in pfa_grid if not 0.0 < float(p) < 1.0]
    if outside:
        raise DetectorError(f"pfa values must lie in (0, 1), got {outside[0]}")
    required = int(np.ceil(MIN_TRIALS_PER_PFA / min(pfa_grid)))
    if n_trials < required:
        raise DetectorError(f"{n_trials} trials cannot resolve pfa={min(pfa_grid)}; need at least {required}")
    h0, h1 = simulate_statistics(
        state, channels, dictionary, scattering_model, n_trials, rng, clutter_model, block_length, jobs=jobs
    )
    points = roc_from_statistics(h0, h1, pfa_grid)
    logger.info(f"[DETECTOR] ROC over {len(points)} pfa values, pd range {points[0]['pd']:.3f}..{points[-1]['pd']:.3f}")
    return points


def roc_frame(curves: Mapping[str, List[RocPoint]], n_trials: int) -> pd.DataFrame:
    rows = [
        {"scheme": scheme, "pfa": p["pfa"], "pd": p["pd"], "threshold": p["threshold"], "n_trials": n_trials}
        for scheme, points in curves.items()
        for p in points
    ]
    return pd.DataFrame(rows, columns=list(ROC_COLUMNS))
