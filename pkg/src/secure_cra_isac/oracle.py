"""Brute-force references for small instances.

Nothing here is used by the optimization path; these are the slow, obvious
computations the fast factored code is checked against: exhaustive mode
enumeration, dense channel materialization, Monte Carlo SINR estimates and a
few numerical identities the algorithm relies on.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .channel import DENSE_LIMIT, ChannelSet
from .conic_kernel import ConicBackend
from .em_core import EmDictionary, SelectionMatrix
from .errors import OracleBudgetError, SubproblemInfeasibleError
from .metrics import (
    BeamformerState,
    MetricsReport,
    evaluate_state,
    radar_quadratic_forms,
    radar_scnr,
    stream_sinr,
    transmit_power,
)
from .optimizer import (
    JointOptimizer,
    ProblemConfig,
    generalized_rayleigh_maximizer,
    mm_linearize_quadratic,
    update_gamma,
)

logger = logging.getLogger(__name__)

ENUMERATION_BUDGET = 10_000
TINY_LIMITS = {"N": 2, "M": 8, "P": 4, "K": 1, "C": 1, "L": 2}


@dataclass(frozen=True)
class TinyScenario:
    """A realization small enough for exhaustive enumeration of (S_F, S_W)."""

    channels: ChannelSet
    dictionary: EmDictionary
    problem: ProblemConfig
    seed: int = 0

    def __post_init__(self) -> None:
        links = (*self.channels.bobs, self.channels.target, *self.channels.clutters)
        sizes = {
            "N": self.channels.N,
            "M": self.channels.M,
            "P": self.dictionary.P,
            "K": self.channels.K,
            "C": self.channels.C,
            "L": max(link.L for link in links),
        }
        for name, limit in TINY_LIMITS.items():
            if sizes[name] > limit:
                raise OracleBudgetError(f"tiny scenario needs {name} <= {limit}, got {sizes[name]}")
        if self.enumeration_size > ENUMERATION_BUDGET:
            raise OracleBudgetError(f"P^(2N) = {self.enumeration_size} exceeds {ENUMERATION_BUDGET}")

    @property
    def enumeration_size(self) -> int:
        return int(self.dictionary.P ** (2 * self.channels.N))


@dataclass(frozen=True)
class SearchResult:
    scnr: float
    sel_tx: SelectionMatrix
    sel_rx: SelectionMatrix
    state: BeamformerState
    feasible_pairs: int


def _one_hot_selections(P: int, N: int) -> Iterator[SelectionMatrix]:
    for indices in itertools.product(range(P), repeat=N):
        yield SelectionMatrix.one_hot(indices, P)


def exhaustive_em_search(tiny: TinyScenario, backend: Optional[ConicBackend] = None) -> SearchResult:
    """Best SCNR over every binary (S_F, S_W) pair, each with its own BB polish.

    Every pair is scored by ``JointOptimizer.polish_baseband``, the routine
    ``run`` applies to its own final pair, so the search bounds ``run`` on the
    same scenario. Ties keep the first pair in enumeration order.
    """
    channels, dictionary = tiny.channels, tiny.dictionary
    optimizer = JointOptimizer(tiny.problem, backend)
    best: Optional[Tuple[float, BeamformerState]] = None
    feasible_pairs = 0

    for sel_tx in _one_hot_selections(dictionary.P, channels.N):
        for sel_rx in _one_hot_selections(dictionary.P, channels.N):
            try:
                state, _ = optimizer.polish_baseband(channels, dictionary, sel_tx, sel_rx)
            except SubproblemInfeasibleError as e:
                logger.debug(f"[ORACLE] Pair skipped: {e}")
                continue
            feasible_pairs += 1
            em_tx, em_rx = state.em_beamformers(dictionary)
            value = radar_scnr(channels, em_tx, em_rx, state)
            if best is None or value > best[0]:
                best = (value, state)

    if best is None:
        raise SubproblemInfeasibleError("exhaustive", 0, "no feasible selection pair")
    value, state = best
    logger.info(
        f"[ORACLE] Exhaustive search over {tiny.enumeration_size} pairs "
        f"({feasible_pairs} feasible): best SCNR {10 * np.log10(value):.4f} dB"
    )
    return SearchResult(value, state.sel_tx, state.sel_rx, state, feasible_pairs)


def dense_recompute(channels: ChannelSet, dictionary: EmDictionary, state: BeamformerState) -> MetricsReport:
    """Every metric from dense compound channels and dense EM beamformers."""
    size = 2 * channels.M * channels.N
    if size > DENSE_LIMIT:
        raise OracleBudgetError(f"dense recompute needs 2MN <= {DENSE_LIMIT}, got {size}")
    em_tx, em_rx = state.em_beamformers(dictionary)
    F_em, W_em = em_tx.dense(), em_rx.dense()
    F, w = state.digital_precoder, state.digital_combiner

    sinr = []
    for k, bob in enumerate(channels.bobs):
        row = np.tile(channels.bob_polarizations[k], bob.L) @ bob.dense() @ F_em
        sinr.append(stream_sinr(row @ F, k, channels.noise.sigma2_bob))
    eve_row = channels.eve_polarization @ channels.eve.dense() @ F_em
    eve = [stream_sinr(eve_row @ F, k, channels.noise.sigma2_eve) for k in range(channels.K)]

    def echo_power(link_dense: np.ndarray) -> float:
        return float(np.sum(np.abs(w.conj() @ W_em.T @ link_dense @ F_em @ F) ** 2))

    numerator = echo_power(channels.target.dense())
    denominator = sum(echo_power(c.dense()) for c in channels.clutters)
    denominator += channels.noise.sigma2_radar * float(np.vdot(w, w).real)
    return {"scnr": numerator / denominator, "sinr": sinr, "eve_sinr": eve, "power_w": transmit_power(state)}


def projected_gradient_box_qp(
    kernel: np.ndarray,
    linear: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int = 20_000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Minimize xᵀKx + linearᵀx over a box by projected gradient descent."""
    K = 0.5 * (kernel + kernel.T)
    step = 1.0 / max(2.0 * float(np.linalg.eigvalsh(K)[-1]), np.finfo(float).tiny)
    x = np.clip(np.zeros_like(linear), lower, upper)
    for _ in range(max_iter):
        updated = np.clip(x - step * (2.0 * K @ x + linear), lower, upper)
        if np.linalg.norm(updated - x) <= tol * max(1.0, np.linalg.norm(x)):
            return updated
        x = updated
    return x


def _complex_normal(rng: np.random.Generator, shape: Tuple[int, ...], power: float = 1.0) -> np.ndarray:
    return np.sqrt(power / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _split_power(
    row: np.ndarray, F: np.ndarray, k: int, sigma2: float, n_symbols: int, rng: np.random.Generator
) -> float:
    symbols = _complex_normal(rng, (F.shape[1], n_symbols))
    noise = _complex_normal(rng, (n_symbols,), sigma2)
    per_stream = (row @ F)[:, None] * symbols
    signal = per_stream[k]
    rest = per_stream.sum(axis=0) - signal + noise
    return float(np.mean(np.abs(signal) ** 2) / np.mean(np.abs(rest) ** 2))


def monte_carlo_sinr(
    k: int,
    channels: ChannelSet,
    dictionary: EmDictionary,
    state: BeamformerState,
    n_symbols: int,
    rng: np.random.Generator,
) -> float:
    """Sample estimate of Bob k's SINR from simulated symbols and noise."""
    em_tx = state.em_beamformers(dictionary)[0]
    row = channels.bobs[k].effective_row(em_tx, channels.bob_polarizations[k])
    return _split_power(row, state.digital_precoder, k, channels.noise.sigma2_bob, n_symbols, rng)


def monte_carlo_eve_sinr(
    k: int,
    channels: ChannelSet,
    dictionary: EmDictionary,
    state: BeamformerState,
    n_symbols: int,
    rng: np.random.Generator,
) -> float:
    em_tx = state.em_beamformers(dictionary)[0]
    row = channels.eve.effective_row(em_tx, channels.eve_polarization)
    return _split_power(row, state.digital_precoder, k, channels.noise.sigma2_eve, n_symbols, rng)


def monte_carlo_scnr(
    channels: ChannelSet, dictionary: EmDictionary, state: BeamformerState, n_symbols: int, rng: np.random.Generator
) -> float:
    """Sample estimate of the SCNR for the realized scattering matrices."""
    em_tx, em_rx = state.em_beamformers(dictionary)
    F, w = state.digital_precoder, state.digital_combiner
    symbols = _complex_normal(rng, (F.shape[1], n_symbols))
    noise = _complex_normal(rng, (channels.N, n_symbols), channels.noise.sigma2_radar)
    echo = w.conj() @ channels.target.radar_matrix(em_tx, em_rx) @ F @ symbols
    rest = w.conj() @ noise
    for clutter in channels.clutters:
        rest = rest + w.conj() @ clutter.radar_matrix(em_tx, em_rx) @ F @ symbols
    return float(np.mean(np.abs(echo) ** 2) / np.mean(np.abs(rest) ** 2))


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def random_state(tiny: TinyScenario, rng: np.random.Generator) -> BeamformerState:
    """Random one-hot selections, a full-power random precoder and a random unit combiner."""
    N, P = tiny.channels.N, tiny.dictionary.P
    F = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    F *= np.sqrt(tiny.problem.p_t_watts) / np.linalg.norm(F)
    w = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return BeamformerState(
        SelectionMatrix.one_hot(rng.integers(P, size=N), P),
        SelectionMatrix.one_hot(rng.integers(P, size=N), P),
        F,
        w / np.linalg.norm(w),
    )


def _relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


def check_dense_agreement(tiny: TinyScenario, state: BeamformerState, tol: float = 1e-10) -> CheckResult:
    fast = evaluate_state(tiny.channels, tiny.dictionary, state)
    dense = dense_recompute(tiny.channels, tiny.dictionary, state)
    gaps = [_relative_gap(fast["scnr"], dense["scnr"])]
    gaps += [_relative_gap(a, b) for a, b in zip(fast["sinr"], dense["sinr"])]
    gaps += [_relative_gap(a, b) for a, b in zip(fast["eve_sinr"], dense["eve_sinr"])]
    worst = max(gaps)
    return CheckResult("dense_agreement", worst <= tol, f"max relative gap {worst:.2e}")


def check_fp_identity(tiny: TinyScenario, state: BeamformerState, tol: float = 1e-10) -> CheckResult:
    em_tx, em_rx = state.em_beamformers(tiny.dictionary)
    numerator, denominator = radar_quadratic_forms(tiny.channels, em_tx, em_rx, state)
    gamma = update_gamma(state, tiny.channels, tiny.dictionary)
    residual = abs(numerator - gamma * denominator)
    return CheckResult("fp_identity", residual <= tol * numerator, f"|num - γ·den| = {residual:.2e}")


def check_mm_minorant(rng: np.random.Generator, dim: int = 8, samples: int = 1000) -> CheckResult:
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    K = np.real(G.conj().T @ G)
    x0 = rng.standard_normal(dim)
    minorant = mm_linearize_quadratic(K, x0)
    f0 = float(x0 @ K @ x0)
    tangency = abs(minorant(x0) - f0)
    points = x0 + rng.standard_normal((samples, dim))
    values = np.einsum("si,ij,sj->s", points, K, points)
    margin = float(np.min(values - (minorant.constant + points @ minorant.gradient)))
    passed = tangency <= 1e-10 * max(1.0, f0) and margin >= -1e-12 * max(1.0, float(values.max()))
    return CheckResult("mm_minorant", passed, f"tangency {tangency:.2e}, min margin {margin:.2e}")


def check_rayleigh_dominance(rng: np.random.Generator, n: int = 4, samples: int = 10_000) -> CheckResult:
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    C = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    B1 = A @ A.conj().T
    B2 = C @ C.conj().T + np.eye(n)
    w, _ = generalized_rayleigh_maximizer(B1, B2)

    def quotient(v: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("si,ij,sj->s", v.conj(), B1, v) / np.einsum("si,ij,sj->s", v.conj(), B2, v))

    best = float(quotient(w[None, :])[0])
    trials = rng.standard_normal((samples, n)) + 1j * rng.standard_normal((samples, n))
    challenger = float(quotient(trials).max())
    detail = f"{best:.6g} vs best random {challenger:.6g}"
    return CheckResult("rayleigh_dominance", best >= challenger * (1 - 1e-12), detail)


def run_property_suite(tiny_instances: Sequence[TinyScenario], rng: np.random.Generator) -> List[CheckResult]:
    """Aggregate PASS/FAIL per property over every instance."""
    names = ("dense_agreement", "fp_identity", "mm_minorant", "rayleigh_dominance")
    grouped: Dict[str, List[CheckResult]] = {name: [] for name in names}
    for tiny in tiny_instances:
        state = random_state(tiny, rng)
        for result in (check_dense_agreement(tiny, state), check_fp_identity(tiny, state)):
            grouped[result.name].append(result)
        grouped["mm_minorant"].append(check_mm_minorant(rng))
        grouped["rayleigh_dominance"].append(check_rayleigh_dominance(rng))
    summary = []
    for name, results in grouped.items():
        failures = [r for r in results if not r.passed]
        detail = failures[0].detail if failures else f"{len(results)} instances"
        summary.append(CheckResult(name, not failures, detail))
    return summary
