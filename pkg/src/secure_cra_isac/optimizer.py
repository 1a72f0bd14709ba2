"""Alternating joint EM/BB optimization of the secure ISAC beamformers.

One outer iteration updates, in order, the transmit selection S_F, the
receive selection S_W, the digital precoder F_BB, the digital combiner w_BB
and the fractional-programming auxiliary γ. The three convex blocks are built
as ``ConicProgram`` instances:

  - the SCNR ratio is handled with γ (maximize num - γ·den),
  - the convex numerator is replaced by its tangent minorant at the iterate,
  - Bob SINR floors become second-order cones after a per-stream phase
    rotation that makes the real-part form tight at the iterate,
  - Eve SINR ceilings keep the convex leakage term and replace the convex
    interference term by its tangent minorant,
  - selections are box-relaxed with a linearized penalty pushing entries
    towards 0/1; an iterate still fractional when the penalty is capped is
    rounded and its precoder re-solved.

The trace reports the best constraint-feasible one-hot state seen so far. The
returned state is the baseband polish of the best selection pair, the same
per-pair routine the exhaustive search scores every pair with.

All kernels are contracted to the block's own variable space (P·N for a
selection, 2N² for the re/im lift of F_BB); no 2MN×2MN matrix is formed.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, TypedDict, Union

import numpy as np
import pandas as pd
import scipy.linalg

from .channel import ChannelSet, CompoundChannel
from .conic_kernel import (
    BoxConstraint,
    ConicBackend,
    ConicProgram,
    ConicSolution,
    LinearEquality,
    QuadraticInequality,
    SecondOrderCone,
    get_backend,
)
from .em_core import EmDictionary, SelectionMatrix, assemble_em_beamformer, round_selection
from .errors import ConfigError, DictionaryError, EigenSolveError, SubproblemInfeasibleError
from .metrics import (
    BeamformerState,
    MetricsReport,
    bob_sinr,
    eve_sinr,
    evaluate_state,
    radar_scnr,
    to_db,
    transmit_power,
)

logger = logging.getLogger(__name__)

SINR_REL_TOL = 1e-4
POWER_REL_TOL = 1e-9
MIN_FLOOR = 1e-12
TRACE_COLUMNS = (
    "iteration",
    "scnr_db",
    "min_sinr_db",
    "max_eve_sinr_db",
    "power_w",
    "binariness",
    "iterate_scnr_db",
    "statuses",
)


@dataclass(frozen=True)
class AlgorithmConfig:
    """Outer-loop and subproblem settings.

    Penalty weights start at ``penalty_tx`` / ``penalty_rx`` and grow by
    ``penalty_growth`` per outer iteration up to ``penalty_cap``. They are
    relative to the SCNR surrogate, which is normalized by the current
    numerator value. Once both weights sit at the cap, a still fractional
    iterate is rounded and its precoder re-solved, and the weights stay at
    the cap from then on.

    ``baseband_starts`` is the number of feasibility starts, each with its own
    communication power share, that a fixed selection pair is polished from.
    """

    max_outer_iters: int = 50
    scnr_rel_tol: float = 1e-3
    penalty_tx: float = 1e-3
    penalty_rx: float = 1e-3
    penalty_growth: float = 2.0
    penalty_cap: float = 1e2
    subproblem_tol: float = 1e-7
    subproblem_max_iter: int = 200
    gamma_floor: float = 0.0
    binary_tol: float = 1e-3
    init_comm_power_fraction: float = 0.5
    baseband_starts: int = 3

    def __post_init__(self) -> None:
        positive = (
            "max_outer_iters",
            "scnr_rel_tol",
            "subproblem_tol",
            "subproblem_max_iter",
            "binary_tol",
            "baseband_starts",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"algorithm.{name}", f"must be positive, got {getattr(self, name)}")
        for name in ("penalty_tx", "penalty_rx", "penalty_cap", "gamma_floor"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"algorithm.{name}", f"must be non-negative, got {getattr(self, name)}")
        if not self.penalty_growth >= 1:
            raise ConfigError("algorithm.penalty_growth", f"must be >= 1, got {self.penalty_growth}")
        if not 0 < self.init_comm_power_fraction <= 1:
            raise ConfigError("algorithm.init_comm_power_fraction", "must lie in (0, 1]")

    def penalties(self, iteration: int) -> Tuple[float, float]:
        growth = self.penalty_growth**iteration
        return min(self.penalty_cap, self.penalty_tx * growth), min(self.penalty_cap, self.penalty_rx * growth)

    def penalties_capped(self, iteration: int) -> bool:
        return all(p >= self.penalty_cap for p in self.penalties(iteration))

    def start_fractions(self) -> Tuple[float, ...]:
        """Communication power shares of the baseband starts, the configured share first."""
        ladder = np.linspace(0.2, 0.9, max(self.baseband_starts - 1, 1))
        fractions = (self.init_comm_power_fraction, *(float(f) for f in ladder))
        return tuple(dict.fromkeys(fractions[: self.baseband_starts]))


@dataclass(frozen=True)
class ProblemConfig:
    """Power budget, linear-scale SINR thresholds per Bob and algorithm settings."""

    p_t_watts: float
    eps_bob: Tuple[float, ...]
    eps_eve: Tuple[float, ...]
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "eps_bob", tuple(float(e) for e in self.eps_bob))
        object.__setattr__(self, "eps_eve", tuple(float(e) for e in self.eps_eve))
        if not self.p_t_watts > 0:
            raise ConfigError("p_t_watts", f"must be positive, got {self.p_t_watts}")
        if len(self.eps_bob) != len(self.eps_eve):
            raise ConfigError("eps_eve", "needs one threshold per Bob")
        if any(not e >= 0 for e in self.eps_bob + self.eps_eve):
            raise ConfigError("eps_bob", "thresholds must be non-negative numbers")

    def check_users(self, channels: ChannelSet) -> None:
        if len(self.eps_bob) != channels.K:
            raise ConfigError("eps_bob", f"{len(self.eps_bob)} thresholds for {channels.K} Bobs")


class IterationRecord(TypedDict):
    iteration: int
    scnr: float
    scnr_db: float
    sinr_db: List[float]
    eve_sinr_db: List[float]
    power_w: float
    binariness: float
    iterate_scnr_db: float
    statuses: Dict[str, str]


@dataclass
class IterationTrace:
    """Per-iteration history of one optimization run.

    ``scnr_db`` and the SINR and power columns describe the best feasible
    one-hot state found up to that iteration; ``iterate_scnr_db`` and
    ``binariness`` describe the possibly relaxed iterate itself.
    """

    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    final: Optional[MetricsReport] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def scnr_db(self) -> List[float]:
        return [r["scnr_db"] for r in self.records]

    def to_csv_rows(self) -> List[Dict[str, Union[int, float, str]]]:
        rows: List[Dict[str, Union[int, float, str]]] = []
        for r in self.records:
            rows.append(
                {
                    "iteration": r["iteration"],
                    "scnr_db": r["scnr_db"],
                    "min_sinr_db": min(r["sinr_db"], default=float("nan")),
                    "max_eve_sinr_db": max(r["eve_sinr_db"], default=float("nan")),
                    "power_w": r["power_w"],
                    "binariness": r["binariness"],
                    "iterate_scnr_db": r["iterate_scnr_db"],
                    "statuses": ";".join(f"{k}={v}" for k, v in r["statuses"].items()),
                }
            )
        return rows

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.to_csv_rows(), columns=list(TRACE_COLUMNS))

    def export_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        logger.info(f"[OPTIMIZER] Trace with {len(self.records)} iterations exported to {path}")


@dataclass(frozen=True)
class AffineMinorant:
    """g(x) = constant + gradientᵀ x, tangent to xᵀ K x at the expansion point."""

    constant: float
    gradient: np.ndarray

    def __call__(self, x: np.ndarray) -> float:
        return float(self.constant + self.gradient @ x)


def mm_linearize_quadratic(kernel: np.ndarray, x0: np.ndarray) -> AffineMinorant:
    """Tangent minorant x0ᵀKx0 + 2·Re{x0ᵀK(x − x0)} of a PSD quadratic at x0 (real x)."""
    K = np.real(np.asarray(kernel))
    value = float(x0 @ K @ x0)
    gradient = 2.0 * (K @ x0)
    return AffineMinorant(value - float(gradient @ x0), gradient)


def real_kernel(responses: np.ndarray) -> np.ndarray:
    """Re{Gᴴ G}: for real x, Σ_rows |G x|² = xᵀ Re{Gᴴ G} x."""
    G = np.atleast_2d(responses)
    return np.asarray(G.real.T @ G.real + G.imag.T @ G.imag)


def lift_precoder(F: np.ndarray) -> np.ndarray:
    """Interleaved re/im of vec(F): x[2i], x[2i+1] = Re, Im of F[n, j] with i = j·N + n."""
    f = np.asarray(F, dtype=complex).flatten(order="F")
    x = np.empty(2 * f.size)
    x[0::2] = f.real
    x[1::2] = f.imag
    return x


def unlift_precoder(x: np.ndarray, N: int, columns: Optional[int] = None) -> np.ndarray:
    columns = N if columns is None else columns
    f = x[0::2] + 1j * x[1::2]
    return f.reshape(columns, N).T


def lifted_stream_rows(row: np.ndarray, columns: int) -> np.ndarray:
    """Complex rows acting on the lifted precoder: row j maps x to row · F[:, j]."""
    N = row.size
    G = np.zeros((columns, 2 * N * columns), dtype=complex)
    for j in range(columns):
        base = 2 * j * N
        G[j, base : base + 2 * N : 2] = row
        G[j, base + 1 : base + 2 * N : 2] = 1j * row
    return G


def selection_stream_rows(rows: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Complex rows acting on vec(S): row j maps s to Σ_n F[n, j] rows[n] S[:, n]."""
    N, P = rows.shape
    return (F.T[:, :, None] * rows[None, :, :]).reshape(F.shape[1], N * P)


def _dictionary_blocks(channel: CompoundChannel, dictionary: EmDictionary) -> np.ndarray:
    return np.stack([dictionary.angular_block(m) for m in channel.angle_indices])


def radar_transmit_rows(
    channel: CompoundChannel, dictionary: EmDictionary, sel_rx: SelectionMatrix, w: np.ndarray
) -> np.ndarray:
    """N×P rows with wᴴ W_EMᵀ M F_EM f = Σ_n f[n] rows[n] S_F[:, n]."""
    backward = channel.backward(assemble_em_beamformer(dictionary, sel_rx))
    u = np.einsum("n,lna->la", w.conj(), backward)
    v = np.einsum("la,lab,lbp->lp", u, channel.scattering, _dictionary_blocks(channel, dictionary))
    return channel.spatial.conj().T @ v


def radar_receive_rows(
    channel: CompoundChannel, dictionary: EmDictionary, sel_tx: SelectionMatrix, F: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """Complex rows acting on vec(S_W): row j maps s to wᴴ W_EMᵀ M F_EM F[:, j]."""
    forward = channel.forward(assemble_em_beamformer(dictionary, sel_tx))
    z = np.einsum("lab,lbn,nj->laj", channel.scattering, forward, F)
    v = np.einsum("laj,lap->ljp", z, _dictionary_blocks(channel, dictionary))
    G = np.einsum("n,ln,ljp->jnp", w.conj(), channel.spatial, v)
    return G.reshape(F.shape[1], -1)


def _check_gamma(gamma: float) -> None:
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")


def _fp_objective(
    K_target: np.ndarray, K_clutter: np.ndarray, noise: float, gamma: float, x0: np.ndarray, penalty: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Minimization form of the MM-linearized FP surrogate, normalized by the current numerator."""
    minorant = mm_linearize_quadratic(K_target, x0)
    numerator = float(x0 @ K_target @ x0)
    scale = numerator if numerator > 0 else max(float(np.trace(K_target)), np.finfo(float).tiny)
    kernel = gamma * K_clutter / scale
    linear = -minorant.gradient / scale
    constant = (-minorant.constant + gamma * noise) / scale
    if penalty:
        linear = linear - penalty * (2.0 * x0 - 1.0)
    return kernel, linear, constant


def _sinr_floor_cone(G: np.ndarray, k: int, eps: float, x0: np.ndarray) -> SecondOrderCone:
    """|G_k x|² >= ε (Σ_{j≠k} |G_j x|² + 1) as a cone, phase-rotated so it is tight at x0."""
    signal = G[k] @ x0
    phase = np.angle(signal) if abs(signal) > 0 else 0.0
    others = np.delete(G, k, axis=0)
    n = G.shape[1]
    A = np.vstack([others.real, others.imag, np.zeros((1, n))])
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    c = (np.exp(-1j * phase) * G[k]).real / np.sqrt(eps) if np.isfinite(eps) else np.zeros(n)
    return SecondOrderCone(A, b, c, 0.0)


def _leakage_ceiling(G: np.ndarray, k: int, eps: float, x0: np.ndarray) -> QuadraticInequality:
    """|G_k x|² <= ε (Σ_{j≠k} |G_j x|² + 1) with the interference sum replaced by its tangent minorant."""
    interference = mm_linearize_quadratic(real_kernel(np.delete(G, k, axis=0)), x0)
    leakage = real_kernel(G[k : k + 1])
    return QuadraticInequality(leakage, -eps * interference.gradient, -eps * (interference.constant + 1.0))


def _simplex_constraints(P: int, N: int) -> List[Union[LinearEquality, BoxConstraint]]:
    return [
        LinearEquality(np.kron(np.eye(N), np.ones((1, P))), np.ones(N)),
        BoxConstraint(np.zeros(P * N), np.ones(P * N)),
    ]


def _check_selection(sel: SelectionMatrix, dictionary: EmDictionary, N: int) -> None:
    if sel.P != dictionary.P or sel.N != N:
        raise DictionaryError(f"selection is {sel.P}×{sel.N}, expected {dictionary.P}×{N}")


def _binariness(state: BeamformerState) -> float:
    return max(state.sel_tx.binariness_gap(), state.sel_rx.binariness_gap())


def build_sf_subproblem(
    state: BeamformerState,
    channels: ChannelSet,
    dictionary: EmDictionary,
    config: ProblemConfig,
    iterate_point: Optional[np.ndarray] = None,
    penalty: Optional[float] = None,
) -> ConicProgram:
    """Transmit-selection block over vec(S_F) ∈ [0, 1]^{PN}."""
    _check_gamma(state.gamma)
    N, P = channels.N, dictionary.P
    _check_selection(state.sel_tx, dictionary, N)
    _check_selection(state.sel_rx, dictionary, N)
    s0 = state.sel_tx.vector() if iterate_point is None else np.asarray(iterate_point, dtype=float)
    F, w = state.digital_precoder, state.digital_combiner

    K_target = real_kernel(selection_stream_rows(radar_transmit_rows(channels.target, dictionary, state.sel_rx, w), F))
    K_clutter = np.zeros((P * N, P * N))
    for clutter in channels.clutters:
        K_clutter += real_kernel(selection_stream_rows(radar_transmit_rows(clutter, dictionary, state.sel_rx, w), F))
    noise = channels.noise.sigma2_radar * float(np.vdot(w, w).real)
    weight = config.algorithm.penalty_tx if penalty is None else penalty
    kernel, linear, constant = _fp_objective(K_target, K_clutter, noise, state.gamma, s0, weight)

    constraints: List = _simplex_constraints(P, N)
    sigma_bob, sigma_eve = np.sqrt(channels.noise.sigma2_bob), np.sqrt(channels.noise.sigma2_eve)
    eve_rows = channels.eve.selection_rows(dictionary, channels.eve_polarization) / sigma_eve
    G_eve = selection_stream_rows(eve_rows, F)
    for k in range(channels.K):
        bob_rows = channels.bobs[k].selection_rows(dictionary, channels.bob_polarizations[k]) / sigma_bob
        if config.eps_bob[k] > 0:
            constraints.append(_sinr_floor_cone(selection_stream_rows(bob_rows, F), k, config.eps_bob[k], s0))
        if np.isfinite(config.eps_eve[k]):
            constraints.append(_leakage_ceiling(G_eve, k, config.eps_eve[k], s0))
    return ConicProgram(kernel, linear, constant, constraints, name="sf")


def build_sw_subproblem(
    state: BeamformerState,
    channels: ChannelSet,
    dictionary: EmDictionary,
    config: ProblemConfig,
    iterate_point: Optional[np.ndarray] = None,
    penalty: Optional[float] = None,
) -> ConicProgram:
    """Receive-selection block over vec(S_W); the receive side touches the radar only."""
    _check_gamma(state.gamma)
    N, P = channels.N, dictionary.P
    _check_selection(state.sel_tx, dictionary, N)
    _check_selection(state.sel_rx, dictionary, N)
    s0 = state.sel_rx.vector() if iterate_point is None else np.asarray(iterate_point, dtype=float)
    F, w = state.digital_precoder, state.digital_combiner

    K_target = real_kernel(radar_receive_rows(channels.target, dictionary, state.sel_tx, F, w))
    K_clutter = np.zeros((P * N, P * N))
    for clutter in channels.clutters:
        K_clutter += real_kernel(radar_receive_rows(clutter, dictionary, state.sel_tx, F, w))
    noise = channels.noise.sigma2_radar * float(np.vdot(w, w).real)
    weight = config.algorithm.penalty_rx if penalty is None else penalty
    kernel, linear, constant = _fp_objective(K_target, K_clutter, noise, state.gamma, s0, weight)
    return ConicProgram(kernel, linear, constant, list(_simplex_constraints(P, N)), name="sw")


def build_fbb_subproblem(
    state: BeamformerState,
    channels: ChannelSet,
    dictionary: EmDictionary,
    config: ProblemConfig,
    iterate_point: Optional[np.ndarray] = None,
) -> ConicProgram:
    """Digital precoder block over the re/im lift of vec(F_BB) (dimension 2N²)."""
    _check_gamma(state.gamma)
    N = channels.N
    em_tx, em_rx = state.em_beamformers(dictionary)
    x0 = lift_precoder(state.digital_precoder) if iterate_point is None else np.asarray(iterate_point, dtype=float)
    w = state.digital_combiner

    K_target = real_kernel(lifted_stream_rows(w.conj() @ channels.target.radar_matrix(em_tx, em_rx), N))
    K_clutter = np.zeros((2 * N * N, 2 * N * N))
    for clutter in channels.clutters:
        K_clutter += real_kernel(lifted_stream_rows(w.conj() @ clutter.radar_matrix(em_tx, em_rx), N))
    noise = channels.noise.sigma2_radar * float(np.vdot(w, w).real)
    kernel, linear, constant = _fp_objective(K_target, K_clutter, noise, state.gamma, x0, 0.0)

    constraints: List = []
    eve_row = channels.eve.effective_row(em_tx, channels.eve_polarization) / np.sqrt(channels.noise.sigma2_eve)
    G_eve = lifted_stream_rows(eve_row, N)
    for k in range(channels.K):
        bob_row = channels.bobs[k].effective_row(em_tx, channels.bob_polarizations[k])
        G_bob = lifted_stream_rows(bob_row / np.sqrt(channels.noise.sigma2_bob), N)
        if config.eps_bob[k] > 0:
            constraints.append(_sinr_floor_cone(G_bob, k, config.eps_bob[k], x0))
        if np.isfinite(config.eps_eve[k]):
            constraints.append(_leakage_ceiling(G_eve, k, config.eps_eve[k], x0))
    n = 2 * N * N
    constraints.append(SecondOrderCone(np.eye(n), np.zeros(n), np.zeros(n), float(np.sqrt(config.p_t_watts))))
    return ConicProgram(kernel, linear, constant, constraints, name="fbb")


def generalized_rayleigh_maximizer(B1: np.ndarray, B2: np.ndarray) -> Tuple[np.ndarray, float]:
    """Unit-norm maximizer of wᴴB1w / wᴴB2w and the maximal quotient.

    The returned vector's largest-magnitude entry is real and positive.
    """
    scale = float(np.trace(B2).real) / B2.shape[0]
    if not scale > 0:
        raise EigenSolveError("B2 must be positive definite")
    try:
        eigvals, eigvecs = scipy.linalg.eigh(B1 / scale, B2 / scale)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigenSolveError(f"generalized eigen-solve failed: {e}") from e
    w = eigvecs[:, -1]
    w = w / np.linalg.norm(w)
    anchor = int(np.argmax(np.abs(w)))
    w = w * np.exp(-1j * np.angle(w[anchor]))
    return w, float(eigvals[-1])


def combiner_kernels(
    state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary
) -> Tuple[np.ndarray, np.ndarray]:
    """(B1, B2): target echo covariance and clutter-plus-noise covariance after the precoders."""
    em_tx, em_rx = state.em_beamformers(dictionary)
    F = state.digital_precoder
    echo = channels.target.radar_matrix(em_tx, em_rx) @ F
    B1 = echo @ echo.conj().T
    B2 = channels.noise.sigma2_radar * np.eye(channels.N, dtype=complex)
    for clutter in channels.clutters:
        response = clutter.radar_matrix(em_tx, em_rx) @ F
        B2 = B2 + response @ response.conj().T
    return B1, B2


def update_wbb(state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary) -> np.ndarray:
    B1, B2 = combiner_kernels(state, channels, dictionary)
    return generalized_rayleigh_maximizer(B1, B2)[0]


def update_gamma(
    state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary, gamma_floor: float = 0.0
) -> float:
    em_tx, em_rx = state.em_beamformers(dictionary)
    return max(gamma_floor, radar_scnr(channels, em_tx, em_rx, state))


def _feasibility_program(
    bob_rows: np.ndarray, eve_row: np.ndarray, eps_bob: Tuple[float, ...], eps_eve: Tuple[float, ...], power: float
) -> ConicProgram:
    """Max-slack program over [lift(F_comm), t] with conservative leakage ceilings."""
    K, N = bob_rows.shape
    n = 2 * N * K
    pad = np.zeros((K, 1))
    constraints: List = []
    G_eve = np.hstack([lifted_stream_rows(eve_row, K), pad])
    for k in range(K):
        G = np.hstack([lifted_stream_rows(bob_rows[k], K), pad])
        others = np.delete(G, k, axis=0)
        A = np.vstack([others.real, others.imag, np.zeros((1, n + 1))])
        b = np.zeros(A.shape[0])
        b[-1] = 1.0
        c = G[k].real.copy()
        c[-1] = -1.0
        constraints.append(SecondOrderCone(A, b, c / np.sqrt(max(eps_bob[k], MIN_FLOOR)), 0.0))
        if np.isfinite(eps_eve[k]):
            constraints.append(QuadraticInequality(real_kernel(G_eve[k : k + 1]), np.zeros(n + 1), -eps_eve[k]))
    selector = np.hstack([np.eye(n), np.zeros((n, 1))])
    constraints.append(SecondOrderCone(selector, np.zeros(n), np.zeros(n + 1), float(np.sqrt(power))))
    linear = np.zeros(n + 1)
    linear[-1] = -1.0
    return ConicProgram(np.zeros((n + 1, n + 1)), linear, 0.0, constraints, name="feasibility")


class JointOptimizer:
    """Runs the alternating joint EM/BB optimization.

    Args:
        config: Power budget, thresholds and algorithm settings
        backend: Conic backend; the process-wide backend is used when None
    """

    def __init__(self, config: ProblemConfig, backend: Optional[ConicBackend] = None) -> None:
        self.config = config
        self._backend: Optional[ConicBackend] = backend

    @property
    def backend(self) -> ConicBackend:
        if self._backend is None:
            self._backend = get_backend()
        return self._backend

    def set_backend(self, backend: ConicBackend) -> None:
        self._backend = backend

    @property
    def algorithm(self) -> AlgorithmConfig:
        return self.config.algorithm

    def _solve(self, program: ConicProgram) -> ConicSolution:
        return self.backend.solve(program, self.algorithm.subproblem_tol, self.algorithm.subproblem_max_iter)

    def initialize_baseband(
        self,
        channels: ChannelSet,
        dictionary: EmDictionary,
        sel_tx: SelectionMatrix,
        comm_fraction: Optional[float] = None,
    ) -> Tuple[Optional[np.ndarray], str]:
        """Feasible F_BB for a fixed transmit selection, or (None, status).

        Bob streams come from a max-slack program on ``comm_fraction`` of the
        budget, retried on the full budget; radar streams span the null space
        of the Bob rows and share the remaining power.
        """
        N, K, p_t = channels.N, channels.K, self.config.p_t_watts
        if K == 0:
            return np.sqrt(p_t / N) * np.eye(N, dtype=complex), "optimal"
        if not all(np.isfinite(self.config.eps_bob)):
            logger.warning("[FEASIBILITY] Unattainable SINR floor, skipping solve")
            return None, "infeasible"

        em_tx = assemble_em_beamformer(dictionary, sel_tx)
        bob_rows = np.stack(
            [bob.effective_row(em_tx, channels.bob_polarizations[k]) for k, bob in enumerate(channels.bobs)]
        )
        eve_row = channels.eve.effective_row(em_tx, channels.eve_polarization)
        whitened_bob = bob_rows / np.sqrt(channels.noise.sigma2_bob)
        whitened_eve = eve_row / np.sqrt(channels.noise.sigma2_eve)

        first = self.algorithm.init_comm_power_fraction if comm_fraction is None else comm_fraction
        status = "infeasible"
        for fraction in dict.fromkeys((first, 1.0)):
            program = _feasibility_program(
                whitened_bob, whitened_eve, self.config.eps_bob, self.config.eps_eve, fraction * p_t
            )
            solution = self._solve(program)
            status = solution.status
            slack = solution.x[-1] if solution.status == "optimal" else float("nan")
            logger.debug(f"[FEASIBILITY] power fraction {fraction}: status={status}, slack={slack:.4g}")
            if solution.status == "optimal" and slack >= 0:
                break
        else:
            return None, status if status != "optimal" else "infeasible"

        comm = unlift_precoder(solution.x[:-1], N, K)
        basis = scipy.linalg.null_space(bob_rows)
        radar = np.zeros((N, N - K), dtype=complex)
        width = min(basis.shape[1], N - K)
        radar[:, :width] = basis[:, :width]
        remaining = max(p_t - float(np.sum(np.abs(comm) ** 2)), 0.0)
        radar *= np.sqrt(remaining / (N - K))
        return np.hstack([comm, radar]), "optimal"

    def initialize(self, channels: ChannelSet, dictionary: EmDictionary, rng: np.random.Generator) -> BeamformerState:
        """Random one-hot selections followed by the feasibility phase."""
        N, P = channels.N, dictionary.P
        sel_tx = SelectionMatrix.one_hot(rng.integers(P, size=N), P)
        sel_rx = SelectionMatrix.one_hot(rng.integers(P, size=N), P)
        return self.start_state(channels, dictionary, sel_tx, sel_rx)

    def start_state(
        self,
        channels: ChannelSet,
        dictionary: EmDictionary,
        sel_tx: SelectionMatrix,
        sel_rx: SelectionMatrix,
        comm_fraction: Optional[float] = None,
    ) -> BeamformerState:
        """w_BB for the scaled-identity precoder, then the feasibility-phase F_BB and its γ."""
        self.config.check_users(channels)
        N = channels.N
        identity = np.sqrt(self.config.p_t_watts / N) * np.eye(N, dtype=complex)
        state = BeamformerState(sel_tx, sel_rx, identity, np.ones(N) / np.sqrt(N))
        state = state.replace(digital_combiner=update_wbb(state, channels, dictionary))

        precoder, status = self.initialize_baseband(channels, dictionary, sel_tx, comm_fraction)
        if precoder is None:
            logger.warning(f"[FEASIBILITY] Initialization failed with status {status}")
            return state.replace(feasible=False, flags=(f"feasibility:{status}",))
        state = state.replace(digital_precoder=precoder)
        return state.replace(gamma=update_gamma(state, channels, dictionary, self.algorithm.gamma_floor))

    def baseband_starts(
        self, channels: ChannelSet, dictionary: EmDictionary, sel_tx: SelectionMatrix, sel_rx: SelectionMatrix
    ) -> List[BeamformerState]:
        """Distinct feasible start states of one selection pair, one per communication power share."""
        starts: List[BeamformerState] = []
        for fraction in self.algorithm.start_fractions():
            state = self.start_state(channels, dictionary, sel_tx, sel_rx, fraction)
            if not state.feasible:
                continue
            if any(np.array_equal(state.digital_precoder, s.digital_precoder) for s in starts):
                continue
            starts.append(state)
        return starts

    def polish_baseband(
        self, channels: ChannelSet, dictionary: EmDictionary, sel_tx: SelectionMatrix, sel_rx: SelectionMatrix
    ) -> Tuple[BeamformerState, IterationTrace]:
        """Best ``optimize_baseband`` result over the start set of one selection pair.

        The result depends on the pair only; ties keep the earlier start.

        Raises:
            SubproblemInfeasibleError: No start reaches a constraint-feasible state
        """
        best: Optional[Tuple[BeamformerState, IterationTrace]] = None
        for index, start in enumerate(self.baseband_starts(channels, dictionary, sel_tx, sel_rx)):
            try:
                state, trace = self.optimize_baseband(channels, dictionary, start)
            except (SubproblemInfeasibleError, EigenSolveError) as e:
                logger.debug(f"[OPTIMIZER] Baseband start {index} dropped: {e}")
                continue
            if state.feasible and (best is None or state.gamma > best[0].gamma):
                best = (state, trace)
        if best is None:
            raise SubproblemInfeasibleError("feasibility", 0, "no baseband start reached a feasible state")
        return best

    def _update_selection(
        self, block: str, state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary, penalty: float
    ) -> Tuple[BeamformerState, str]:
        builder = build_sf_subproblem if block == "sf" else build_sw_subproblem
        solution = self._solve(builder(state, channels, dictionary, self.config, penalty=penalty))
        if solution.status != "optimal":
            logger.warning(f"[OPTIMIZER] {block} update returned {solution.status}, keeping previous selection")
            return state, solution.status
        selection = SelectionMatrix.from_vector(solution.x, dictionary.P, channels.N)
        return state.replace(**{"sel_tx" if block == "sf" else "sel_rx": selection}), solution.status

    def _update_precoder(
        self, state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary, iteration: int
    ) -> Tuple[BeamformerState, str]:
        solution = self._solve(build_fbb_subproblem(state, channels, dictionary, self.config))
        if solution.status == "infeasible":
            raise SubproblemInfeasibleError("fbb", iteration, solution.detail or solution.status)
        if solution.status != "optimal":
            logger.warning(f"[OPTIMIZER] fbb update returned {solution.status}, keeping previous precoder")
            return state, solution.status
        return state.replace(digital_precoder=self._within_budget(unlift_precoder(solution.x, channels.N))), "optimal"

    def _within_budget(self, F: np.ndarray) -> np.ndarray:
        power = float(np.sum(np.abs(F) ** 2))
        if power > self.config.p_t_watts:
            F = F * np.sqrt(self.config.p_t_watts / power)
        return F

    def _refresh_combiner(
        self, state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary
    ) -> BeamformerState:
        state = state.replace(digital_combiner=update_wbb(state, channels, dictionary))
        return state.replace(gamma=update_gamma(state, channels, dictionary, self.algorithm.gamma_floor))

    def _restore_binary(
        self, state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary
    ) -> Tuple[Optional[BeamformerState], str]:
        """Round both selections and re-solve F_BB under them, falling back to a fresh feasibility start."""
        rounded = state.replace(sel_tx=round_selection(state.sel_tx), sel_rx=round_selection(state.sel_rx))
        solution = self._solve(build_fbb_subproblem(rounded, channels, dictionary, self.config))
        if solution.status == "optimal":
            precoder = self._within_budget(unlift_precoder(solution.x, channels.N))
        else:
            logger.info(f"[OPTIMIZER] fbb re-solve after rounding returned {solution.status}, re-initializing")
            precoder, status = self.initialize_baseband(channels, dictionary, rounded.sel_tx)
            if precoder is None:
                return None, status
        return self._refresh_combiner(rounded.replace(digital_precoder=precoder), channels, dictionary), "optimal"

    def _feasible_one_hot(
        self, state: BeamformerState, channels: ChannelSet, dictionary: EmDictionary
    ) -> Optional[BeamformerState]:
        """``state`` snapped to exact one-hot selections, if it is binary within tolerance and feasible."""
        if _binariness(state) > self.algorithm.binary_tol:
            return None
        snapped = state.replace(sel_tx=round_selection(state.sel_tx), sel_rx=round_selection(state.sel_rx))
        snapped = snapped.replace(gamma=update_gamma(snapped, channels, dictionary, self.algorithm.gamma_floor))
        if not self.check_constraints(channels, dictionary, snapped):
            return None
        return snapped.replace(feasible=True)

    def _record(
        self,
        trace: IterationTrace,
        iteration: int,
        reported: BeamformerState,
        iterate: BeamformerState,
        channels: ChannelSet,
        dictionary: EmDictionary,
        statuses: Dict[str, str],
    ) -> None:
        metrics = evaluate_state(channels, dictionary, reported)
        record: IterationRecord = {
            "iteration": iteration,
            "scnr": metrics["scnr"],
            "scnr_db": to_db(metrics["scnr"]),
            "sinr_db": [to_db(v) for v in metrics["sinr"]],
            "eve_sinr_db": [to_db(v) for v in metrics["eve_sinr"]],
            "power_w": metrics["power_w"],
            "binariness": _binariness(iterate),
            "iterate_scnr_db": to_db(iterate.gamma),
            "statuses": statuses,
        }
        trace.records.append(record)
        logger.debug(
            f"[OPTIMIZER] iter {iteration}: SCNR {record['scnr_db']:.3f} dB "
            f"(iterate {record['iterate_scnr_db']:.3f} dB), binariness {record['binariness']:.2e}, "
            f"statuses {statuses}"
        )

    def _converged(self, previous: float, current: float, state: BeamformerState) -> bool:
        change = abs(current - previous) / max(abs(previous), np.finfo(float).tiny)
        return change < self.algorithm.scnr_rel_tol and _binariness(state) <= self.algorithm.binary_tol

    def optimize_baseband(
        self, channels: ChannelSet, dictionary: EmDictionary, state: BeamformerState
    ) -> Tuple[BeamformerState, IterationTrace]:
        """F_BB → w_BB → γ iterations under fixed selections, then the final constraint check."""
        if not state.feasible:
            raise SubproblemInfeasibleError("feasibility", 0, ",".join(state.flags) or None)
        trace = IterationTrace()
        previous = state.gamma
        for iteration in range(self.algorithm.max_outer_iters):
            state, status = self._update_precoder(state, channels, dictionary, iteration)
            state = self._refresh_combiner(state, channels, dictionary)
            self._record(trace, iteration, state, state, channels, dictionary, {"fbb": status})
            if self._converged(previous, state.gamma, state):
                trace.converged = True
                break
            previous = state.gamma
        return self._finalize(channels, dictionary, state, trace), trace

    def run(
        self, channels: ChannelSet, dictionary: EmDictionary, rng: np.random.Generator
    ) -> Tuple[BeamformerState, IterationTrace]:
        state = self.initialize(channels, dictionary, rng)
        if not state.feasible:
            raise SubproblemInfeasibleError("feasibility", 0, ",".join(state.flags))
        if dictionary.P == 1:
            return self.polish_baseband(channels, dictionary, state.sel_tx, state.sel_rx)

        logger.info(f"[OPTIMIZER] Start: P={dictionary.P}, N={channels.N}, K={channels.K}, C={channels.C}")
        algorithm = self.algorithm
        trace = IterationTrace()
        best = self._feasible_one_hot(state, channels, dictionary)
        previous = state.gamma
        locked = False
        for iteration in range(algorithm.max_outer_iters):
            if locked:
                penalty_tx = penalty_rx = algorithm.penalty_cap
            else:
                penalty_tx, penalty_rx = algorithm.penalties(iteration)
            statuses: Dict[str, str] = {}
            state, statuses["sf"] = self._update_selection("sf", state, channels, dictionary, penalty_tx)
            state, statuses["sw"] = self._update_selection("sw", state, channels, dictionary, penalty_rx)
            state, statuses["fbb"] = self._update_precoder(state, channels, dictionary, iteration)
            state = self._refresh_combiner(state, channels, dictionary)

            restored = False
            if _binariness(state) > algorithm.binary_tol and (locked or algorithm.penalties_capped(iteration)):
                candidate, statuses["restore"] = self._restore_binary(state, channels, dictionary)
                if candidate is not None:
                    state, locked, restored = candidate, True, True

            one_hot = self._feasible_one_hot(state, channels, dictionary)
            if one_hot is not None and (best is None or one_hot.gamma > best.gamma):
                best = one_hot
            self._record(trace, iteration, best or state, state, channels, dictionary, statuses)
            if not restored and self._converged(previous, state.gamma, state):
                trace.converged = True
                break
            previous = state.gamma

        state = self._finish(channels, dictionary, state, best, trace)
        logger.info(
            f"[OPTIMIZER] Done after {trace.iterations} iterations (converged={trace.converged}), "
            f"final SCNR {to_db(state.gamma):.3f} dB, feasible={state.feasible}"
        )
        return state, trace

    def _finish(
        self,
        channels: ChannelSet,
        dictionary: EmDictionary,
        state: BeamformerState,
        best: Optional[BeamformerState],
        trace: IterationTrace,
    ) -> BeamformerState:
        """Polish the best one-hot pair and the rounded last iterate; keep the better polished state."""
        pairs = [(round_selection(state.sel_tx), round_selection(state.sel_rx))]
        if best is not None:
            pairs.insert(0, (best.sel_tx, best.sel_rx))
        polished: Optional[BeamformerState] = None
        seen = set()
        for sel_tx, sel_rx in pairs:
            key = (sel_tx.entries.tobytes(), sel_rx.entries.tobytes())
            if key in seen:
                continue
            seen.add(key)
            try:
                candidate, _ = self.polish_baseband(channels, dictionary, sel_tx, sel_rx)
            except SubproblemInfeasibleError as e:
                logger.info(f"[OPTIMIZER] Selection pair not polished: {e}")
                continue
            if polished is None or candidate.gamma > polished.gamma:
                polished = candidate

        if polished is None and best is not None:
            logger.warning("[OPTIMIZER] No baseband start is feasible for the chosen modes, keeping the iterate")
            polished = best
        if polished is None:
            return self._finalize(channels, dictionary, state, trace)
        trace.final = evaluate_state(channels, dictionary, polished)
        return polished

    def _finalize(
        self, channels: ChannelSet, dictionary: EmDictionary, state: BeamformerState, trace: IterationTrace
    ) -> BeamformerState:
        rounded_tx, rounded_rx = round_selection(state.sel_tx), round_selection(state.sel_rx)
        changed = not (
            np.array_equal(rounded_tx.entries, state.sel_tx.entries)
            and np.array_equal(rounded_rx.entries, state.sel_rx.entries)
        )
        flags = list(state.flags)
        if changed:
            restored, status = self._restore_binary(state, channels, dictionary)
            if restored is None:
                flags.append(f"final_fbb:{status}")
                state = state.replace(sel_tx=rounded_tx, sel_rx=rounded_rx)
                state = self._refresh_combiner(state, channels, dictionary)
            else:
                state = restored
        else:
            state = state.replace(sel_tx=rounded_tx, sel_rx=rounded_rx)

        feasible = self.check_constraints(channels, dictionary, state)
        if not feasible:
            flags.append("constraints_violated")
            logger.warning("[OPTIMIZER] Final state violates the SINR or power constraints and is flagged")
        trace.final = evaluate_state(channels, dictionary, state)
        return state.replace(feasible=feasible, flags=tuple(flags))

    def check_constraints(self, channels: ChannelSet, dictionary: EmDictionary, state: BeamformerState) -> bool:
        if state.sel_tx.mode != "binary" or state.sel_rx.mode != "binary":
            return False
        em_tx = assemble_em_beamformer(dictionary, state.sel_tx)
        for k in range(channels.K):
            if bob_sinr(k, channels, em_tx, state) < self.config.eps_bob[k] * (1 - SINR_REL_TOL):
                return False
            if eve_sinr(k, channels, em_tx, state) > self.config.eps_eve[k] * (1 + SINR_REL_TOL):
                return False
        return transmit_power(state) <= self.config.p_t_watts * (1 + POWER_REL_TOL)


def initialize(
    channels: ChannelSet, dictionary: EmDictionary, config: ProblemConfig, rng: np.random.Generator
) -> BeamformerState:
    return JointOptimizer(config).initialize(channels, dictionary, rng)


def run(
    channels: ChannelSet, dictionary: EmDictionary, config: ProblemConfig, rng: np.random.Generator
) -> Tuple[BeamformerState, IterationTrace]:
    return JointOptimizer(config).run(channels, dictionary, rng)


def optimize_baseband(
    channels: ChannelSet, dictionary: EmDictionary, config: ProblemConfig, state: BeamformerState
) -> Tuple[BeamformerState, IterationTrace]:
    return JointOptimizer(config).optimize_baseband(channels, dictionary, state)
