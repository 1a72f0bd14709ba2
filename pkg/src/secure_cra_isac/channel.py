"""Compound channels for Bobs, Eve, target and clutter.

Every link is kept in factored form: per propagation path an angular index on
the M-point grid, a spatial vector ``α_l · a_l`` over the N antennas and a 2×2
scattering (depolarization) matrix, plus an optional 2×2 polarization rotation.
Dense materialization is available for small instances only.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .em_core import EmBeamformer, EmDictionary, angle_samples
from .errors import ChannelError, OracleBudgetError
from .metrics import NoiseModel

logger = logging.getLogger(__name__)

DENSE_LIMIT = 256
PSD_TOL = -1e-10
CHANNEL_KINDS = ("bob", "eve", "target", "clutter")

# Upper-triangle magnitudes of the scattering covariance template, multiplied by ε.
_TEMPLATE_DIAGONAL = np.array([0.1, 0.3, 0.1, 1.0])
_TEMPLATE_OFF_DIAGONAL = {(0, 1): 0.06, (0, 2): 0.05, (0, 3): 0.04, (1, 2): 0.03, (1, 3): 0.03, (2, 3): 0.03}


@dataclass(frozen=True)
class AngleGrid:
    """M uniform angular samples on [0, π)."""

    M: int

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ChannelError(f"grid size must be positive, got {self.M}")

    @property
    def samples(self) -> np.ndarray:
        return angle_samples(self.M)


class Position(NamedTuple):
    """Polar position relative to Alice (angle in radians, radius in meters)."""

    angle: float
    radius: float


@dataclass(frozen=True)
class PropagationPath:
    angle: float
    angle_index: int
    amplitude: complex
    steering: np.ndarray

    def __post_init__(self) -> None:
        if np.any(np.abs(np.abs(self.steering) - 1.0) > 1e-12):
            raise ChannelError("steering entries must be unit modulus")

    @property
    def spatial(self) -> np.ndarray:
        return self.amplitude * self.steering


def rotation_matrix(angle: float = 0.0) -> np.ndarray:
    """2D polarization rotation by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    rotation = np.array(rotation, dtype=float)
    if rotation.shape != (2, 2) or not np.allclose(rotation.T @ rotation, np.eye(2), rtol=0.0, atol=1e-12):
        raise ChannelError("rotation must be a 2×2 orthonormal matrix")
    return rotation


def quantize_angle(theta: float, grid: AngleGrid) -> int:
    """Index of the nearest grid sample; distance ties go to the lower index."""
    if not 0.0 <= theta < np.pi:
        raise ChannelError(f"angle {theta} outside [0, π)")
    return int(np.argmin(np.abs(grid.samples - theta)))


def steering_vector(theta: float, N: int) -> np.ndarray:
    """Half-wavelength ULA response ``exp(jπ n cos θ)``, n = 0..N-1."""
    return np.exp(1j * np.pi * np.arange(N) * np.cos(theta))


def path_loss(r: float, kappa: float, C0: float, D0: float) -> float:
    if r <= 0 or D0 <= 0:
        raise ChannelError(f"distances must be positive, got r={r}, D0={D0}")
    return float(10.0 ** (-C0 / 10.0) * (r / D0) ** (-kappa))


def link_amplitude(r: float, kappa: float, C0: float, D0: float, mode: str = "power") -> float:
    """Path amplitude: square root of the path loss in ``power`` mode, the loss itself in ``amplitude`` mode."""
    loss = path_loss(r, kappa, C0, D0)
    if mode == "power":
        return float(np.sqrt(loss))
    if mode == "amplitude":
        return loss
    raise ChannelError(f"unknown path loss mode '{mode}'")


def scattering_template(epsilon: complex = 0.5) -> np.ndarray:
    """4×4 Hermitian covariance of vec(Φ) = (HH, HV, VH, VV) with ε-scaled correlations."""
    cov = np.diag(_TEMPLATE_DIAGONAL).astype(complex)
    for (i, j), magnitude in _TEMPLATE_OFF_DIAGONAL.items():
        cov[i, j] = magnitude * epsilon
        cov[j, i] = magnitude * np.conj(epsilon)
    return cov


@dataclass(frozen=True)
class ScatteringModel:
    """Zero-mean circular complex Gaussian model for 2×2 scattering matrices."""

    covariance: np.ndarray
    epsilon: complex = 0.5

    def __post_init__(self) -> None:
        cov = np.array(self.covariance, dtype=complex)
        if cov.shape != (4, 4):
            raise ChannelError(f"scattering covariance must be 4×4, got {cov.shape}")
        if not np.allclose(cov, cov.conj().T, rtol=0.0, atol=1e-12):
            raise ChannelError("scattering covariance must be Hermitian")
        min_eig = float(np.min(np.linalg.eigvalsh(cov)))
        if min_eig < PSD_TOL:
            raise ChannelError(f"scattering covariance is not PSD (min eigenvalue {min_eig:.3e})")
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def from_template(cls, epsilon: complex = 0.5, scale: float = 1.0) -> "ScatteringModel":
        return cls(scale * scattering_template(epsilon), epsilon)

    def factor(self) -> np.ndarray:
        """L with L Lᴴ = covariance (eigen factorization, valid for singular covariances)."""
        eigvals, eigvecs = np.linalg.eigh(self.covariance)
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def sample_scattering_matrix(rng: np.random.Generator, model: ScatteringModel) -> np.ndarray:
    return sample_scattering_matrices(rng, model, 1)[0]


def sample_scattering_matrices(rng: np.random.Generator, model: ScatteringModel, count: int) -> np.ndarray:
    """``count`` independent 2×2 draws, shape (count, 2, 2); row-major (HH, HV, VH, VV)."""
    white = (rng.standard_normal((count, 4)) + 1j * rng.standard_normal((count, 4))) / np.sqrt(2.0)
    return (white @ model.factor().T).reshape(count, 2, 2)


@dataclass(frozen=True)
class CompoundChannel:
    """Factored compound channel.

    ``kind`` selects the composition:
      - bob: Q̄ Φ̄ H̄_Sᴴ H̄_Aᴴ (2L × 2MN)
      - eve: Q H̄_Sᴴ H̄_Aᴴ (2 × 2MN, scattering fixed to identity)
      - target / clutter: H̄_A H̄_S Φ̄ H̄_Sᴴ H̄_Aᴴ (2MN × 2MN)
    """

    kind: str
    M: int
    angle_indices: np.ndarray
    spatial: np.ndarray
    scattering: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self) -> None:
        if self.kind not in CHANNEL_KINDS:
            raise ChannelError(f"unknown channel kind '{self.kind}'")
        indices = np.array(self.angle_indices, dtype=int).reshape(-1)
        spatial = np.atleast_2d(np.array(self.spatial, dtype=complex))
        scattering = np.array(self.scattering, dtype=complex).reshape(-1, 2, 2)
        L = indices.size
        if spatial.shape[0] != L or scattering.shape[0] != L:
            raise ChannelError(
                f"factor dimensions disagree: {L} angle indices, spatial {spatial.shape}, scattering {scattering.shape}"
            )
        if np.any(indices < 0) or np.any(indices >= self.M):
            raise ChannelError(f"angle indices must lie in [0, {self.M})")
        if self.kind == "eve" and (L != 1 or not np.allclose(scattering[0], np.eye(2))):
            raise ChannelError("eve channel is a single LoS path with identity depolarization")
        for name, value in (("angle_indices", indices), ("spatial", spatial), ("scattering", scattering)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        rotation = _check_rotation(self.rotation)
        rotation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)

    @property
    def L(self) -> int:
        return int(self.angle_indices.size)

    @property
    def N(self) -> int:
        return int(self.spatial.shape[1])

    @property
    def dims(self) -> Tuple[int, int]:
        cols = 2 * self.M * self.N
        if self.kind == "bob":
            return (2 * self.L, cols)
        if self.kind == "eve":
            return (2, cols)
        return (cols, cols)

    def _check_beamformer(self, em: EmBeamformer) -> None:
        if em.N != self.N or em.M != self.M:
            raise ChannelError(f"beamformer is {em.N}×{2 * em.M}, channel expects {self.N}×{2 * self.M}")

    def forward(self, em_tx: EmBeamformer) -> np.ndarray:
        """Per-path transmit factors H̄_Sᴴ H̄_Aᴴ F_EM, shape (L, 2, N)."""
        self._check_beamformer(em_tx)
        gains = em_tx.angular_gains(self.angle_indices)
        return np.einsum("ln,lnp->lpn", self.spatial.conj(), gains)

    def backward(self, em_rx: EmBeamformer) -> np.ndarray:
        """Per-path receive factors W_EMᵀ H̄_A H̄_S, shape (L, N, 2)."""
        self._check_beamformer(em_rx)
        gains = em_rx.angular_gains(self.angle_indices)
        return self.spatial[:, :, None] * gains

    def transmit_response(self, em_tx: EmBeamformer) -> np.ndarray:
        """M F_EM for bob/eve links, shape (2L, N)."""
        if self.kind not in ("bob", "eve"):
            raise ChannelError(f"transmit_response is defined for bob/eve links, not {self.kind}")
        mixed = np.einsum("ab,lbc,lcn->lan", self.rotation, self.scattering, self.forward(em_tx))
        return mixed.reshape(2 * self.L, self.N)

    def effective_row(self, em_tx: EmBeamformer, polarization: np.ndarray) -> np.ndarray:
        """p̄ᵀ M F_EM with p̄ = 1_L ⊗ p, shape (N,)."""
        return np.tile(np.asarray(polarization, dtype=float), self.L) @ self.transmit_response(em_tx)

    def radar_matrix(self, em_tx: EmBeamformer, em_rx: EmBeamformer) -> np.ndarray:
        """W_EMᵀ M F_EM for target/clutter links, shape (N, N)."""
        if self.kind not in ("target", "clutter"):
            raise ChannelError(f"radar_matrix is defined for target/clutter links, not {self.kind}")
        return np.einsum("lna,lab,lbm->nm", self.backward(em_rx), self.scattering, self.forward(em_tx))

    def selection_rows(self, dictionary: EmDictionary, polarization: np.ndarray) -> np.ndarray:
        """N×P rows r_n with p̄ᵀ M F_EM F[:, j] = Σ_n F[n, j] r_n S[:, n] for bob/eve links."""
        if dictionary.M != self.M:
            raise ChannelError(f"dictionary grid M={dictionary.M} differs from channel grid M={self.M}")
        pol = np.asarray(polarization, dtype=float) @ self.rotation
        coefficients = np.stack(
            [pol @ self.scattering[l] @ dictionary.angular_block(m) for l, m in enumerate(self.angle_indices)]
        )
        return self.spatial.conj().T @ coefficients

    def with_scattering(self, scattering: np.ndarray) -> "CompoundChannel":
        return CompoundChannel(self.kind, self.M, self.angle_indices, self.spatial, scattering, self.rotation)

    def dense(self) -> np.ndarray:
        """Dense compound channel from the extended matrices H̄_A, H̄_S, Φ̄, Q̄."""
        N, L, M = self.N, self.L, self.M
        if 2 * M * N > DENSE_LIMIT:
            raise OracleBudgetError(f"dense materialization needs 2MN <= {DENSE_LIMIT}, got {2 * M * N}")
        h_a = np.zeros((M, L))
        h_a[self.angle_indices, np.arange(L)] = 1.0
        ext_a = np.kron(np.kron(np.eye(N), h_a), np.eye(2))
        h_s = self.spatial.T
        ext_s = np.kron(np.diag(h_s.reshape(-1)) @ np.kron(np.ones((N, 1)), np.eye(L)), np.eye(2))
        ext_phi = scipy.linalg.block_diag(*self.scattering)
        tx = ext_s.conj().T @ ext_a.conj().T
        if self.kind == "bob":
            return np.kron(np.eye(L), self.rotation) @ ext_phi @ tx
        if self.kind == "eve":
            return self.rotation @ tx
        return ext_a @ ext_s @ ext_phi @ tx

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "M": self.M,
            "angle_indices": self.angle_indices.tolist(),
            "spatial": _complex_to_pairs(self.spatial),
            "scattering": _complex_to_pairs(self.scattering),
            "rotation": self.rotation.tolist(),
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "CompoundChannel":
        return cls(
            kind=document["kind"],
            M=int(document["M"]),
            angle_indices=np.asarray(document["angle_indices"], dtype=int),
            spatial=_pairs_to_complex(document["spatial"]),
            scattering=_pairs_to_complex(document["scattering"]),
            rotation=np.asarray(document["rotation"], dtype=float),
        )


def _complex_to_pairs(array: np.ndarray) -> Any:
    return np.stack([array.real, array.imag], axis=-1).tolist()


def _pairs_to_complex(pairs: Any) -> np.ndarray:
    array = np.asarray(pairs, dtype=float)
    return array[..., 0] + 1j * array[..., 1]


def compound_channel(
    kind: str,
    paths: Sequence[PropagationPath],
    M: int,
    scattering: Optional[np.ndarray] = None,
    rotation: Optional[np.ndarray] = None,
) -> CompoundChannel:
    """Assemble a factored compound channel from its propagation paths.

    Args:
        kind: ``bob``, ``eve``, ``target`` or ``clutter``
        paths: Propagation paths (one for eve/target/clutter in the default geometry)
        M: Angular grid size
        scattering: Per-path 2×2 scattering matrices; identity when omitted
        rotation: 2×2 polarization rotation; identity when omitted
    """
    if not paths:
        raise ChannelError("a compound channel needs at least one path")
    sizes = {p.steering.size for p in paths}
    if len(sizes) != 1:
        raise ChannelError(f"paths disagree on antenna count: {sorted(sizes)}")
    scattering = np.tile(np.eye(2), (len(paths), 1, 1)) if scattering is None else scattering
    return CompoundChannel(
        kind=kind,
        M=M,
        angle_indices=np.array([p.angle_index for p in paths]),
        spatial=np.stack([p.spatial for p in paths]),
        scattering=np.asarray(scattering),
        rotation=np.eye(2) if rotation is None else rotation,
    )


def make_path(theta: float, amplitude: complex, grid: AngleGrid, N: int) -> PropagationPath:
    return PropagationPath(theta, quantize_angle(theta, grid), complex(amplitude), steering_vector(theta, N))


@dataclass(frozen=True)
class PathLossSpec:
    kappa: float = 2.5
    c0_db: float = 30.0
    d0_m: float = 1.0
    mode: str = "power"
    nlos_attenuation: float = 0.5
    nlos_distance_factor: Tuple[float, float] = (1.0, 1.5)

    def amplitude(self, r: float) -> float:
        return link_amplitude(r, self.kappa, self.c0_db, self.d0_m, self.mode)


@dataclass(frozen=True)
class ChannelParameters:
    """Everything the channel generator needs besides the RNG and geometry."""

    n_antennas: int
    grid: AngleGrid
    n_paths: int
    path_loss: PathLossSpec
    bob_model: ScatteringModel
    target_model: ScatteringModel
    clutter_model: ScatteringModel
    noise: NoiseModel
    bob_polarization: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]) / np.sqrt(2.0))
    eve_polarization: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]) / np.sqrt(2.0))
    bob_rotation: np.ndarray = field(default_factory=lambda: np.eye(2))
    eve_rotation: np.ndarray = field(default_factory=lambda: np.eye(2))
    sector: Tuple[float, float] = (np.pi / 6, 5 * np.pi / 6)


@dataclass(frozen=True)
class Geometry:
    bobs: Tuple[Position, ...]
    target: Position
    clutters: Tuple[Position, ...]


def sample_annulus_position(
    rng: np.random.Generator, radii: Tuple[float, float], sector: Tuple[float, float]
) -> Position:
    """Area-uniform draw from an annular sector."""
    r_in, r_out = radii
    radius = float(np.sqrt(rng.uniform(r_in**2, r_out**2)))
    return Position(float(rng.uniform(*sector)), radius)


def sample_geometry(
    rng: np.random.Generator,
    n_users: int,
    n_clutter: int,
    bob_annulus: Tuple[float, float],
    target_annulus: Tuple[float, float],
    sector: Tuple[float, float],
) -> Geometry:
    bobs = tuple(sample_annulus_position(rng, bob_annulus, sector) for _ in range(n_users))
    target = sample_annulus_position(rng, target_annulus, sector)
    clutters = tuple(sample_annulus_position(rng, target_annulus, sector) for _ in range(n_clutter))
    return Geometry(bobs, target, clutters)


def generate_bob_channel(
    rng: np.random.Generator,
    bob_position: Position,
    L: int,
    grid: AngleGrid,
    N: int,
    path_loss_spec: PathLossSpec = PathLossSpec(),
    model: Optional[ScatteringModel] = None,
    rotation: Optional[np.ndarray] = None,
    sector: Tuple[float, float] = (np.pi / 6, 5 * np.pi / 6),
) -> CompoundChannel:
    """Synthetic L-path Bob link: LoS path at the geometric angle plus L-1 scatter paths."""
    if L < 1:
        raise ChannelError(f"L must be >= 1, got {L}")
    model = model or ScatteringModel.from_template()
    angles = np.concatenate([[bob_position.angle], rng.uniform(*sector, size=L - 1)])
    factors = np.concatenate([[1.0], rng.uniform(*path_loss_spec.nlos_distance_factor, size=L - 1)])
    phases = np.exp(2j * np.pi * rng.uniform(size=L))
    attenuation = np.concatenate([[1.0], np.full(L - 1, path_loss_spec.nlos_attenuation)])
    amplitudes = [path_loss_spec.amplitude(bob_position.radius * f) for f in factors] * phases * attenuation
    paths = [make_path(angles[l], amplitudes[l], grid, N) for l in range(L)]
    scattering = sample_scattering_matrices(rng, model, L)
    return compound_channel("bob", paths, grid.M, scattering, rotation)


def generate_radar_channel(
    rng: np.random.Generator,
    position: Position,
    grid: AngleGrid,
    N: int,
    path_loss_spec: PathLossSpec,
    model: ScatteringModel,
    kind: str = "target",
) -> CompoundChannel:
    """Single LoS target or clutter link with one sampled scattering matrix."""
    path = make_path(position.angle, path_loss_spec.amplitude(position.radius), grid, N)
    return compound_channel(kind, [path], grid.M, sample_scattering_matrices(rng, model, 1))


def eve_from_target(target: CompoundChannel, rotation: Optional[np.ndarray] = None) -> CompoundChannel:
    """Eve is the target: same angular and spatial factors, identity depolarization."""
    rotation = np.eye(2) if rotation is None else rotation
    return CompoundChannel("eve", target.M, target.angle_indices[:1], target.spatial[:1], np.eye(2)[None], rotation)


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization: K Bob links, Eve, target, C clutter links and noise powers."""

    bobs: Tuple[CompoundChannel, ...]
    eve: CompoundChannel
    target: CompoundChannel
    clutters: Tuple[CompoundChannel, ...]
    noise: NoiseModel
    bob_polarizations: np.ndarray
    eve_polarization: np.ndarray

    def __post_init__(self) -> None:
        pols = np.asarray(self.bob_polarizations, dtype=float).reshape(len(self.bobs), 2)
        object.__setattr__(self, "bob_polarizations", pols)
        object.__setattr__(self, "eve_polarization", np.asarray(self.eve_polarization, dtype=float).reshape(2))
        object.__setattr__(self, "bobs", tuple(self.bobs))
        object.__setattr__(self, "clutters", tuple(self.clutters))
        shapes = {(c.N, c.M) for c in (*self.bobs, self.eve, self.target, *self.clutters)}
        if len(shapes) != 1:
            raise ChannelError(f"links disagree on (N, M): {sorted(shapes)}")

    @property
    def K(self) -> int:
        return len(self.bobs)

    @property
    def C(self) -> int:
        return len(self.clutters)

    @property
    def N(self) -> int:
        return self.target.N

    @property
    def M(self) -> int:
        return self.target.M

    def to_document(self) -> Dict[str, Any]:
        return {
            "bobs": [b.to_document() for b in self.bobs],
            "eve": self.eve.to_document(),
            "target": self.target.to_document(),
            "clutters": [c.to_document() for c in self.clutters],
            "noise": {"bob": self.noise.sigma2_bob, "eve": self.noise.sigma2_eve, "radar": self.noise.sigma2_radar},
            "bob_polarizations": self.bob_polarizations.tolist(),
            "eve_polarization": self.eve_polarization.tolist(),
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "ChannelSet":
        noise = document["noise"]
        return cls(
            bobs=tuple(CompoundChannel.from_document(b) for b in document["bobs"]),
            eve=CompoundChannel.from_document(document["eve"]),
            target=CompoundChannel.from_document(document["target"]),
            clutters=tuple(CompoundChannel.from_document(c) for c in document["clutters"]),
            noise=NoiseModel(noise["bob"], noise["eve"], noise["radar"]),
            bob_polarizations=np.asarray(document["bob_polarizations"], dtype=float),
            eve_polarization=np.asarray(document["eve_polarization"], dtype=float),
        )


def generate_channel_set(rng: np.random.Generator, params: ChannelParameters, geometry: Geometry) -> ChannelSet:
    """Draw one full realization. Draw order is fixed (Bobs, target, clutters) so seeds replay exactly."""
    N, grid = params.n_antennas, params.grid
    bobs = tuple(
        generate_bob_channel(
            rng, pos, params.n_paths, grid, N, params.path_loss, params.bob_model, params.bob_rotation, params.sector
        )
        for pos in geometry.bobs
    )
    target = generate_radar_channel(rng, geometry.target, grid, N, params.path_loss, params.target_model, "target")
    clutters = tuple(
        generate_radar_channel(rng, pos, grid, N, params.path_loss, params.clutter_model, "clutter")
        for pos in geometry.clutters
    )
    logger.debug(
        f"[CHANNEL] Generated K={len(bobs)}, C={len(clutters)}, N={N}, M={grid.M}, "
        f"target at {np.degrees(geometry.target.angle):.1f} deg / {geometry.target.radius:.1f} m"
    )
    return ChannelSet(
        bobs=bobs,
        eve=eve_from_target(target, params.eve_rotation),
        target=target,
        clutters=clutters,
        noise=params.noise,
        bob_polarizations=np.tile(params.bob_polarization, (len(bobs), 1)),
        eve_polarization=params.eve_polarization,
    )
