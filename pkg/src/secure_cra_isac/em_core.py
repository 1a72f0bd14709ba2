"""EM-mode dictionaries, selection matrices and EM-domain beamformers.

A compound reconfigurable antenna picks one (radiation pattern, polarization)
pair per element. The candidate pairs form the columns of an EM dictionary
``full_dict = pattern_dict ⊗ pol_dict`` whose column ``i * P_pol + j`` combines
pattern ``i`` with polarization ``j``. Each column is a 2M-vector laid out as
``[gain(θ_0)·(H, V), gain(θ_1)·(H, V), ...]``.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import DictionaryError, SelectionError

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-12
COLUMN_SUM_TOL = 1e-9
DEFAULT_SECTOR: Tuple[float, float] = (np.pi / 6, 5 * np.pi / 6)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def angle_samples(M: int) -> np.ndarray:
    """M uniform samples of [0, π) with spacing π/M."""
    return np.arange(M) * np.pi / M


@dataclass(frozen=True)
class PolarizationState:
    """Horizontal/vertical gain pair of one polarization state."""

    h_gain: float
    v_gain: float

    def __post_init__(self) -> None:
        if abs(self.h_gain**2 + self.v_gain**2 - 1.0) > UNIT_NORM_TOL:
            raise DictionaryError(f"polarization gains ({self.h_gain}, {self.v_gain}) are not unit norm")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.h_gain, self.v_gain])


_INV_SQRT2 = 1.0 / np.sqrt(2.0)

POLARIZATION_STATES: Dict[str, PolarizationState] = {
    "H": PolarizationState(1.0, 0.0),
    "V": PolarizationState(0.0, 1.0),
    "slant45": PolarizationState(_INV_SQRT2, _INV_SQRT2),
    "slant135": PolarizationState(_INV_SQRT2, -_INV_SQRT2),
}
POLARIZATION_ORDER: Tuple[str, ...] = ("H", "V", "slant45", "slant135")


def polarization_vector(name: str) -> np.ndarray:
    """Gain vector of a named polarization state (``H``, ``V``, ``slant45``, ``slant135``)."""
    try:
        return POLARIZATION_STATES[name].vector
    except KeyError:
        raise DictionaryError(f"unknown polarization state '{name}'") from None


@dataclass(frozen=True)
class RadiationPattern:
    """Non-negative, unit-norm angular gains over the M-point grid."""

    gains: np.ndarray

    def __post_init__(self) -> None:
        gains = np.asarray(self.gains, dtype=float)
        if gains.ndim != 1 or np.any(gains < 0):
            raise DictionaryError("radiation pattern must be a non-negative vector")
        if abs(np.linalg.norm(gains) - 1.0) > UNIT_NORM_TOL:
            raise DictionaryError("radiation pattern must have unit l2 norm")
        object.__setattr__(self, "gains", _frozen(gains))


def omni_pattern(M: int) -> np.ndarray:
    """Constant pattern 1/√M, returned as an M×1 column."""
    if M < 1:
        raise DictionaryError(f"M must be positive, got {M}")
    return np.full((M, 1), 1.0 / np.sqrt(M))


def build_pattern_dictionary(
    M: int,
    P_pat: int,
    sharpness: float = 4.0,
    include_omni: bool = False,
    sector: Tuple[float, float] = DEFAULT_SECTOR,
) -> np.ndarray:
    """Build the M×P_pat raised-cosine pattern dictionary.

    Directional lobe centers are spaced uniformly inside ``sector``. When
    ``include_omni`` is set the omnidirectional column is the first column and
    counts towards ``P_pat``.

    Args:
        M: Number of angular samples on [0, π)
        P_pat: Number of pattern columns
        sharpness: Exponent of the raised-cosine lobe
        include_omni: Whether one column is the constant pattern
        sector: Angular interval holding the lobe centers

    Returns:
        M×P_pat matrix with unit-norm, non-negative columns
    """
    if P_pat < 1 or M < P_pat:
        raise DictionaryError(f"need M >= P_pat >= 1, got M={M}, P_pat={P_pat}")
    if sharpness <= 0:
        raise DictionaryError(f"sharpness must be positive, got {sharpness}")

    theta = angle_samples(M)
    columns: List[np.ndarray] = []
    if include_omni:
        columns.append(omni_pattern(M)[:, 0])

    n_dir = P_pat - len(columns)
    lo, hi = sector
    for p in range(n_dir):
        center = lo + (p + 0.5) * (hi - lo) / n_dir
        lobe = np.maximum(0.0, np.cos(theta - center)) ** sharpness
        norm = np.linalg.norm(lobe)
        if not np.isfinite(norm) or norm <= np.finfo(float).tiny:
            raise DictionaryError(f"pattern column {p} centered at {center:.4f} rad vanishes on the grid")
        columns.append(lobe / norm)

    logger.debug(f"[EM-CORE] Pattern dictionary M={M}, P_pat={P_pat}, sharpness={sharpness}, omni={include_omni}")
    return np.column_stack(columns)


def reference_pattern(M: int, sharpness: float = 4.0, sector: Tuple[float, float] = DEFAULT_SECTOR) -> np.ndarray:
    """Single raised-cosine lobe at the sector center as an M×1 column, normalized like dictionary lobes."""
    return build_pattern_dictionary(M, 1, sharpness, include_omni=False, sector=sector)


def build_polarization_dictionary(P_pol: int) -> np.ndarray:
    """Build the 2×P_pol polarization dictionary from the first P_pol of (H, V, slant45, slant135)."""
    if P_pol not in (1, 2, 3, 4):
        raise DictionaryError(f"P_pol must be in 1..4, got {P_pol}")
    return np.column_stack([POLARIZATION_STATES[name].vector for name in POLARIZATION_ORDER[:P_pol]])


@dataclass(frozen=True)
class EmDictionary:
    """Pattern, polarization and combined (Kronecker) EM dictionaries."""

    pattern_dict: np.ndarray
    pol_dict: np.ndarray
    full_dict: np.ndarray

    def __post_init__(self) -> None:
        pattern = np.asarray(self.pattern_dict, dtype=float)
        pol = np.asarray(self.pol_dict, dtype=float)
        full = np.asarray(self.full_dict, dtype=float)
        if pattern.ndim != 2 or pol.ndim != 2 or pol.shape[0] != 2:
            raise DictionaryError("pattern_dict must be M×P_pat and pol_dict 2×P_pol")
        if full.shape != (2 * pattern.shape[0], pattern.shape[1] * pol.shape[1]):
            raise DictionaryError(f"full_dict has shape {full.shape}, inconsistent with its factors")
        if not np.allclose(full, np.kron(pattern, pol), rtol=0.0, atol=UNIT_NORM_TOL):
            raise DictionaryError("full_dict is not the Kronecker product of its factors")
        if np.any(np.abs(np.linalg.norm(full, axis=0) - 1.0) > UNIT_NORM_TOL):
            raise DictionaryError("every dictionary column must have unit l2 norm")
        object.__setattr__(self, "pattern_dict", _frozen(pattern))
        object.__setattr__(self, "pol_dict", _frozen(pol))
        object.__setattr__(self, "full_dict", _frozen(full))

    @classmethod
    def from_parts(cls, pattern_dict: np.ndarray, pol_dict: np.ndarray) -> "EmDictionary":
        return cls(pattern_dict, pol_dict, np.kron(pattern_dict, pol_dict))

    @property
    def M(self) -> int:
        return int(self.pattern_dict.shape[0])

    @property
    def P_pat(self) -> int:
        return int(self.pattern_dict.shape[1])

    @property
    def P_pol(self) -> int:
        return int(self.pol_dict.shape[1])

    @property
    def P(self) -> int:
        return int(self.full_dict.shape[1])

    def angular_block(self, m: int) -> np.ndarray:
        """2×P rows of the dictionary at angle index m (the (H, V) gains of every mode)."""
        return self.full_dict[2 * m : 2 * m + 2, :]

    def to_document(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "P_pat": self.P_pat,
            "P_pol": self.P_pol,
            "pattern_dict": self.pattern_dict.tolist(),
            "pol_dict": self.pol_dict.tolist(),
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "EmDictionary":
        return cls.from_parts(np.asarray(document["pattern_dict"]), np.asarray(document["pol_dict"]))


def build_dictionary(
    M: int, P_pat: int, P_pol: int, sharpness: float = 4.0, include_omni: bool = False
) -> EmDictionary:
    return EmDictionary.from_parts(
        build_pattern_dictionary(M, P_pat, sharpness, include_omni), build_polarization_dictionary(P_pol)
    )


@dataclass(frozen=True)
class SelectionMatrix:
    """P×N per-antenna mode choice, binary (one-hot columns) or box-relaxed."""

    entries: np.ndarray
    mode: str = "binary"

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.size == 0:
            raise SelectionError("selection must be a non-empty P×N matrix")
        sums = entries.sum(axis=0)
        if self.mode == "binary":
            if not np.all((entries == 0.0) | (entries == 1.0)) or not np.all(sums == 1.0):
                raise SelectionError("binary selection columns must be one-hot")
        elif self.mode == "relaxed":
            if np.any(entries < 0.0) or np.any(entries > 1.0):
                raise SelectionError("relaxed selection entries must lie in [0, 1]")
            if np.any(np.abs(sums - 1.0) > COLUMN_SUM_TOL):
                raise SelectionError(f"relaxed selection columns must sum to 1, got {sums}")
        else:
            raise SelectionError(f"unknown selection mode '{self.mode}'")
        object.__setattr__(self, "entries", _frozen(entries))

    @classmethod
    def one_hot(cls, indices: Sequence[int], P: int) -> "SelectionMatrix":
        entries = np.zeros((P, len(indices)))
        entries[np.asarray(indices, dtype=int), np.arange(len(indices))] = 1.0
        return cls(entries, "binary")

    @classmethod
    def from_vector(cls, s: np.ndarray, P: int, N: int) -> "SelectionMatrix":
        """Relaxed selection from a solver vector ``s[n * P + p]`` (clipped and column-normalized)."""
        entries = np.clip(np.asarray(s, dtype=float).reshape(N, P).T, 0.0, 1.0)
        sums = entries.sum(axis=0)
        if np.any(sums <= 0):
            raise SelectionError("selection vector has an all-zero column")
        return cls(np.clip(entries / sums, 0.0, 1.0), "relaxed")

    @property
    def P(self) -> int:
        return int(self.entries.shape[0])

    @property
    def N(self) -> int:
        return int(self.entries.shape[1])

    @property
    def indices(self) -> np.ndarray:
        return np.argmax(self.entries, axis=0)

    def vector(self) -> np.ndarray:
        """vec(S) in column-major order, ``s[n * P + p] = S[p, n]``."""
        return self.entries.flatten(order="F")

    def binariness_gap(self) -> float:
        return float(np.max(self.entries * (1.0 - self.entries)))


@dataclass(frozen=True)
class EmBeamformer:
    """Per-antenna EM gain vectors, one 2M-block per antenna (rows of ``blocks``)."""

    blocks: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", _frozen(np.asarray(self.blocks, dtype=float)))

    @property
    def N(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def M(self) -> int:
        return int(self.blocks.shape[1] // 2)

    def dense(self) -> np.ndarray:
        """Block-diagonal 2MN×N materialization."""
        return scipy.linalg.block_diag(*[block[:, None] for block in self.blocks])

    def angular_gains(self, angle_indices: np.ndarray) -> np.ndarray:
        """(H, V) gains of every antenna at the given angle indices, shape (L, N, 2)."""
        per_angle = self.blocks.reshape(self.N, self.M, 2)
        return np.transpose(per_angle[:, np.asarray(angle_indices, dtype=int), :], (1, 0, 2))


def _check_dims(dictionary: EmDictionary, sel: SelectionMatrix) -> None:
    if sel.P != dictionary.P:
        raise DictionaryError(f"selection has {sel.P} rows, dictionary has {dictionary.P} modes")


def assemble_em_beamformer(dictionary: EmDictionary, sel: SelectionMatrix) -> EmBeamformer:
    _check_dims(dictionary, sel)
    return EmBeamformer((dictionary.full_dict @ sel.entries).T)


def stacked_gain_vector(dictionary: EmDictionary, sel: SelectionMatrix) -> np.ndarray:
    """vec(full_dict · S), the concatenation of the per-antenna EM blocks."""
    _check_dims(dictionary, sel)
    return (dictionary.full_dict @ sel.entries).flatten(order="F")


def round_selection(sel: SelectionMatrix) -> SelectionMatrix:
    """One-hot at each column's argmax; ties go to the lowest index."""
    return SelectionMatrix.one_hot(np.argmax(sel.entries, axis=0), sel.P)
