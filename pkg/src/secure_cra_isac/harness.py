"""Scenario configuration, scheme baselines, Monte Carlo sweeps and the ``cra-isac`` CLI.

Environment variables:
    CRA_ISAC_JOBS: Default worker count when ``--jobs`` is not given
    CRA_ISAC_LOG_LEVEL: Default log level (default: WARNING)
    CRA_ISAC_OUT_DIR: Default output directory when ``--out`` is not given
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import __version__
from .channel import (
    AngleGrid,
    ChannelParameters,
    ChannelSet,
    Geometry,
    PathLossSpec,
    Position,
    ScatteringModel,
    generate_channel_set,
    sample_geometry,
)
from .detector import roc_curve, roc_frame
from .em_core import EmDictionary, build_dictionary, omni_pattern, polarization_vector, reference_pattern
from .errors import ConfigError, CraIsacError
from .metrics import BeamformerState, NoiseModel, db_to_linear, evaluate_state, to_db
from .optimizer import AlgorithmConfig, IterationTrace, JointOptimizer, ProblemConfig
from .oracle import CheckResult, TinyScenario, run_property_suite
from .results import (
    ResultRecord,
    ResultTracker,
    export_results_report,
    failure_record,
    get_result_tracker,
    record_result,
)

logger = logging.getLogger(__name__)

SCHEMES = ("cra", "pattern_only", "polarization_only", "bb_only")
SWEEP_AXES = ("power", "eps_bob", "eps_eve", "p_pat", "p_pol", "target_angle", "none")
RESOLUTION_PRESETS = {"low": (3, 3), "high": (7, 4)}
FIXED_POLARIZATION = "slant45"
BUILTIN_SCENARIOS = ("default_scenario", "tiny_scenario", "roc_scenario")


@dataclass(frozen=True)
class NoiseSpec:
    bob_dbm: float = -80.0
    eve_dbm: float = -80.0
    radar_dbm: float = -80.0


@dataclass(frozen=True)
class DictionarySpec:
    p_pat: int = 3
    p_pol: int = 3
    sharpness: float = 4.0
    include_omni: bool = False

    def __post_init__(self) -> None:
        if self.p_pat < 1:
            raise ConfigError("dictionary.p_pat", f"must be positive, got {self.p_pat}")
        if not 1 <= self.p_pol <= 4:
            raise ConfigError("dictionary.p_pol", f"must lie in 1..4, got {self.p_pol}")
        if not self.sharpness > 0:
            raise ConfigError("dictionary.sharpness", f"must be positive, got {self.sharpness}")


@dataclass(frozen=True)
class GeometrySpec:
    """Annulus sampling (``random``) or fixed polar positions in degrees and meters (``fixed``)."""

    mode: str = "random"
    bob_annulus_m: Tuple[float, float] = (50.0, 60.0)
    target_annulus_m: Tuple[float, float] = (20.0, 40.0)
    sector_deg: Tuple[float, float] = (30.0, 150.0)
    bobs_deg_m: Tuple[Tuple[float, float], ...] = ((80.0, 55.0), (135.0, 55.0))
    target_deg_m: Tuple[float, float] = (100.0, 30.0)
    clutters_deg_m: Tuple[Tuple[float, float], ...] = ((45.0, 30.0), (115.0, 30.0))

    def __post_init__(self) -> None:
        if self.mode not in ("random", "fixed"):
            raise ConfigError("geometry.mode", f"must be 'random' or 'fixed', got '{self.mode}'")
        lo, hi = self.sector_deg
        if not 0 <= lo < hi < 180:
            raise ConfigError("geometry.sector_deg", "must satisfy 0 <= low < high < 180")
        for name in ("bob_annulus_m", "target_annulus_m"):
            inner, outer = getattr(self, name)
            if not 0 < inner <= outer:
                raise ConfigError(f"geometry.{name}", "must satisfy 0 < inner <= outer")

    def sector(self) -> Tuple[float, float]:
        return (math.radians(self.sector_deg[0]), math.radians(self.sector_deg[1]))


@dataclass(frozen=True)
class ScatteringSpec:
    """Scattering covariance template scales; ``clutter_covariance`` is a 4×4 list of [re, im] pairs."""

    epsilon: float = 0.5
    bob_scale: float = 1.0
    target_scale: float = 1.0
    clutter_scale: float = 1.0
    clutter_covariance: Optional[Any] = None

    def __post_init__(self) -> None:
        for name in ("bob_scale", "target_scale", "clutter_scale"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"scattering.{name}", "must be non-negative")


@dataclass(frozen=True)
class PolarizationSpec:
    bob: str = FIXED_POLARIZATION
    eve: str = FIXED_POLARIZATION

    def __post_init__(self) -> None:
        for name in ("bob", "eve"):
            try:
                polarization_vector(getattr(self, name))
            except CraIsacError as e:
                raise ConfigError(f"polarization.{name}", str(e)) from None


@dataclass(frozen=True)
class ScenarioConfig:
    """Full reproducibility record of one experiment."""

    N: int = 8
    M: int = 180
    K: int = 2
    C: int = 2
    L: int = 5
    carrier_hz: float = 28e9
    p_t_watts: float = 60.0
    eps_bob_db: Tuple[float, ...] = (5.0, 5.0)
    eps_eve_db: Tuple[float, ...] = (-20.0, -20.0)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    dictionary: DictionarySpec = field(default_factory=DictionarySpec)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    path_loss: PathLossSpec = field(default_factory=PathLossSpec)
    scattering: ScatteringSpec = field(default_factory=ScatteringSpec)
    polarization: PolarizationSpec = field(default_factory=PolarizationSpec)
    scheme: str = "cra"
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    seed: int = 2024
    realizations: int = 20

    def __post_init__(self) -> None:
        for name in ("N", "M", "K", "C", "L", "realizations"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        if self.K >= self.N:
            raise ConfigError("K", f"needs K < N to leave a radar stream, got K={self.K}, N={self.N}")
        if self.dictionary.p_pat > self.M:
            raise ConfigError("dictionary.p_pat", f"cannot exceed M={self.M}")
        if not self.p_t_watts > 0:
            raise ConfigError("p_t_watts", f"must be positive, got {self.p_t_watts}")
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"must be one of {SCHEMES}, got '{self.scheme}'")
        if self.path_loss.mode not in ("power", "amplitude"):
            raise ConfigError("path_loss.mode", f"must be 'power' or 'amplitude', got '{self.path_loss.mode}'")
        for name in ("eps_bob_db", "eps_eve_db"):
            values = getattr(self, name)
            if len(values) == 1:
                values = values * self.K
                object.__setattr__(self, name, values)
            if len(values) != self.K:
                raise ConfigError(name, f"needs one value per Bob ({self.K}), got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise ConfigError(name, "thresholds must be finite")
        if self.geometry.mode == "fixed":
            if len(self.geometry.bobs_deg_m) != self.K:
                raise ConfigError("geometry.bobs_deg_m", f"needs {self.K} positions")
            if len(self.geometry.clutters_deg_m) != self.C:
                raise ConfigError("geometry.clutters_deg_m", f"needs {self.C} positions")
        if self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "ScenarioConfig":
        return _from_section(cls, document, "")

    def to_document(self) -> Dict[str, Any]:
        return json.loads(json.dumps(asdict(self)))


_SECTIONS = {
    "noise": NoiseSpec,
    "dictionary": DictionarySpec,
    "geometry": GeometrySpec,
    "path_loss": PathLossSpec,
    "scattering": ScatteringSpec,
    "polarization": PolarizationSpec,
    "algorithm": AlgorithmConfig,
}


def _join_path(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _coerce(value: Any, template: Any, path: str) -> Any:
    """Convert a JSON value to the type of the field's default."""
    if template is None:
        return value
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(template, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(template, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(template, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if not template:
            return tuple(value)
        return tuple(_coerce(v, template[0], f"{path}[{i}]") for i, v in enumerate(value))
    return value


def _from_section(cls: Any, document: Any, path: str) -> Any:
    if not isinstance(document, dict):
        raise ConfigError(path or "<document>", "expected an object")
    defaults = cls()
    names = {f.name for f in fields(cls)}
    for key in document:
        if key not in names:
            raise ConfigError(_join_path(path, key), "unknown key")
    kwargs = {}
    for key, value in document.items():
        key_path = _join_path(path, key)
        if cls is ScenarioConfig and key in _SECTIONS:
            kwargs[key] = _from_section(_SECTIONS[key], value, key_path)
        else:
            kwargs[key] = _coerce(value, getattr(defaults, key), key_path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(path or "<document>", str(e)) from e


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """Read and validate a JSON scenario document."""
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("<document>", f"parse error at line {e.lineno}: {e.msg}") from e
    config = ScenarioConfig.from_document(document)
    logger.info(f"[CONFIG] Loaded {path} (hash {config_hash(config)[:12]})")
    return config


def save_config(config: ScenarioConfig, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_document(), f, indent=2, sort_keys=True)


def load_builtin(name: str) -> ScenarioConfig:
    """One of the scenario documents shipped with the package."""
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError("<document>", f"unknown built-in scenario '{name}'")
    text = resources.files("secure_cra_isac").joinpath("scenarios", f"{name}.json").read_text(encoding="utf-8")
    return ScenarioConfig.from_document(json.loads(text))


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of the config."""
    canonical = json.dumps(config.to_document(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def with_resolution(config: ScenarioConfig, name: str) -> ScenarioConfig:
    if name not in RESOLUTION_PRESETS:
        raise ConfigError("resolution", f"must be one of {sorted(RESOLUTION_PRESETS)}, got '{name}'")
    p_pat, p_pol = RESOLUTION_PRESETS[name]
    return replace(config, dictionary=replace(config.dictionary, p_pat=p_pat, p_pol=p_pol))


def apply_scheme(scheme: str, dictionary: EmDictionary, reference: Optional[np.ndarray] = None) -> EmDictionary:
    """Restrict a full dictionary to a baseline scheme's modes.

    ``polarization_only`` fixes the pattern to ``reference`` (default: the
    sector-center lobe of sharpness 4), a directional lobe normalized like the
    dictionary lobes. ``bb_only`` keeps the omnidirectional pattern.
    """
    fixed = polarization_vector(FIXED_POLARIZATION)[:, None]
    reference = reference_pattern(dictionary.M) if reference is None else np.asarray(reference, dtype=float)
    if scheme == "cra":
        return dictionary
    if scheme == "pattern_only":
        return EmDictionary.from_parts(dictionary.pattern_dict, fixed)
    if scheme == "polarization_only":
        return EmDictionary.from_parts(reference.reshape(dictionary.M, 1), dictionary.pol_dict)
    if scheme == "bb_only":
        return EmDictionary.from_parts(omni_pattern(dictionary.M), fixed)
    raise ConfigError("scheme", f"must be one of {SCHEMES}, got '{scheme}'")


def scheme_dictionary(config: ScenarioConfig) -> EmDictionary:
    spec = config.dictionary
    full = build_dictionary(config.M, spec.p_pat, spec.p_pol, spec.sharpness, spec.include_omni)
    return apply_scheme(config.scheme, full, reference_pattern(config.M, spec.sharpness))


def problem_config(config: ScenarioConfig) -> ProblemConfig:
    return ProblemConfig(
        p_t_watts=config.p_t_watts,
        eps_bob=tuple(db_to_linear(v) for v in config.eps_bob_db),
        eps_eve=tuple(db_to_linear(v) for v in config.eps_eve_db),
        algorithm=config.algorithm,
    )


def scattering_models(config: ScenarioConfig) -> Tuple[ScatteringModel, ScatteringModel, ScatteringModel]:
    """(bob, target, clutter) scattering models."""
    spec = config.scattering
    bob = ScatteringModel.from_template(spec.epsilon, spec.bob_scale)
    target = ScatteringModel.from_template(spec.epsilon, spec.target_scale)
    if spec.clutter_covariance is not None:
        pairs = np.asarray(spec.clutter_covariance, dtype=float)
        try:
            clutter = ScatteringModel(pairs[..., 0] + 1j * pairs[..., 1], spec.epsilon)
        except (IndexError, CraIsacError) as e:
            raise ConfigError("scattering.clutter_covariance", str(e)) from None
    else:
        clutter = ScatteringModel.from_template(spec.epsilon, spec.clutter_scale)
    return bob, target, clutter


def channel_parameters(config: ScenarioConfig) -> ChannelParameters:
    bob, target, clutter = scattering_models(config)
    return ChannelParameters(
        n_antennas=config.N,
        grid=AngleGrid(config.M),
        n_paths=config.L,
        path_loss=config.path_loss,
        bob_model=bob,
        target_model=target,
        clutter_model=clutter,
        noise=NoiseModel.from_dbm(config.noise.bob_dbm, config.noise.eve_dbm, config.noise.radar_dbm),
        bob_polarization=polarization_vector(config.polarization.bob),
        eve_polarization=polarization_vector(config.polarization.eve),
        sector=config.geometry.sector(),
    )


def _position(deg_m: Tuple[float, float]) -> Position:
    return Position(math.radians(deg_m[0]), deg_m[1])


def scenario_geometry(config: ScenarioConfig, rng: np.random.Generator) -> Geometry:
    spec = config.geometry
    if spec.mode == "fixed":
        return Geometry(
            tuple(_position(p) for p in spec.bobs_deg_m),
            _position(spec.target_deg_m),
            tuple(_position(p) for p in spec.clutters_deg_m),
        )
    return sample_geometry(rng, config.K, config.C, spec.bob_annulus_m, spec.target_annulus_m, spec.sector())


def realization_seed(base_seed: int, realization: int) -> int:
    """Per-realization u64 seed derived from (base seed, realization index)."""
    return int(np.random.SeedSequence([base_seed, realization]).generate_state(1, np.uint64)[0])


def realization_rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (channel, optimizer) generators, so schemes share channel draws."""
    channel_seq, optimizer_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(channel_seq), np.random.default_rng(optimizer_seq)


def generate_realization(config: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    geometry = scenario_geometry(config, rng)
    return generate_channel_set(rng, channel_parameters(config), geometry)


def optimize_realization(
    config: ScenarioConfig, seed: int
) -> Tuple[ChannelSet, EmDictionary, BeamformerState, IterationTrace]:
    channel_rng, optimizer_rng = realization_rngs(seed)
    channels = generate_realization(config, channel_rng)
    dictionary = scheme_dictionary(config)
    state, trace = JointOptimizer(problem_config(config)).run(channels, dictionary, optimizer_rng)
    return channels, dictionary, state, trace


def run_realization(
    config: ScenarioConfig,
    seed: int,
    realization: int = 0,
    axis: str = "none",
    axis_value: float = math.nan,
) -> Tuple[ResultRecord, Optional[IterationTrace]]:
    """Optimize one realization; library errors become a failure record."""
    digest = config_hash(config)
    start = time.perf_counter()
    try:
        channels, dictionary, state, trace = optimize_realization(config, seed)
    except CraIsacError as e:
        logger.warning(f"[SWEEP] {config.scheme} realization {realization} failed: {e}")
        record = failure_record(
            digest, seed, realization, config.scheme, axis, axis_value, type(e).__name__, time.perf_counter() - start
        )
        return record, None
    metrics = trace.final or evaluate_state(channels, dictionary, state)
    record: ResultRecord = {
        "config_hash": digest,
        "seed": seed,
        "realization": realization,
        "scheme": config.scheme,
        "axis": axis,
        "axis_value": axis_value,
        "status": "ok" if state.feasible else "constraints_violated",
        "scnr_db": to_db(metrics["scnr"]),
        "sinr_db": [to_db(v) for v in metrics["sinr"]],
        "eve_sinr_db": [to_db(v) for v in metrics["eve_sinr"]],
        "power_w": metrics["power_w"],
        "iterations": trace.iterations,
        "converged": trace.converged,
        "wall_time_s": time.perf_counter() - start,
    }
    return record, trace


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Config with the swept quantity set to ``value``."""
    if axis == "none":
        return config
    if axis == "power":
        return replace(config, p_t_watts=float(value))
    if axis == "eps_bob":
        return replace(config, eps_bob_db=(float(value),) * config.K)
    if axis == "eps_eve":
        return replace(config, eps_eve_db=(float(value),) * config.K)
    if axis in ("p_pat", "p_pol"):
        if not float(value).is_integer():
            raise ConfigError(axis, f"needs integer values, got {value}")
        return replace(config, dictionary=replace(config.dictionary, **{axis: int(value)}))
    if axis == "target_angle":
        geometry = replace(
            config.geometry, mode="fixed", target_deg_m=(float(value), config.geometry.target_deg_m[1])
        )
        return replace(config, geometry=geometry)
    raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got '{axis}'")


class RealizationTask(NamedTuple):
    config: ScenarioConfig
    seed: int
    realization: int
    axis: str
    axis_value: float


def _run_task(task: RealizationTask) -> Tuple[ResultRecord, Optional[IterationTrace]]:
    return run_realization(task.config, task.seed, task.realization, task.axis, task.axis_value)


@dataclass
class SweepResult:
    tracker: ResultTracker
    traces: List[Tuple[RealizationTask, IterationTrace]] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        """Per-iteration rows of every kept trace, tagged with seed, scheme and realization."""
        frames = []
        for task, trace in self.traces:
            frame = trace.to_frame()
            frame.insert(0, "realization", task.realization)
            frame.insert(0, "scheme", task.config.scheme)
            frame.insert(0, "seed", task.seed)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("CRA_ISAC_JOBS", "1")))
    except ValueError:
        logger.warning("[CONFIG] CRA_ISAC_JOBS is not an integer, using 1 worker")
        return 1


def sweep_tasks(
    config: ScenarioConfig, axis: str, values: Sequence[float], n_realizations: int, schemes: Sequence[str]
) -> List[RealizationTask]:
    """Tasks in (axis value, realization, scheme) order; seeds depend on the realization index only."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got '{axis}'")
    if n_realizations < 1:
        raise ConfigError("realizations", f"must be positive, got {n_realizations}")
    axis_values: Iterable[float] = [math.nan] if axis == "none" else values
    tasks = []
    for value in axis_values:
        swept = apply_axis(config, axis, value)
        for realization in range(n_realizations):
            seed = realization_seed(config.seed, realization)
            for scheme in schemes:
                tasks.append(RealizationTask(replace(swept, scheme=scheme), seed, realization, axis, float(value)))
    return tasks


def run_sweep(
    config: ScenarioConfig,
    axis: str,
    values: Sequence[float],
    n_realizations: int,
    schemes: Optional[Sequence[str]] = None,
    jobs: int = 1,
    progress: bool = False,
) -> SweepResult:
    """Run every (value, realization, scheme) task; rows are collected in task order."""
    tasks = sweep_tasks(config, axis, values, n_realizations, list(schemes or [config.scheme]))
    result = SweepResult(ResultTracker())
    logger.info(f"[SWEEP] {len(tasks)} tasks on axis '{axis}' with {jobs} worker(s)")
    with tqdm(total=len(tasks), desc=f"sweep[{axis}]", disable=not progress) as bar:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                outcomes: Iterable[Tuple[ResultRecord, Optional[IterationTrace]]] = executor.map(_run_task, tasks)
                for task, (record, trace) in zip(tasks, outcomes):
                    _collect(result, task, record, trace, axis)
                    bar.update(1)
        else:
            for task in tasks:
                record, trace = _run_task(task)
                _collect(result, task, record, trace, axis)
                bar.update(1)
    ok = len(result.tracker.get_successful_results())
    logger.info(f"[SWEEP] Done: {ok}/{len(tasks)} realizations ok")
    return result


def _collect(
    result: SweepResult, task: RealizationTask, record: ResultRecord, trace: Optional[IterationTrace], axis: str
) -> None:
    result.tracker.record(record)
    record_result(record)
    if axis == "none" and trace is not None:
        result.traces.append((task, trace))


def run_roc(
    config: ScenarioConfig,
    schemes: Sequence[str],
    pfa_grid: Sequence[float],
    n_trials: int,
    realization: int = 0,
    jobs: int = 1,
) -> pd.DataFrame:
    """ROC per scheme on one shared channel realization, with common detector random numbers."""
    seed = realization_seed(config.seed, realization)
    _, target_model, clutter_model = scattering_models(config)
    curves = {}
    for scheme in schemes:
        channels, dictionary, state, _ = optimize_realization(replace(config, scheme=scheme), seed)
        detector_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        curves[scheme] = roc_curve(
            state, channels, dictionary, target_model, n_trials, pfa_grid, detector_rng, clutter_model, jobs=jobs
        )
        logger.info(f"[ROC] {scheme}: SCNR {to_db(state.gamma):.2f} dB")
    return roc_frame(curves, n_trials)


def tiny_instance(config: ScenarioConfig, seed: int) -> TinyScenario:
    channels = generate_realization(config, realization_rngs(seed)[0])
    return TinyScenario(channels, scheme_dictionary(config), problem_config(config), seed)


def validate(config: ScenarioConfig, n_instances: int = 100) -> List[CheckResult]:
    """Property suite over ``n_instances`` seeded tiny realizations."""
    instances = [tiny_instance(config, realization_seed(config.seed, i)) for i in range(n_instances)]
    return run_property_suite(instances, np.random.default_rng(config.seed))


def write_metadata(
    path: Path, config: ScenarioConfig, command: str, wall_time_s: float, extra: Optional[Dict[str, Any]] = None
) -> None:
    document = {
        "command": command,
        "config": config.to_document(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "wall_time_s": wall_time_s,
        "version": __version__,
        "generated_at": datetime.now().isoformat(),
        **(extra or {}),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cra-isac", description="Secure ISAC with compound reconfigurable antennas")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="scenario JSON (default: built-in default_scenario)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", type=str, default=None)
    common.add_argument("--scheme", type=str, default=None, choices=SCHEMES)
    common.add_argument("--jobs", type=int, default=None)
    common.add_argument("--resolution", type=str, default=None, choices=sorted(RESOLUTION_PRESETS))
    common.add_argument("--log-level", type=str, default=None)
    common.add_argument("--no-progress", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="optimize one realization")
    sweep = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over one axis")
    sweep.add_argument("--axis", type=str, required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", type=float, nargs="*", default=[])
    sweep.add_argument("--realizations", type=int, default=None)
    sweep.add_argument("--schemes", type=str, nargs="+", default=None, choices=SCHEMES)
    roc = sub.add_parser("roc", parents=[common], help="ROC curves per scheme")
    roc.add_argument("--schemes", type=str, nargs="+", default=["cra", "bb_only"], choices=SCHEMES)
    roc.add_argument("--pfa", type=float, nargs="+", default=[1e-3, 1e-2, 1e-1])
    roc.add_argument("--trials", type=int, default=100_000)
    validate_cmd = sub.add_parser("validate", parents=[common], help="oracle and property checks on tiny instances")
    validate_cmd.add_argument("--instances", type=int, default=100)
    return parser


def _configure_logging(level: Optional[str]) -> None:
    name = (level or os.environ.get("CRA_ISAC_LOG_LEVEL", "WARNING")).upper()
    logging.basicConfig(level=getattr(logging, name, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    default = "tiny_scenario" if args.command == "validate" else "default_scenario"
    config = load_config(args.config) if args.config else load_builtin(default)
    if args.resolution:
        config = with_resolution(config, args.resolution)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.scheme:
        config = replace(config, scheme=args.scheme)
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        config = _resolve_config(args)
    except CraIsacError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    out = Path(args.out or os.environ.get("CRA_ISAC_OUT_DIR", "results"))
    out.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs if args.jobs is not None else default_jobs()
    start = time.perf_counter()

    if args.command == "run":
        record, trace = run_realization(config, realization_seed(config.seed, 0))
        record_result(record)
        get_result_tracker().export_results_csv(out / "results.csv")
        export_results_report(out / "report.json")
        if trace is not None:
            trace.export_csv(out / "trace.csv")
        scnr = "n/a" if record["scnr_db"] is None else f"{record['scnr_db']:.3f} dB"
        print(f"{record['scheme']}: status={record['status']} SCNR={scnr} "
              f"SINR={record['sinr_db']} Eve={record['eve_sinr_db']} iterations={record['iterations']}")
        write_metadata(out / "metadata.json", config, "run", time.perf_counter() - start)
        return 0 if record["status"] == "ok" else 1

    if args.command == "sweep":
        realizations = args.realizations or config.realizations
        result = run_sweep(config, args.axis, args.values, realizations, args.schemes, jobs, not args.no_progress)
        result.tracker.export_results_csv(out / "results.csv")
        result.tracker.export_aggregate_csv(out / "aggregate.csv")
        export_results_report(out / "report.json")
        if args.axis == "none":
            result.trace_frame().to_csv(out / "trace.csv", index=False, float_format="%.10g")
        print(result.tracker.aggregate().to_string(index=False))
        extra = {"axis": args.axis, "values": args.values, "realizations": realizations}
        write_metadata(out / "metadata.json", config, "sweep", time.perf_counter() - start, extra)
        return 0

    if args.command == "roc":
        frame = run_roc(config, args.schemes, args.pfa, args.trials, jobs=jobs)
        frame.to_csv(out / "roc.csv", index=False, float_format="%.10g")
        print(frame.to_string(index=False))
        extra = {"schemes": args.schemes, "pfa": args.pfa, "trials": args.trials}
        write_metadata(out / "metadata.json", config, "roc", time.perf_counter() - start, extra)
        return 0

    results = validate(config, args.instances)
    for check in results:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    write_metadata(out / "metadata.json", config, "validate", time.perf_counter() - start)
    return 0 if all(check.passed for check in results) else 1


if __name__ == "__main__":
    sys.exit(main())
