"""Experiment configuration read from YAML and validated into dataclasses."""

import os
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import List, Optional

import yaml

from .channel import CHANNEL_KINDS
from .denoiser import CONDITIONING_MODES, TrainingConfig
from .errors import ConfigError, ChandiffError
from .schedule import NoiseSchedule
from .sources import KINDS, SourceModel

SCHEMES = ("slow", "fill", "nofill", "equalized")
MASK_STRATEGIES = ("none", "random", "l2_norm")
DENOISER_KINDS = ("analytic_mmse", "trained_network")
ESTIMATOR_KINDS = ("moment_based", "trained_network")


@dataclass
class SourceSpec:
    kind: str = "unit_gaussian"
    n_dims: int = 64
    separation: float = 0.9
    weight: float = 0.5
    mean_offset: float = 0.8
    correlation: float = 0.8

    def build(self) -> SourceModel:
        if self.kind == "unit_gaussian":
            return SourceModel.unit_gaussian()
        if self.kind == "laplace":
            return SourceModel.laplace()
        if self.kind == "gaussian_mixture":
            return SourceModel.two_component(self.separation, self.weight)
        return SourceModel.structured(self.mean_offset, self.correlation)


@dataclass
class ChannelSpec:
    kind: str = "fast_fading"
    snr_db: List[float] = field(default_factory=lambda: [0.0])
    block_length: List[int] = field(default_factory=lambda: [1])
    fixed_gain: Optional[float] = None


@dataclass
class ScheduleSpec:
    e: float = 3.0
    g: float = 0.0
    tau: float = 0.7
    steps: int = 50

    def build(self) -> NoiseSchedule:
        return NoiseSchedule(self.e, self.g, self.tau)


@dataclass
class DenoiserSpec:
    kind: str = "analytic_mmse"
    conditioning: str = "none"
    model_path: Optional[str] = None
    training: TrainingConfig = field(default_factory=TrainingConfig)


@dataclass
class EstimatorSpec:
    kind: str = "moment_based"
    snr_model: Optional[str] = None
    phase_model: Optional[str] = None
    max_iters: int = 10
    tol: float = 1e-3
    alpha_range: List[float] = field(default_factory=lambda: [0.05, 0.95])
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(
        steps=3000, batch_size=64, learning_rate=2e-2))


@dataclass
class MaskSpec:
    strategy: str = "none"
    ratio: float = 0.0
    embed_dim: int = 4


@dataclass
class PipelineSpec:
    pilot_free: bool = False
    schemes: List[str] = field(default_factory=lambda: ["fill", "nofill"])
    step: Optional[str] = None
    mask: MaskSpec = field(default_factory=MaskSpec)
    peak: float = 1.0
    alpha_error: float = 0.0


@dataclass
class ExperimentConfig:
    seed: int = 0
    trials: int = 500
    output: str = "results.csv"
    source: SourceSpec = field(default_factory=SourceSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    pipeline: PipelineSpec = field(default_factory=PipelineSpec)
    base_dir: str = "."

    def resolve(self, path: Optional[str]) -> Optional[str]:
        if path is None or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)


_NESTED = {
    ExperimentConfig: {"source": SourceSpec, "channel": ChannelSpec, "schedule": ScheduleSpec,
                       "denoiser": DenoiserSpec, "estimator": EstimatorSpec,
                       "pipeline": PipelineSpec},
    DenoiserSpec: {"training": TrainingConfig},
    EstimatorSpec: {"training": TrainingConfig},
    PipelineSpec: {"mask": MaskSpec},
}


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get(cls, {}).get(key)
        kwargs[key] = _build(sub, value, f"{where}.{key}") if sub else value
    try:
        return cls(**kwargs)
    except ChandiffError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def validate(cfg: ExperimentConfig, check_files: bool = True) -> ExperimentConfig:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(isinstance(cfg.seed, int) and 0 <= cfg.seed < 2**64, "seed must be a 64-bit non-negative integer")
    need(isinstance(cfg.trials, int) and cfg.trials >= 1, "trials must be >= 1")
    src = cfg.source
    need(src.kind in KINDS, f"source.kind must be one of {KINDS}")
    need(isinstance(src.n_dims, int) and src.n_dims >= 2 and src.n_dims % 2 == 0,
         "source.n_dims must be an even integer >= 2")
    try:
        src.build()
    except ChandiffError as exc:
        raise ConfigError(f"source: {exc}") from None

    ch = cfg.channel
    ch.snr_db = [float(s) for s in _as_list(ch.snr_db)]
    ch.block_length = [int(r) for r in _as_list(ch.block_length)]
    need(ch.kind in CHANNEL_KINDS, f"channel.kind must be one of {CHANNEL_KINDS}")
    need(len(ch.snr_db) >= 1 and len(ch.block_length) >= 1, "channel grids must be non-empty")
    need(all(r >= 1 for r in ch.block_length), "channel.block_length entries must be >= 1")

    need(isinstance(cfg.schedule.steps, int) and cfg.schedule.steps >= 1, "schedule.steps must be >= 1")
    try:
        cfg.schedule.build()
    except ChandiffError as exc:
        raise ConfigError(f"schedule: {exc}") from None

    den = cfg.denoiser
    need(den.kind in DENOISER_KINDS, f"denoiser.kind must be one of {DENOISER_KINDS}")
    need(den.conditioning in CONDITIONING_MODES, f"denoiser.conditioning must be one of {CONDITIONING_MODES}")
    if den.conditioning == "label":
        need(src.kind == "gaussian_mixture", "label conditioning needs a gaussian_mixture source")
    if den.kind == "trained_network":
        need(den.model_path is not None, "denoiser.model_path is required for trained_network")

    est = cfg.estimator
    need(est.kind in ESTIMATOR_KINDS, f"estimator.kind must be one of {ESTIMATOR_KINDS}")
    need(est.max_iters >= 1 and est.tol > 0, "estimator.max_iters >= 1 and tol > 0 required")

    pipe = cfg.pipeline
    pipe.schemes = _as_list(pipe.schemes)
    need(pipe.schemes and all(s in SCHEMES for s in pipe.schemes),
         f"pipeline.schemes entries must come from {SCHEMES}")
    need(len(set(pipe.schemes)) == len(pipe.schemes), "pipeline.schemes has duplicates")
    need(pipe.step in (None, "matched", "unit"), "pipeline.step must be matched, unit or null")
    need(pipe.peak > 0, "pipeline.peak must be positive")
    m = pipe.mask
    need(m.strategy in MASK_STRATEGIES, f"pipeline.mask.strategy must be one of {MASK_STRATEGIES}")
    need(0 <= m.ratio < 1, "pipeline.mask.ratio must lie in [0, 1)")
    need(m.embed_dim >= 1 and src.n_dims % m.embed_dim == 0, "pipeline.mask.embed_dim must divide n_dims")
    masked = m.strategy != "none" and m.ratio > 0
    if "slow" in pipe.schemes:
        need(ch.kind != "fast_fading" and not masked,
             "the slow scheme needs a uniform noise level (no fast fading, no masking)")
    if pipe.pilot_free:
        need(ch.kind in ("awgn", "slow_fading"), "pilot_free estimation needs awgn or slow_fading")
        need(not masked, "pilot_free estimation cannot be combined with masking")
        if est.kind == "moment_based":
            model = src.build()
            need(abs(model.fourth_moment() - 3.0) > 1e-9,
                 "moment SNR estimation needs a source with kurtosis != 3")
            need(src.kind == "structured", "moment phase estimation needs the structured source")
        else:
            need(est.snr_model is not None and est.phase_model is not None,
                 "trained estimators need estimator.snr_model and estimator.phase_model")

    if check_files:
        paths = []
        if den.kind == "trained_network":
            paths.append(den.model_path)
        if pipe.pilot_free and est.kind == "trained_network":
            paths += [est.snr_model, est.phase_model]
        for p in paths:
            need(os.path.isfile(cfg.resolve(p)), f"model file not found: {p}")
    return cfg


def from_dict(data, base_dir: str = ".", check_files: bool = True) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "config")
    cfg.base_dir = base_dir
    return validate(cfg, check_files)


def load_config(path: str, check_files: bool = True) -> ExperimentConfig:
    """Load a YAML config; ``'default'`` selects the packaged defaults.

    Relative model paths are resolved against the config file's directory.
    """
    if path == "default":
        text = resources.files("chandiff").joinpath("default.yaml").read_text()
        base = "."
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        base = os.path.dirname(os.path.abspath(path))
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({str(exc).splitlines()[0]})") from None
    if path == "default":
        base = os.getcwd()
    return from_dict(data or {}, base, check_files)
