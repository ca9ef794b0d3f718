"""YAML-backed scenario configuration and run manifests.

One ScenarioConfig drives everything: intersection geometry and bounds,
demand synthesis, reward weights, network dims, training schedule, and
evaluation settings. Files round-trip exactly through to_dict/from_dict.
"""
from __future__ import annotations

import dataclasses
import datetime
import json
import re
from dataclasses import dataclass, field

import numpy as np
import yaml

from .env import RewardWeights
from .errors import ConfigError
from .flows import DEFAULT_MIX, build_training_patterns
from .policy import PolicyDims
from .sim import N_MOVEMENTS, Bounds, FlowProfile
from .teachers import TeacherKind
from .trainer import CurriculumStage, TrainConfig
from .evaluate import default_eval_profile

ALLOWED_WINDOWS_S = (300, 900)


@dataclass
class EvalSettings:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    bins: int = 12
    n_levels: int = 12
    low_frac: float = 0.07
    high_frac: float = 0.88
    dwell_s: int = 600


@dataclass
class ScenarioConfig:
    capacity_vph: float = 450.0          # per movement
    present: tuple[int, ...] = (1,) * N_MOVEMENTS
    mix: tuple[float, ...] = DEFAULT_MIX
    episode_s: int = 7200
    bin_s: int = 300
    observation_window_s: int = 300
    min_green_s: int = 10
    max_green_s: int = 90
    min_cycle_s: int = 60
    max_cycle_s: int = 180
    lost_time_s: int = 4
    initial_durations: tuple[int, int, int, int] = (25, 25, 25, 25)
    throughput_weight: float = 0.04
    queue_weight: float = -0.001
    green_util_weight: float = 1.0
    green_imbalance_weight: float = -1.0
    stage_fractions: tuple[float, ...] = (0.18, 0.5, 0.85)
    stage_s: int = 2400
    n_patterns: int = 140
    pattern_seed: int = 100
    noise_sigma: float = 0.15
    max_shift_bins: int = 1
    model: PolicyDims = field(default_factory=PolicyDims)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self):
        if self.observation_window_s not in ALLOWED_WINDOWS_S:
            raise ConfigError(
                f"observation_window_s must be one of {ALLOWED_WINDOWS_S}, "
                f"got {self.observation_window_s}"
            )
        if len(self.present) != N_MOVEMENTS or any(p not in (0, 1) for p in self.present):
            raise ConfigError(f"present must be {N_MOVEMENTS} zero/one flags")
        if self.episode_s % self.bin_s != 0:
            raise ConfigError("episode_s must be a multiple of bin_s")
        if self.stage_s % self.bin_s != 0:
            raise ConfigError("stage_s must be a multiple of bin_s")
        if len(self.stage_fractions) * self.stage_s != self.episode_s:
            raise ConfigError(
                f"{len(self.stage_fractions)} stages of {self.stage_s}s "
                f"do not fill an episode of {self.episode_s}s"
            )
        self.bounds()  # validates the four bound fields

    # -- derived objects --------------------------------------------------

    def bounds(self) -> Bounds:
        return Bounds(self.min_green_s, self.max_green_s, self.min_cycle_s, self.max_cycle_s)

    def weights(self) -> RewardWeights:
        return RewardWeights(
            throughput=self.throughput_weight,
            queue=self.queue_weight,
            green_util=self.green_util_weight,
            green_imbalance=self.green_imbalance_weight,
        )

    def present_array(self) -> np.ndarray:
        return np.asarray(self.present, dtype=bool)

    def total_capacity_vph(self) -> float:
        return float(self.capacity_vph * sum(self.present))

    def build_patterns(self) -> list:
        return build_training_patterns(
            self.total_capacity_vph(),
            self.n_patterns,
            self.pattern_seed,
            fractions=self.stage_fractions,
            stage_s=self.stage_s,
            bin_s=self.bin_s,
            noise_sigma=self.noise_sigma,
            max_shift_bins=self.max_shift_bins,
            mix=self.mix,
            present=self.present_array(),
        )

    def eval_profile(self) -> FlowProfile:
        return default_eval_profile(
            self.total_capacity_vph(),
            n_levels=self.eval.n_levels,
            low_frac=self.eval.low_frac,
            high_frac=self.eval.high_frac,
            dwell_s=self.eval.dwell_s,
            mix=self.mix,
            present=self.present_array(),
        )

    def env_kwargs(self) -> dict:
        return {
            "initial_durations": self.initial_durations,
            "lost_time": self.lost_time_s,
            "capacity_vph": self.capacity_vph,
            "present": self.present_array(),
            "observation_window_s": self.observation_window_s,
            "weights": self.weights(),
        }


# -- serialization --------------------------------------------------------


def _curriculum_to_list(stages) -> list[dict]:
    return [
        {"teacher": s.teacher.name.lower(), "episodes": s.episodes} for s in stages
    ]


def _curriculum_from_list(items) -> tuple[CurriculumStage, ...]:
    stages = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or set(item) - {"teacher", "episodes"}:
            raise ConfigError(f"curriculum entry {i}: expected teacher/episodes keys")
        try:
            kind = TeacherKind[str(item["teacher"]).upper()]
        except KeyError:
            raise ConfigError(f"curriculum entry {i}: unknown teacher {item['teacher']!r}")
        episodes = item.get("episodes")
        stages.append(CurriculumStage(kind, None if episodes is None else int(episodes)))
    return tuple(stages)


def to_dict(cfg: ScenarioConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["train"]["curriculum"] = _curriculum_to_list(cfg.train.curriculum)
    # YAML-friendly: tuples become lists
    def listify(obj):
        if isinstance(obj, tuple):
            return [listify(x) for x in obj]
        if isinstance(obj, list):
            return [listify(x) for x in obj]
        if isinstance(obj, dict):
            return {k: listify(v) for k, v in obj.items()}
        return obj

    return listify(out)


# YAML 1.1 reads bare scientific notation like 5e-4 as a string, so
# numeric-typed fields coerce number-shaped strings themselves
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _coerce_numbers(cls, data: dict) -> dict:
    types = {}
    for f in dataclasses.fields(cls):
        t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
        types[f.name] = t
    out = {}
    for key, value in data.items():
        t = types.get(key, "")
        if isinstance(value, str) and _NUMBER_RE.match(value):
            if "float" in t:
                value = float(value)
            elif "int" in t:
                value = int(float(value))
        out[key] = value
    return out


def _build_section(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {path} keys: {sorted(unknown)}")
    return cls(**_coerce_numbers(cls, data))


def from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    data = dict(data)
    model = data.pop("model", {}) or {}
    train = dict(data.pop("train", {}) or {})
    eval_ = dict(data.pop("eval", {}) or {})
    if "curriculum" in train:
        train["curriculum"] = _curriculum_from_list(train["curriculum"])

    tuple_fields = {
        "present", "mix", "initial_durations", "stage_fractions",
    }
    for key in tuple_fields & set(data):
        data[key] = tuple(data[key])
    if "seeds" in eval_:
        eval_["seeds"] = tuple(eval_["seeds"])

    names = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"model", "train", "eval"}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ScenarioConfig(
            model=_build_section(PolicyDims, model, "model"),
            train=_build_section(TrainConfig, train, "train"),
            eval=_build_section(EvalSettings, eval_, "eval"),
            **_coerce_numbers(ScenarioConfig, data),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        data = {}
    return from_dict(data)


def save_config(path, cfg: ScenarioConfig) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=False)


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply key=value strings with dotted paths, e.g. train.lr=1e-3.

    Values parse as YAML, so lists and nulls work. The rebuilt config is
    revalidated from scratch.
    """
    data = to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: bad value: {exc}") from exc
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {item!r}: no such section {part!r}")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"override {item!r}: no such key {leaf!r}")
        node[leaf] = value
    return from_dict(data)


# -- run manifests --------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    started: str
    finished: str = ""
    version: str = ""
    overrides: list[str] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)

    @classmethod
    def begin(cls, command: str, cfg: ScenarioConfig, seed: int, overrides=()) -> "RunManifest":
        from . import __version__

        return cls(
            command=command,
            seed=seed,
            config=to_dict(cfg),
            started=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            version=__version__,
            overrides=list(overrides),
        )

    def finish(self) -> None:
        self.finished = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def add_artifact(self, path) -> None:
        self.artifacts.append(str(path))

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2)
            fh.write("\n")
