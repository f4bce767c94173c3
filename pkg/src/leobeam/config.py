"""One canonical run configuration: parsing, validation, canonical hashing.

Every knob the underlying study leaves open is an explicit field here with a
default, so a dumped config is a complete audit trail of the run. The config
hash is the 64-bit FNV-1a of the canonical (sorted-key) YAML text.
"""

import copy
from dataclasses import asdict, dataclass, field

import yaml

from .channel import ChannelParams
from .errors import ConfigError
from .federated import FLConfig
from .geometry import ConstellationConfig
from .seeding import fnv1a_64


@dataclass
class UeConfig:
    count: int = 50
    lat_range: list = field(default_factory=lambda: [35.0, 55.0])
    lon_range: list = field(default_factory=lambda: [0.0, 30.0])
    altitude_m: float = 0.0

    def validate(self):
        if self.count < 1:
            raise ConfigError(f"ue.count={self.count} (need >= 1)")
        if not -90 <= self.lat_range[0] <= self.lat_range[1] <= 90:
            raise ConfigError(f"ue.lat_range={self.lat_range} invalid")


@dataclass
class CodebookConfig:
    n_az: int = 4
    n_el: int = 4
    fov_az_deg: float = 100.0
    fov_el_deg: float = 100.0
    element_spacing_wl: float = 0.5
    n_elem_x: int = 4
    n_elem_y: int = 4

    def validate(self):
        if self.n_az < 1 or self.n_el < 1:
            raise ConfigError(f"codebook grid {self.n_az}x{self.n_el} invalid")


@dataclass
class DatasetConfig:
    test_fraction: float = 0.2

    def validate(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"dataset.test_fraction={self.test_fraction} not in (0, 1)")


@dataclass
class ModelConfig:
    kind: str = "mlp"
    mlp_hidden: list = field(default_factory=lambda: [64, 64])
    gnn_hidden: list = field(default_factory=lambda: [32, 32])

    def validate(self):
        if self.kind not in ("mlp", "gnn"):
            raise ConfigError(f"model.kind={self.kind!r} not one of mlp/gnn")


@dataclass
class PathsConfig:
    out_dir: str = "runs"
    dataset: str = "dataset.csv"
    checkpoints_dir: str = "checkpoints"
    reports_dir: str = "reports"

    def validate(self):
        for name in ("out_dir", "dataset", "checkpoints_dir", "reports_dir"):
            if not getattr(self, name):
                raise ConfigError(f"paths.{name} must be non-empty")


@dataclass
class RunConfig:
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    ue: UeConfig = field(default_factory=UeConfig)
    theta_min_deg: float = 10.0
    codebook: CodebookConfig = field(default_factory=CodebookConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    fl: FLConfig = field(default_factory=FLConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    master_seed: int = 20260811

    def validate(self):
        errors = []
        for name in ("ue", "codebook", "dataset", "fl", "model", "paths"):
            try:
                getattr(self, name).validate()
            except ConfigError as exc:
                errors.append(str(exc))
        try:
            self.constellation.validate()
        except ConfigError as exc:
            errors.append(str(exc))
        if not -90.0 < self.theta_min_deg < 90.0:
            errors.append(f"theta_min_deg={self.theta_min_deg} outside (-90, 90)")
        if errors:
            raise ConfigError("; ".join(errors))
        return self


def _plain(value):
    """Recursively coerce to YAML-safe builtins."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return value.item()
    return value


def to_dict(cfg: RunConfig) -> dict:
    return _plain(asdict(cfg))


def from_dict(data: dict) -> RunConfig:
    data = copy.deepcopy(data)
    try:
        cfg = RunConfig(
            constellation=ConstellationConfig(**data.pop("constellation", {})),
            ue=UeConfig(**data.pop("ue", {})),
            codebook=CodebookConfig(**data.pop("codebook", {})),
            channel=ChannelParams(**data.pop("channel", {})),
            dataset=DatasetConfig(**data.pop("dataset", {})),
            fl=FLConfig(**data.pop("fl", {})),
            model=ModelConfig(**data.pop("model", {})),
            paths=PathsConfig(**data.pop("paths", {})),
            **data,
        )
    except TypeError as exc:
        raise ConfigError(f"unknown or missing config field: {exc}") from exc
    return cfg.validate()


def canonical_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True, default_flow_style=False)


def config_hash(cfg: RunConfig) -> str:
    return f"{fnv1a_64(canonical_yaml(cfg).encode('utf-8')):016x}"


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return from_dict(data)


def save_config(cfg: RunConfig, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_yaml(cfg))
