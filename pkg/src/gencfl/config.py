"""Experiment configuration: nested dataclasses read from and written to YAML.

Unknown keys are rejected, missing keys take the documented defaults, and
``dump_config(load_config(path))`` yields the normalized form of ``path``.
Relative dataset paths resolve against the directory of the config file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .clustering import DbscanParams
from .hp import HpBounds, HyperParams

MODES = ("genetic_cfl", "generic_fl")


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    train_images: str = "data/mnist5k/train-images-idx3-ubyte.gz"
    train_labels: str = "data/mnist5k/train-labels-idx1-ubyte.gz"
    test_images: str = "data/mnist5k/t10k-images-idx3-ubyte.gz"
    test_labels: str = "data/mnist5k/t10k-labels-idx1-ubyte.gz"
    classes: int = 10
    server_fraction: float = 0.05
    min_shard: int = 200
    max_shard: int = 600
    skew: float = 0.5
    disjoint: bool = False


@dataclass
class PretrainConfig:
    epochs: int = 1
    lr: float = 1e-3
    batch_size: int = 32


@dataclass
class FederationConfig:
    n_clients_total: int = 100
    client_ratio: float = 0.1
    rounds: int = 10
    epochs_per_round: int = 1
    k_candidates: int = 3
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)


@dataclass
class BoundsConfig:
    lr_min: float = 1e-7
    lr_max: float = 1e-1
    bs_min: int = 16
    bs_max: int = 128


@dataclass
class ClusteringConfig:
    epsilon: float = 0.2
    min_pts: int = 2
    lr_only: bool = False


@dataclass
class GeneticConfig:
    elite_count: int = 2
    evolve: bool = True
    mutate_singletons: bool = True


@dataclass
class BaselineConfig:
    # null keeps each client's randomly sampled hyper-parameters
    fixed_lr: Optional[float] = None
    fixed_batch_size: Optional[int] = None


@dataclass
class SweepConfig:
    epsilons: list = field(default_factory=lambda: [0.2, 0.175, 0.15, 0.1])
    min_pts: list = field(default_factory=lambda: [1, 2])


@dataclass
class ExperimentConfig:
    seed: int = 0
    mode: str = "both"
    model: list = field(default_factory=lambda: [784, 64, 10])
    data: DataConfig = field(default_factory=DataConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    hp_bounds: BoundsConfig = field(default_factory=BoundsConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    genetic: GeneticConfig = field(default_factory=GeneticConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    base_dir: Optional[str] = field(default=None, metadata={"serialize": False})

    @property
    def n_active(self) -> int:
        fed = self.federation
        return int(round(fed.n_clients_total * fed.client_ratio))

    @property
    def bounds(self) -> HpBounds:
        b = self.hp_bounds
        return HpBounds(b.lr_min, b.lr_max, b.bs_min, b.bs_max)

    @property
    def dbscan(self) -> DbscanParams:
        return DbscanParams(self.clustering.epsilon, self.clustering.min_pts)

    @property
    def fixed_hp(self) -> Optional[HyperParams]:
        b = self.baseline
        if b.fixed_lr is None:
            return None
        return HyperParams(b.fixed_lr, b.fixed_batch_size or self.hp_bounds.bs_min)

    @property
    def modes(self) -> tuple[str, ...]:
        return MODES if self.mode == "both" else (self.mode,)

    def resolve(self, path: str) -> Path:
        p = Path(path).expanduser()
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def validate(self) -> "ExperimentConfig":
        try:
            self._validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return self

    def _validate(self):
        if self.mode not in MODES + ("both",):
            raise ConfigError(f"mode must be one of {MODES + ('both',)}, got {self.mode!r}")
        if len(self.model) < 2 or any(int(s) < 1 for s in self.model):
            raise ConfigError(f"model layer sizes must be >= 2 positive ints, got {self.model}")
        if self.model[-1] != self.data.classes:
            raise ConfigError("model output size must equal data.classes")
        d, fed = self.data, self.federation
        if not 0.0 <= d.skew <= 1.0:
            raise ConfigError("data.skew must lie in [0, 1]")
        if not 1 <= d.min_shard <= d.max_shard:
            raise ConfigError("need 1 <= data.min_shard <= data.max_shard")
        if not 0.0 <= d.server_fraction < 1.0:
            raise ConfigError("data.server_fraction must lie in [0, 1)")
        if fed.n_clients_total < 1:
            raise ConfigError("federation.n_clients_total must be positive")
        if not 0.0 < fed.client_ratio <= 1.0:
            raise ConfigError("federation.client_ratio must lie in (0, 1]")
        if self.n_active < 1:
            raise ConfigError("client_ratio * n_clients_total rounds to zero clients")
        if fed.rounds < 0:
            raise ConfigError("federation.rounds must be non-negative")
        if fed.epochs_per_round < 1 or fed.k_candidates < 1 or fed.pretrain.epochs < 0:
            raise ConfigError("epochs_per_round and k_candidates must be positive")
        if self.genetic.elite_count < 1:
            raise ConfigError("genetic.elite_count must be positive")
        if not self.sweep.epsilons or not self.sweep.min_pts:
            raise ConfigError("sweep needs non-empty epsilons and min_pts lists")
        # constructing these runs their own checks
        self.bounds, self.dbscan
        if self.fixed_hp is not None:
            if self.fixed_hp.lr <= 0 or self.fixed_hp.batch_size < 1:
                raise ConfigError("baseline fixed hyper-parameters must be positive")


def _from_dict(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.metadata.get("serialize", True)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        default = getattr(cls(), name)
        key = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, key)
        else:
            kwargs[name] = _coerce(value, default, key)
    return cls(**kwargs)


def _coerce(value, default, key):
    if value is None:
        if default is not None:
            raise ConfigError(f"{key} may not be null")
        return None
    if isinstance(value, str) and (isinstance(default, float) or default is None):
        # YAML 1.1 reads exponents without a dot, such as 1e-3, as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"{key} must be a number") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value) if isinstance(default, float) or isinstance(value, float) else value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    return value


def config_from_dict(raw: dict, base_dir=None) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, raw, "")
    cfg.base_dir = None if base_dir is None else str(base_dir)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(raw, base_dir=path.resolve().parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        if not f.metadata.get("serialize", True):
            continue
        value = getattr(cfg, f.name)
        out[f.name] = config_to_dict(value) if dataclasses.is_dataclass(value) else value
    return out


class _Dumper(yaml.SafeDumper):
    pass


# block mappings, but short lists stay on one line
_Dumper.add_representer(
    list, lambda d, v: d.represent_sequence("tag:yaml.org,2002:seq", v, flow_style=True))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.dump(config_to_dict(cfg), Dumper=_Dumper, sort_keys=False,
                     default_flow_style=False)


_EXAMPLE_HEADER = """\
# Example experiment configuration; every value shown is the default.
# Relative dataset paths are resolved against this file's directory.
#
# seed                    master seed; every random stream derives from it
# mode                    genetic_cfl | generic_fl | both
# model                   layer sizes: input, hidden..., classes
# data.server_fraction    share of training rows held by the server for pre-training
# data.min_shard/max_shard  per-client sample count bounds
# data.skew               0 = IID label mix, 1 = at most two labels per client
# data.disjoint           forbid overlap between client shards
# federation.client_ratio active share of the n_clients_total pool
# federation.k_candidates learning rates probed per client in the broadcast round
# federation.pretrain     server pre-training before the broadcast round
# hp_bounds               legal learning-rate and batch-size ranges
# clustering              DBSCAN epsilon / min_pts; lr_only drops the batch-size axis
# genetic.elite_count     best members copied unchanged into the next generation
# genetic.evolve          false freezes hyper-parameters after the broadcast round
# genetic.mutate_singletons  mutate the members of one-client clusters each round
# baseline.fixed_lr/fixed_batch_size  generic_fl uses one static setting for everyone
# sweep                   epsilon x min_pts grid for the `sweep` subcommand
"""


def example_config_text() -> str:
    return _EXAMPLE_HEADER + dump_config(ExperimentConfig())
