"""
Configuration: environment settings, typed run configuration and named presets.
"""
import os
import logging
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional

from dotenv import load_dotenv, dotenv_values
from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from entaug.exceptions import ConfigurationError

load_dotenv()
logger = logging.getLogger(__name__)


class Config:
    # Filesystem
    DATA_DIR = os.getenv("ENTAUG_DATA_DIR", "./data")
    OUTPUT_DIR = os.getenv("ENTAUG_OUTPUT_DIR", "./runs")

    # Logging
    LOG_LEVEL = os.getenv("ENTAUG_LOG_LEVEL", "INFO").upper()
    LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Per-sample augmentation workers (1 = strict serial mode)
    WORKERS = int(os.getenv("ENTAUG_WORKERS", 1))

    # Checkpoint container version
    CHECKPOINT_VERSION = 1


def resolve_data_dir(explicit: Optional[str] = None) -> str:
    """Explicit path wins, then ENTAUG_DATA_DIR as currently set, then the default."""
    if explicit:
        return explicit
    return os.getenv("ENTAUG_DATA_DIR", Config.DATA_DIR)


def configure_logging(level: Optional[str] = None):
    logging.basicConfig(
        level=(level or Config.LOG_LEVEL).upper(),
        format=Config.LOG_FORMAT,
    )


class SignMode(str, Enum):
    # +normalized entropy added to CE: descent lowers entropy
    ENTROPY_MINIMIZING = "entropy_minimizing"
    # sum(p log p) / log k exactly as printed, i.e. negative normalized entropy
    NEGATIVE_ENTROPY = "negative_entropy"


class Schedule(str, Enum):
    COSINE = "cosine"
    MULTISTEP = "multistep"


class AugmentationMode(str, Enum):
    NONE = "none"
    BASELINE_ONLY = "baseline_only"
    RANDOM_MAGNITUDE = "random_magnitude"
    ENTAUGMENT = "entaugment"


class EntropySource(str, Enum):
    CACHED = "cached"
    FRESH = "fresh"


DATASETS = ("mnist", "cifar10", "cifar100", "synthetic")
ARCHITECTURES = ("tiny-cnn", "mlp")
PADDINGS = ("zero", "reflect")


def _split_int_list(value: Any) -> Any:
    if isinstance(value, str):
        return [int(v) for v in value.replace(";", ",").split(",") if v.strip()]
    return value


class LossConfig(BaseModel):
    use_ent_loss: bool = False
    ent_lambda: float = 1.0
    sign_mode: SignMode = SignMode.ENTROPY_MINIMIZING

    class Config:
        extra = "forbid"

    @validator("ent_lambda")
    def _lambda_non_negative(cls, v):
        if v < 0:
            raise ValueError("ent_lambda must be >= 0")
        return v


class OptimizerConfig(BaseModel):
    lr0: float = 0.05
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 5e-4
    schedule: Schedule = Schedule.COSINE
    total_epochs: Optional[int] = None
    milestones: List[int] = []
    gamma: float = 0.2

    class Config:
        extra = "forbid"

    _milestones_from_text = validator("milestones", pre=True, allow_reuse=True)(_split_int_list)

    @validator("lr0")
    def _lr_non_negative(cls, v):
        if v < 0:
            raise ValueError("lr0 must be >= 0")
        return v

    @validator("momentum")
    def _momentum_range(cls, v):
        if not 0 <= v < 1:
            raise ValueError("momentum must lie in [0, 1)")
        return v

    @validator("weight_decay")
    def _wd_non_negative(cls, v):
        if v < 0:
            raise ValueError("weight_decay must be >= 0")
        return v

    @validator("total_epochs")
    def _total_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError("total_epochs must be >= 1")
        return v

    @root_validator(skip_on_failure=True)
    def _schedule_consistent(cls, values):
        if values["schedule"] == Schedule.MULTISTEP and not values["milestones"]:
            raise ValueError("multistep schedule needs at least one milestone")
        values["milestones"] = sorted(values["milestones"])
        return values


class RunConfig(BaseModel):
    dataset: str = "mnist"
    data_dir: Optional[str] = None
    subset_size: Optional[int] = 10000
    synthetic_samples: int = 512
    synthetic_classes: int = 2
    synthetic_image_size: int = 12
    arch: str = "tiny-cnn"
    hidden_dim: int = 128
    epochs: int = 20
    batch_size: int = 128
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    aug_mode: AugmentationMode = AugmentationMode.ENTAUGMENT
    entropy_source: EntropySource = EntropySource.CACHED
    seed: int = 0
    output_dir: str = os.path.join(Config.OUTPUT_DIR, "default")
    workers: int = Config.WORKERS
    padding: str = "zero"
    fill: int = 128
    baseline_flip: bool = True
    record_timing: bool = True
    progress: bool = True
    resume: bool = False

    class Config:
        extra = "forbid"

    @validator("dataset")
    def _known_dataset(cls, v):
        if v not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}")
        return v

    @validator("arch")
    def _known_arch(cls, v):
        if v not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}")
        return v

    @validator("padding")
    def _known_padding(cls, v):
        if v not in PADDINGS:
            raise ValueError(f"padding must be one of {PADDINGS}")
        return v

    @validator("epochs", "batch_size", "workers", "hidden_dim", "synthetic_samples")
    def _at_least_one(cls, v, field):
        if v < 1:
            raise ValueError(f"{field.name} must be >= 1")
        return v

    @validator("synthetic_classes")
    def _two_classes(cls, v):
        if v < 2:
            raise ValueError("synthetic_classes must be >= 2")
        return v

    @validator("subset_size")
    def _subset_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError("subset_size must be >= 1")
        return v

    @validator("seed")
    def _seed_non_negative(cls, v):
        if v < 0:
            raise ValueError("seed must be >= 0")
        return v

    @validator("fill")
    def _fill_byte(cls, v):
        if not 0 <= v <= 255:
            raise ValueError("fill must be a byte value")
        return v

    @root_validator(skip_on_failure=True)
    def _cosine_horizon(cls, values):
        opt = values["optimizer"]
        if opt.total_epochs is None:
            values["optimizer"] = opt.copy(update={"total_epochs": values["epochs"]})
        if (values["entropy_source"] == EntropySource.FRESH
                and values["aug_mode"] != AugmentationMode.ENTAUGMENT):
            logger.warning("entropy_source=fresh only matters with aug_mode=entaugment")
        return values

    def to_flat(self) -> Dict[str, Any]:
        flat = self.dict(exclude={"optimizer", "loss"})
        flat.update(self.optimizer.dict())
        flat.update(self.loss.dict())
        return {k: (v.value if isinstance(v, Enum) else v) for k, v in flat.items()}

    def with_updates(self, **flat_updates: Any) -> "RunConfig":
        values = self.to_flat()
        # A cosine horizon that merely tracked `epochs` keeps tracking it
        if ("epochs" in flat_updates and "total_epochs" not in flat_updates
                and values["total_epochs"] == values["epochs"]):
            values["total_epochs"] = None
        values.update(flat_updates)
        return run_config_from_flat(values)


_OPTIMIZER_KEYS = set(OptimizerConfig.__fields__)
_LOSS_KEYS = set(LossConfig.__fields__)
_RUN_KEYS = set(RunConfig.__fields__) - {"optimizer", "loss"}


# Flat key=value presets; later layers (file, CLI) override these
PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {
        "dataset": "mnist", "subset_size": 10000, "arch": "tiny-cnn", "epochs": 20,
        "batch_size": 128, "lr0": 0.05, "momentum": 0.9, "weight_decay": 5e-4,
        "schedule": "cosine",
    },
    "reference": {
        "dataset": "cifar10", "subset_size": None, "arch": "tiny-cnn", "epochs": 300,
        "batch_size": 256, "lr0": 0.1, "momentum": 0.9, "weight_decay": 5e-4,
        "schedule": "cosine",
    },
    "convergence": {
        "dataset": "cifar10", "subset_size": None, "arch": "tiny-cnn", "epochs": 300,
        "batch_size": 256, "lr0": 0.1, "momentum": 0.9, "weight_decay": 5e-4,
        "schedule": "multistep", "milestones": "60,120,160,220,280", "gamma": 0.2,
    },
    "shake": {
        "dataset": "cifar10", "subset_size": None, "arch": "tiny-cnn", "epochs": 1800,
        "batch_size": 256, "lr0": 0.1, "momentum": 0.9, "nesterov": True,
        "weight_decay": 1e-3, "schedule": "cosine",
    },
}
DEFAULT_PRESET = "desk"


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def run_config_from_flat(values: Mapping[str, Any]) -> RunConfig:
    top: Dict[str, Any] = {}
    opt: Dict[str, Any] = {}
    loss: Dict[str, Any] = {}
    for raw_key, value in values.items():
        key = _normalize_key(raw_key)
        if key in _OPTIMIZER_KEYS:
            opt[key] = value
        elif key in _LOSS_KEYS:
            loss[key] = value
        elif key in _RUN_KEYS:
            top[key] = value
        else:
            raise ConfigurationError(f"unknown configuration key '{raw_key}'")
    # Empty strings in key=value files mean "unset"
    top = {k: (None if v == "" else v) for k, v in top.items()}
    try:
        return RunConfig(**top, optimizer=OptimizerConfig(**opt), loss=LossConfig(**loss))
    except ValidationError as e:
        raise ConfigurationError(str(e)) from e


def load_config_file(path: str) -> Dict[str, Optional[str]]:
    """Read a flat key=value file (dotenv syntax: comments, quotes, blank lines)."""
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    return dict(dotenv_values(path))


def build_run_config(
    preset: str = DEFAULT_PRESET,
    config_file: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
    flat: Dict[str, Any] = dict(PRESETS[preset])
    if config_file:
        flat.update({_normalize_key(k): v for k, v in load_config_file(config_file).items()})
    if overrides:
        flat.update({_normalize_key(k): v for k, v in overrides.items() if v is not None})
    logger.debug(f"Resolved run config from preset={preset} file={config_file}")
    return run_config_from_flat(flat)
