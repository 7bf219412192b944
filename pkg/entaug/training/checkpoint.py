"""
Checkpoint: network weights, optimizer velocity, epoch counter and the entropy cache
in one versioned .npz container.
"""
import json
import logging
import os
import stat
import zipfile
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from entaug.augmentation.cache import EntropyCache
from entaug.config import Config, RunConfig, run_config_from_flat
from entaug.exceptions import CheckpointError, EntAugError
from entaug.model.network import Network
from entaug.model.optimizer import SGD

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.npz"
FINAL_CHECKPOINT_NAME = "final.npz"

_WEIGHTS = "weights."
_CACHE = "cache."


@dataclass
class Checkpoint:
    format_version: int
    config: RunConfig
    epoch: int                     # last completed epoch
    weights: Dict[str, np.ndarray]
    velocity: Dict[str, np.ndarray]
    cache: Optional[EntropyCache]

    def restore(self, net: Network, optimizer: Optional[SGD] = None):
        try:
            net.load_state_arrays(self.weights)
            if optimizer is not None:
                optimizer.load_state_arrays(self.velocity)
        except EntAugError as e:
            raise CheckpointError(f"checkpoint does not fit the network: {e}") from e


def save_checkpoint(path: str, cfg: RunConfig, epoch: int, net: Network,
                    optimizer: Optional[SGD] = None, cache: Optional[EntropyCache] = None,
                    read_only: bool = False):
    arrays = {
        "format_version": np.array(Config.CHECKPOINT_VERSION, dtype=np.int64),
        "config_json": np.array(json.dumps(cfg.to_flat(), sort_keys=True)),
        "epoch": np.array(epoch, dtype=np.int64),
    }
    arrays.update({_WEIGHTS + k: v for k, v in net.state_arrays().items()})
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    if cache is not None:
        arrays.update({_CACHE + k: v for k, v in cache.to_arrays().items()})

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if read_only and os.path.exists(path):
        logger.warning(f"Overwriting final checkpoint {path}")
    tmp_path = path + ".tmp"
    with open(tmp_path, "wb") as f:
        np.savez(f, **arrays)
    os.replace(tmp_path, path)
    if read_only:
        os.chmod(path, stat.S_IRUSR | stat.S_IRGRP | stat.S_IROTH)
    logger.debug(f"Saved checkpoint for epoch {epoch} to {path}")


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.isfile(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e

    for key in ("format_version", "config_json", "epoch"):
        if key not in arrays:
            raise CheckpointError(f"{path}: missing entry '{key}'")
    version = int(arrays["format_version"])
    if version != Config.CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {Config.CHECKPOINT_VERSION}")

    cache_arrays = {k[len(_CACHE):]: v for k, v in arrays.items() if k.startswith(_CACHE)}
    return Checkpoint(
        format_version=version,
        config=run_config_from_flat(json.loads(str(arrays["config_json"]))),
        epoch=int(arrays["epoch"]),
        weights={k[len(_WEIGHTS):]: v for k, v in arrays.items() if k.startswith(_WEIGHTS)},
        velocity={k: v for k, v in arrays.items() if k.startswith("velocity.")},
        cache=EntropyCache.from_arrays(cache_arrays) if cache_arrays else None,
    )


def checkpoints_equal(path_a: str, path_b: str, ignore: Sequence[str] = ()) -> bool:
    """Equal when every stored array is equal (the zip container itself carries timestamps)."""
    with np.load(path_a, allow_pickle=False) as a, np.load(path_b, allow_pickle=False) as b:
        if sorted(a.files) != sorted(b.files):
            return False
        return all(np.array_equal(a[name], b[name]) for name in a.files if name not in ignore)
