"""
Comparison harness: {CE, CE+EntLoss} x {baseline_only, random_magnitude, entaugment}
over several seeds, aggregated into per-arm medians and mean/std.
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from entaug.config import AugmentationMode, RunConfig
from entaug.exceptions import InvalidInputError
from entaug.ingestion.loader import Dataset
from entaug.training.trainer import load_datasets, train

logger = logging.getLogger(__name__)

MIN_SEEDS = 3
OUTCOMES = ("final_test_accuracy", "final_train_empirical_ce", "final_mean_norm_entropy",
            "final_mean_magnitude", "test_dunn_index")

ENTROPY_RATIO = 0.9
CE_SLACK = 0.05
ACCURACY_SLACK = 0.002  # 0.2 percentage points


@dataclass(frozen=True)
class Arm:
    name: str
    use_ent_loss: bool
    aug_mode: AugmentationMode


def default_arms() -> List[Arm]:
    arms = []
    for use_ent_loss in (False, True):
        for mode in (AugmentationMode.BASELINE_ONLY, AugmentationMode.RANDOM_MAGNITUDE,
                     AugmentationMode.ENTAUGMENT):
            prefix = "entloss" if use_ent_loss else "ce"
            arms.append(Arm(f"{prefix}+{mode.value}", use_ent_loss, mode))
    return arms


@dataclass
class ComparisonReport:
    runs: pd.DataFrame
    summary: pd.DataFrame
    trajectories: pd.DataFrame
    claims: Dict[str, Optional[bool]]
    output_dir: str


def _median(summary: pd.DataFrame, arm: str, column: str) -> Optional[float]:
    if arm not in summary.index:
        return None
    return float(summary.loc[arm, (column, "median")])


def evaluate_claims(runs: pd.DataFrame, summary: pd.DataFrame,
                    trajectories: pd.DataFrame) -> Dict[str, Optional[bool]]:
    """Trend checks between arms; None when the arms a check needs were not run."""
    claims: Dict[str, Optional[bool]] = {}

    ce_h = _median(summary, "ce+entaugment", "final_mean_norm_entropy")
    ent_h = _median(summary, "entloss+entaugment", "final_mean_norm_entropy")
    if ce_h is None or ent_h is None:
        claims["entropy_effect"] = None
    else:
        ent_traj = trajectories[(trajectories.arm == "entloss+entaugment") & (trajectories.epoch == 1)]
        if len(ent_traj) == 0:
            # a single-epoch run has no magnitude trend to judge
            claims["entropy_effect"] = None
        else:
            final_mag = _median(summary, "entloss+entaugment", "final_mean_magnitude")
            rising = final_mag > float(ent_traj.mean_magnitude.median())
            claims["entropy_effect"] = ent_h <= ENTROPY_RATIO * ce_h and rising

    ce_ce = _median(summary, "ce+entaugment", "final_train_empirical_ce")
    ent_ce = _median(summary, "entloss+entaugment", "final_train_empirical_ce")
    claims["kl_proxy_ordering"] = None if ce_ce is None or ent_ce is None else ent_ce <= ce_ce + CE_SLACK

    adaptive = _median(summary, "ce+entaugment", "final_test_accuracy")
    control = _median(summary, "ce+random_magnitude", "final_test_accuracy")
    baseline = _median(summary, "ce+baseline_only", "final_test_accuracy")
    if None in (adaptive, control, baseline):
        claims["adaptivity_benefit"] = None
    else:
        claims["adaptivity_benefit"] = adaptive >= control - ACCURACY_SLACK and adaptive >= baseline

    best = runs[runs.arm == "entloss+entaugment"].set_index("seed").test_dunn_index
    plain = runs[runs.arm == "ce+baseline_only"].set_index("seed").test_dunn_index
    shared = best.index.intersection(plain.index)
    if len(shared) == 0:
        claims["dunn_ordering"] = None
    else:
        wins = int((best[shared].astype(float) > plain[shared].astype(float)).sum())
        claims["dunn_ordering"] = 3 * wins >= 2 * len(shared)
    return claims


def compare(cfg_base: RunConfig, seeds: Sequence[int], arms: Optional[Sequence[Arm]] = None,
            output_dir: Optional[str] = None) -> ComparisonReport:
    if len(seeds) < MIN_SEEDS:
        raise InvalidInputError(f"compare needs at least {MIN_SEEDS} seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise InvalidInputError("seeds must be distinct")
    arms = list(arms) if arms else default_arms()
    if len({arm.name for arm in arms}) != len(arms):
        raise InvalidInputError("arm names must be distinct")
    root = output_dir or cfg_base.output_dir
    os.makedirs(root, exist_ok=True)

    run_rows, trajectory_rows = [], []
    for seed in seeds:
        seed_cfg = cfg_base.with_updates(seed=seed)
        # the stratified subset depends on the seed only, so arms share it
        datasets: Tuple[Dataset, Dataset] = load_datasets(seed_cfg)
        for arm in arms:
            cfg = seed_cfg.with_updates(
                use_ent_loss=arm.use_ent_loss,
                aug_mode=arm.aug_mode.value,
                output_dir=os.path.join(root, arm.name, f"seed{seed}"),
            )
            logger.info(f"Running arm {arm.name} with seed {seed}")
            result = train(cfg, datasets)
            run_rows.append({"arm": arm.name, "use_ent_loss": arm.use_ent_loss,
                             "aug_mode": arm.aug_mode.value, "seed": seed, **result.summary})
            trajectory_rows.extend(
                {"arm": arm.name, "seed": seed, "epoch": r.epoch,
                 "mean_norm_entropy": r.mean_norm_entropy, "mean_magnitude": r.mean_magnitude}
                for r in result.records
            )

    runs = pd.DataFrame(run_rows)
    runs["test_dunn_index"] = pd.to_numeric(runs["test_dunn_index"], errors="coerce")
    summary = runs.groupby("arm", sort=False)[list(OUTCOMES)].agg(["median", "mean", "std"])
    trajectories = pd.DataFrame(trajectory_rows)
    claims = evaluate_claims(runs, summary, trajectories)

    runs.to_csv(os.path.join(root, "runs.csv"), index=False)
    summary.to_csv(os.path.join(root, "summary.csv"))
    trajectories.to_csv(os.path.join(root, "magnitude_trajectories.csv"), index=False)
    with open(os.path.join(root, "claims.json"), "w", encoding="utf-8") as f:
        json.dump(claims, f, indent=2)
    for name, verdict in claims.items():
        logger.info(f"{name}: {verdict}")
    return ComparisonReport(runs, summary, trajectories, claims, root)
