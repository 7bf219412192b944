"""
Export of per-epoch run records to CSV or JSON.
"""
import json
import logging
import os
from dataclasses import asdict
from typing import List, Sequence

import pandas as pd

from entaug.evaluation.metrics import RECORD_FIELDS, RunRecord
from entaug.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=list(RECORD_FIELDS))


def export(records: Sequence[RunRecord], path: str, fmt: str = "csv"):
    """One row per epoch, columns in RunRecord field order, UTF-8."""
    if fmt not in FORMATS:
        raise InvalidInputError(f"export format must be one of {FORMATS}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    if fmt == "csv":
        records_frame(records).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    else:
        with open(path, "w", encoding="utf-8") as f:
            json.dump([asdict(r) for r in records], f, indent=2)
    logger.debug(f"Wrote {len(records)} records to {path}")


def load_records(path: str) -> List[RunRecord]:
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as f:
            rows = json.load(f)
    else:
        rows = pd.read_csv(path, float_precision="round_trip").to_dict(orient="records")
    return [
        RunRecord(**{name: (int(row[name]) if name == "epoch" else float(row[name])) for name in RECORD_FIELDS})
        for row in rows
    ]
