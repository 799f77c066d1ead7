"""Synthetic rating data laid out like the public corporate-rating CSV."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from credscore.ingest import AGENCIES
from credscore.targets import SP_GRADES

NUMERIC = [
    "Current Ratio",
    "Long-term Debt / Capital",
    "Debt/Equity Ratio",
    "Operating Margin",
    "ROE - Return On Equity",
    "Net Profit Margin",
]
SECTORS = ["Energy", "Finance", "Health", "Retail", "Tech", "Utilities"]


def schema_dict(numeric=NUMERIC) -> dict:
    return {
        "firm_id_col": "Corporation",
        "agency_col": "Rating Agency",
        "rating_col": "Rating",
        "date_col": "Rating Date",
        "numeric_feature_cols": list(numeric),
        "categorical_feature_cols": ["Sector"],
        "date_format": "%Y-%m-%d",
    }


def write_dataset(path, agencies=AGENCIES[:2], years=range(2010, 2015), firms=60, seed=0, missing=0.03) -> Path:
    """One row per (agency, firm, year); rating driven by a latent quality score."""
    rng = np.random.default_rng(seed)
    path = Path(path)
    header = ["Rating Agency", "Corporation", "Rating", "Rating Date", "Binary Rating", "Sector"] + NUMERIC
    rows = []
    firm_q = rng.normal(size=firms)
    sector = rng.choice(SECTORS, size=firms)
    for agency in agencies:
        for f in range(firms):
            for year in years:
                q = firm_q[f] + 0.3 * rng.normal()
                feats = {
                    "Current Ratio": np.exp(0.3 * q + 0.3 * rng.normal()),
                    "Long-term Debt / Capital": 1 / (1 + np.exp(q + 0.5 * rng.normal())),
                    "Debt/Equity Ratio": np.exp(-0.5 * q + 0.4 * rng.normal()),
                    "Operating Margin": 10 + 8 * q + 4 * rng.normal(),
                    "ROE - Return On Equity": 12 + 6 * q + 6 * rng.normal(),
                    "Net Profit Margin": rng.normal(5, 3),
                }
                score = q + 0.5 * rng.normal()
                grade = int(np.clip(np.round(9 - 3 * score), 0, len(SP_GRADES) - 2))
                rating = SP_GRADES[grade]
                cells = []
                for c in NUMERIC:
                    cells.append("" if rng.uniform() < missing else f"{feats[c]:.6g}")
                month = int(rng.integers(1, 13))
                day = int(rng.integers(1, 28))
                rows.append([agency, f"Firm {f:03d}", rating, f"{year}-{month:02d}-{day:02d}", str(int(grade <= 9)), sector[f]] + cells)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_run_files(tmp, **kw) -> tuple:
    """Data, schema and a small RunConfig in ``tmp``; returns the config path."""
    tmp = Path(tmp)
    data = write_dataset(tmp / "ratings.csv", **{k: v for k, v in kw.items() if k in ("agencies", "years", "firms", "seed", "missing")})
    (tmp / "schema.json").write_text(json.dumps(schema_dict()))
    cfg = {
        "data_path": "ratings.csv",
        "schema_path": "schema.json",
        "out_dir": "out",
        "agencies": list(kw.get("agencies", AGENCIES[:2])),
        "k": kw.get("k", 5),
        "trials": kw.get("trials", 3),
        "n_startup": 2,
        "max_iterations": 20,
        "default_iterations": 20,
        "early_stopping_rounds": 5,
        "bootstrap_resamples": 120,
        "permutation_repeats": 2,
        "target": kw.get("target", "both"),
        "presets": kw.get("presets", ["symmetric", "leafwise", "depthwise"]),
    }
    cfg.update(kw.get("extra", {}))
    (tmp / "config.json").write_text(json.dumps(cfg))
    return tmp / "config.json", data
