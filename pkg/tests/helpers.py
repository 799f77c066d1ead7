"""Builders for small in-memory observation sets."""

from __future__ import annotations

import datetime as dt

import numpy as np
import pandas as pd

from credscore.ingest import ObservationSet


def make_obs(numeric: dict, categorical: dict | None = None, firms=None, years=None, agency="Fitch Ratings", ratings=None) -> ObservationSet:
    categorical = categorical or {}
    n = len(next(iter({**numeric, **categorical}.values())))
    firms = firms if firms is not None else [f"f{i}" for i in range(n)]
    years = years if years is not None else [2010] * n
    ratings = ratings if ratings is not None else ["A"] * n
    frame = pd.DataFrame(
        {
            "firm_id": firms,
            "agency": [agency] * n,
            "rating": ratings,
            "period": [dt.date(int(y), 6, 30) for y in years],
            "rating_known": [True] * n,
        }
    )
    for k, v in numeric.items():
        frame[k] = np.asarray(v, dtype=float)
    for k, v in categorical.items():
        frame[k] = pd.Series(v, dtype=object)
    return ObservationSet(frame, list(numeric), list(categorical))
