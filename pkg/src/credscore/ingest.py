"""Loading the ratings table, binding a column schema, and exploratory statistics."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._utils import sha256_hex
from .targets import DEFAULT_SCALE, normalize_rating

AGENCIES = (
    "Moody's Investors Service",
    "Fitch Ratings",
    "Standard & Poor's Ratings Services",
    "Egan-Jones Ratings Company",
)
MISSING_SENTINELS = frozenset({"", "na", "nan", "null"})
KEY_COLUMNS = ("firm_id", "agency", "rating", "period")


@dataclass(frozen=True)
class RawTable:
    header: list
    rows: list
    source_path: str
    content_hash: str

    def __len__(self):
        return len(self.rows)


@dataclass
class SchemaMap:
    firm_id_col: str
    agency_col: str
    rating_col: str
    date_col: str
    numeric_feature_cols: list
    categorical_feature_cols: list = field(default_factory=list)
    date_format: str = "%Y-%m-%d"

    @classmethod
    def from_json(cls, path) -> "SchemaMap":
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        return cls(**cfg)

    def roles(self) -> dict:
        pairs = [
            (self.firm_id_col, "firm_id"),
            (self.agency_col, "agency"),
            (self.rating_col, "rating"),
            (self.date_col, "date"),
        ]
        pairs += [(c, "numeric") for c in self.numeric_feature_cols]
        pairs += [(c, "categorical") for c in self.categorical_feature_cols]
        out = {}
        for col, role in pairs:
            if col in out:
                raise ValueError(f"column {col!r} assigned two roles: {out[col]} and {role}")
            out[col] = role
        return out


@dataclass
class ObservationSet:
    """Typed firm-period records.

    ``frame`` holds one row per record with the key columns ``firm_id``, ``agency``,
    ``rating``, ``period`` and ``rating_known`` followed by the feature columns. Its index
    is the zero-based row number in the source file and is carried through every
    downstream filter, so audit entries always point back at raw rows.
    """

    frame: pd.DataFrame
    numeric: list
    categorical: list

    def __len__(self):
        return len(self.frame)

    @property
    def features(self) -> list:
        return list(self.numeric) + list(self.categorical)

    def subset(self, index) -> "ObservationSet":
        return ObservationSet(self.frame.loc[index], list(self.numeric), list(self.categorical))

    def for_agency(self, agency: str) -> "ObservationSet":
        return self.subset(self.frame.index[self.frame["agency"] == agency])

    def copy(self) -> "ObservationSet":
        return ObservationSet(self.frame.copy(), list(self.numeric), list(self.categorical))


@dataclass
class FeatureStats:
    n: int
    mean: float | None
    median: float | None
    std: float | None
    skewness: float | None
    q01: float | None
    q99: float | None
    missing_fraction: float


@dataclass
class SummaryReport:
    n_obs: int
    n_firms: int
    n_agencies: int
    time_span: tuple
    n_numeric: int
    n_categorical: int
    features: dict
    overall_missing_fraction: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["time_span"] = [str(t) if t is not None else None for t in self.time_span]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        span = " to ".join(str(t.year) if t is not None else "?" for t in self.time_span)
        head = [
            ("Total observations", f"{self.n_obs:,}"),
            ("Unique firms", f"{self.n_firms:,}"),
            ("Rating agencies", str(self.n_agencies)),
            ("Time span", span),
            ("Numerical features", str(self.n_numeric)),
            ("Categorical features", str(self.n_categorical)),
            ("Percentage missing overall", f"{100 * self.overall_missing_fraction:.1f} percent"),
        ]
        width = max(len(k) for k, _ in head)
        lines = [f"{'Statistic':<{width}}  Value", "-" * (width + 20)]
        lines += [f"{k:<{width}}  {v}" for k, v in head]
        lines.append("")
        cols = ("mean", "median", "std", "skewness", "q01", "q99", "missing_fraction")
        fw = max([len(f) for f in self.features] + [7])
        lines.append(f"{'feature':<{fw}}  " + "  ".join(f"{c:>12}" for c in cols))
        for name, st in self.features.items():
            cells = []
            for c in cols:
                v = st[c] if isinstance(st, dict) else getattr(st, c)
                cells.append(f"{'undefined':>12}" if v is None else f"{v:>12.4g}")
            lines.append(f"{name:<{fw}}  " + "  ".join(cells))
        return "\n".join(lines) + "\n"


def load_table(path, delimiter: str = ",") -> RawTable:
    """Read a delimiter-separated UTF-8 file whose first record is the header."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not data.strip():
        raise ValueError(f"{path} is empty")
    text = data.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delimiter)
    records = [r for r in reader if r]
    header = [h.strip() for h in records[0]]
    rows = records[1:]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(
                f"ragged row {i + 1}: expected {len(header)} cells, found {len(row)}"
            )
    return RawTable(header=header, rows=rows, source_path=str(path), content_hash=sha256_hex(data))


def _parse_number(cell: str, row: int, col: str) -> float:
    s = cell.strip()
    if s.lower() in MISSING_SENTINELS:
        return math.nan
    try:
        return float(s.replace(",", ""))
    except ValueError:
        raise ValueError(f"row {row}: column {col!r} has non-numeric value {cell!r}") from None


def _parse_category(cell: str):
    s = cell.strip()
    return None if s.lower() in MISSING_SENTINELS else s


def bind_schema(table: RawTable, schema: SchemaMap) -> ObservationSet:
    roles = schema.roles()
    missing = [c for c in roles if c not in table.header]
    if missing:
        raise KeyError(f"schema columns missing from table header: {missing}")
    pos = {c: table.header.index(c) for c in roles}

    cols = {k: [] for k in ("firm_id", "agency", "rating", "period", "rating_known")}
    numeric = {c: [] for c in schema.numeric_feature_cols}
    categorical = {c: [] for c in schema.categorical_feature_cols}
    for i, row in enumerate(table.rows, start=1):
        raw_date = row[pos[schema.date_col]].strip()
        try:
            period = dt.datetime.strptime(raw_date, schema.date_format).date()
        except ValueError:
            raise ValueError(f"row {i}: unparseable date {raw_date!r} (format {schema.date_format!r})") from None
        rating = normalize_rating(row[pos[schema.rating_col]])
        cols["firm_id"].append(row[pos[schema.firm_id_col]].strip())
        cols["agency"].append(row[pos[schema.agency_col]].strip())
        cols["rating"].append(rating)
        cols["period"].append(period)
        cols["rating_known"].append(rating in DEFAULT_SCALE.index)
        for c in schema.numeric_feature_cols:
            numeric[c].append(_parse_number(row[pos[c]], i, c))
        for c in schema.categorical_feature_cols:
            categorical[c].append(_parse_category(row[pos[c]]))

    frame = pd.DataFrame(cols)
    for c, vals in numeric.items():
        frame[c] = np.asarray(vals, dtype=float)
    for c, vals in categorical.items():
        frame[c] = pd.Series(vals, dtype=object)
    return ObservationSet(frame, list(schema.numeric_feature_cols), list(schema.categorical_feature_cols))


def load_observations(data_path, schema: SchemaMap, delimiter: str = ",") -> tuple:
    table = load_table(data_path, delimiter)
    return bind_schema(table, schema), table.content_hash


def _skewness(x: np.ndarray) -> float | None:
    n = x.size
    if n < 3:
        return None
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        return 0.0
    g1 = np.mean(d**3) / m2**1.5
    return float(g1 * math.sqrt(n * (n - 1)) / (n - 2))


def feature_stats(values) -> FeatureStats:
    x = np.asarray(values, dtype=float)
    n_total = x.size
    obs = x[~np.isnan(x)]
    miss = 1.0 - obs.size / n_total if n_total else 0.0
    if obs.size == 0:
        return FeatureStats(0, None, None, None, None, None, None, miss)
    q01, med, q99 = np.quantile(obs, [0.01, 0.5, 0.99])
    return FeatureStats(
        n=int(obs.size),
        mean=float(obs.mean()),
        median=float(med),
        std=float(obs.std(ddof=1)) if obs.size > 1 else None,
        skewness=_skewness(obs),
        q01=float(q01),
        q99=float(q99),
        missing_fraction=float(miss),
    )


def summarize(obs: ObservationSet) -> SummaryReport:
    if len(obs) == 0:
        raise ValueError("cannot summarize an empty observation set")
    f = obs.frame
    stats = {c: asdict(feature_stats(f[c].to_numpy(dtype=float))) for c in obs.numeric}
    n_cells = len(f) * len(obs.features)
    n_missing = sum(int(f[c].isna().sum()) for c in obs.features)
    periods = f["period"]
    return SummaryReport(
        n_obs=len(f),
        n_firms=int(f["firm_id"].nunique()),
        n_agencies=int(f["agency"].nunique()),
        time_span=(periods.min(), periods.max()),
        n_numeric=len(obs.numeric),
        n_categorical=len(obs.categorical),
        features=stats,
        overall_missing_fraction=n_missing / n_cells if n_cells else 0.0,
    )
