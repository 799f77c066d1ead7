"""Rating alphabet and the binary / continuous target constructions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

SP_GRADES = (
    "AAA", "AA+", "AA", "AA-", "A+", "A", "A-",
    "BBB+", "BBB", "BBB-",
    "BB+", "BB", "BB-", "B+", "B", "B-",
    "CCC+", "CCC", "CCC-", "CC", "C", "D",
)
LOWEST_INVESTMENT_GRADE = "BBB-"


def normalize_rating(text: str) -> str:
    # unicode minus/dashes show up in copy-pasted ratings
    return text.strip().upper().replace("−", "-").replace("–", "-")


@dataclass(frozen=True)
class RatingScale:
    grades: tuple = SP_GRADES
    investment_floor: str = LOWEST_INVESTMENT_GRADE
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        grades = tuple(normalize_rating(g) for g in self.grades)
        if len(set(grades)) != len(grades):
            raise ValueError("rating scale contains duplicate grades")
        object.__setattr__(self, "grades", grades)
        object.__setattr__(self, "index", {g: i for i, g in enumerate(grades)})
        if normalize_rating(self.investment_floor) not in self.index:
            raise ValueError(f"investment floor {self.investment_floor!r} not on the scale")

    @classmethod
    def from_config(cls, cfg: dict) -> "RatingScale":
        return cls(tuple(cfg["grades"]), cfg.get("investment_floor", LOWEST_INVESTMENT_GRADE))

    def __len__(self):
        return len(self.grades)

    def rank(self, rating: str) -> int:
        key = normalize_rating(rating)
        try:
            return self.index[key]
        except KeyError:
            raise ValueError(f"unknown rating grade {rating!r}") from None

    @property
    def cut_rank(self) -> int:
        return self.index[normalize_rating(self.investment_floor)]


DEFAULT_SCALE = RatingScale()


def to_binary(rating: str, scale: RatingScale = DEFAULT_SCALE) -> int:
    """1 for investment grade (at or above BBB-), 0 for junk."""
    return int(scale.rank(rating) <= scale.cut_rank)


def to_continuous(rating: str, scale: RatingScale = DEFAULT_SCALE) -> float:
    """Equally spaced score with the best grade at 1.0 and the worst at 0.0."""
    worst = len(scale) - 1
    return (worst - scale.rank(rating)) / worst


def rank_rescale(scores) -> np.ndarray:
    x = np.asarray(scores, dtype=float)
    if x.size == 0:
        raise ValueError("rank_rescale needs at least one score")
    return rankdata(x, method="average") / x.size


def build_targets(ratings, mode: str, scale: RatingScale = DEFAULT_SCALE, rescale: bool = False) -> np.ndarray:
    if mode == "binary":
        return np.array([to_binary(r, scale) for r in ratings], dtype=float)
    if mode == "continuous":
        y = np.array([to_continuous(r, scale) for r in ratings], dtype=float)
        return rank_rescale(y) if rescale and y.size else y
    raise ValueError(f"unknown target mode {mode!r}; expected 'binary' or 'continuous'")
