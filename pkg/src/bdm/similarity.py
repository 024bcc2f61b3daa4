"""Jaccard similarity between host blocks and the normal/abnormal decision rule.

Scores keep their integer counts so threshold tests are exact: 0.8 is
compared as 4/5, never as a float.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational, Real

DEFAULT_THRESHOLD = Fraction(4, 5)


class EmptyBlock(ValueError):
    pass


class Classification(enum.Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"


@dataclass(frozen=True)
class SimilarityScore:
    z: int
    x_only: int
    y_only: int

    @property
    def fraction(self) -> Fraction:
        denom = self.z + self.x_only + self.y_only
        if denom == 0:
            raise EmptyBlock("similarity of two empty blocks is undefined")
        return Fraction(self.z, denom)

    @property
    def value(self) -> float:
        return float(self.fraction)

    def __float__(self):
        return self.value


def jaccard(x_block, y_block) -> SimilarityScore:
    """Shared MACs over all MACs seen in either block."""
    x, y = set(x_block), set(y_block)
    if not x or not y:
        raise EmptyBlock("both blocks must contain at least one host")
    z = len(x & y)
    return SimilarityScore(z=z, x_only=len(x) - z, y_only=len(y) - z)


def as_fraction(value) -> Fraction:
    """Exact rational form of a score or threshold.

    Floats go through their shortest repr, so ``0.8`` becomes ``4/5``.
    """
    if isinstance(value, SimilarityScore):
        return value.fraction
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, Real):
        return Fraction(repr(float(value)))
    raise TypeError(f"cannot interpret {value!r} as a score")


def validate_threshold(threshold) -> Fraction:
    t = as_fraction(threshold)
    if not 0 < t <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    return t


def classify_score(score, threshold=DEFAULT_THRESHOLD) -> Classification:
    if as_fraction(score) >= validate_threshold(threshold):
        return Classification.ABNORMAL
    return Classification.NORMAL


def detection_allowed(x_size: int, y_size: int, dns_ratio: int) -> bool:
    """Both blocks non-empty and some DNS traffic in the monitoring period."""
    return x_size > 0 and y_size > 0 and dns_ratio > 0
