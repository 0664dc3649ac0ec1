"""Set representations for prediction regions.

``IntervalSet`` is a finite union of disjoint closed real intervals and is
what every unsupervised method returns. ``LabelSet`` is a subset of {0, 1}
for the binary supervised methods.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def _merge(pairs: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    """Sort and coalesce overlapping or touching closed intervals."""
    items = sorted((float(lo), float(hi)) for lo, hi in pairs if lo <= hi)
    out: list[list[float]] = []
    for lo, hi in items:
        if out and lo <= out[-1][1]:
            if hi > out[-1][1]:
                out[-1][1] = hi
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


class IntervalSet:
    """Union of sorted, pairwise disjoint, non-adjacent closed intervals.

    Endpoints may be ``-inf``/``inf``. Construction normalizes whatever is
    passed in, so overlapping input intervals are fine.

    >>> IntervalSet([(2, 4), (3, 5), (7, 8)])
    IntervalSet([(2.0, 5.0), (7.0, 8.0)])
    >>> IntervalSet([(0, 1), (1, 2)]).size
    2.0
    """

    __slots__ = ("_iv",)

    def __init__(self, intervals: Iterable[Sequence[float]] = ()):
        pairs = []
        for iv in intervals:
            lo, hi = iv
            if np.isnan(lo) or np.isnan(hi):
                raise ValueError("interval endpoints must not be NaN")
            pairs.append((lo, hi))
        self._iv = _merge(pairs)

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls()

    @classmethod
    def whole_line(cls) -> "IntervalSet":
        return cls([(-np.inf, np.inf)])

    @classmethod
    def from_arrays(cls, lo, hi) -> "IntervalSet":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls(zip(lo.tolist(), hi.tolist()))

    @property
    def intervals(self) -> tuple[tuple[float, float], ...]:
        return self._iv

    @property
    def is_empty(self) -> bool:
        return not self._iv

    @property
    def is_whole_line(self) -> bool:
        return self._iv == ((-np.inf, np.inf),)

    @property
    def size(self) -> float:
        """Lebesgue measure; ``inf`` when any endpoint is infinite."""
        return float(sum(hi - lo for lo, hi in self._iv))

    @property
    def lower(self) -> float:
        return self._iv[0][0] if self._iv else np.nan

    @property
    def upper(self) -> float:
        return self._iv[-1][1] if self._iv else np.nan

    def contains(self, y: float) -> bool:
        for lo, hi in self._iv:
            if lo <= y <= hi:
                return True
            if y < lo:
                break
        return False

    __contains__ = contains

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self._iv + other._iv)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        a, b = self._iv, other._iv
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet(out)

    __or__ = union
    __and__ = intersection

    def issubset(self, other: "IntervalSet") -> bool:
        return self.intersection(other) == self

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalSet) and self._iv == other._iv

    def __hash__(self) -> int:
        return hash(self._iv)

    def __iter__(self):
        return iter(self._iv)

    def __len__(self) -> int:
        return len(self._iv)

    def __repr__(self) -> str:
        return f"IntervalSet({list(self._iv)!r})"


@dataclass(frozen=True)
class LabelSet:
    """Subset of the binary label space {0, 1}."""

    contains_zero: bool = False
    contains_one: bool = False

    @classmethod
    def full(cls) -> "LabelSet":
        return cls(True, True)

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "LabelSet":
        labels = set(int(v) for v in labels)
        if not labels <= {0, 1}:
            raise ValueError(f"labels must be 0 or 1, got {sorted(labels)}")
        return cls(0 in labels, 1 in labels)

    @property
    def size(self) -> int:
        return int(self.contains_zero) + int(self.contains_one)

    @property
    def is_full(self) -> bool:
        return self.contains_zero and self.contains_one

    def contains(self, y: int) -> bool:
        if y == 0:
            return self.contains_zero
        if y == 1:
            return self.contains_one
        return False

    __contains__ = contains

    def intersection(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(self.contains_zero and other.contains_zero,
                        self.contains_one and other.contains_one)

    __and__ = intersection

    def __iter__(self):
        if self.contains_zero:
            yield 0
        if self.contains_one:
            yield 1

    def __repr__(self) -> str:
        return "LabelSet({" + ", ".join(str(v) for v in self) + "})"
