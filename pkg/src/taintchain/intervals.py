"""Run-length satoshi interval arithmetic.

A SegmentList describes the provenance of a contiguous run of satoshis as an
ordered sequence of (length, label) segments. It is the unit the FIFO engine
slices when satoshis move through a transaction: concatenate the inputs,
carve off each output, and whatever is left is the fee.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

CLEAN = "CLEAN"


@dataclass(frozen=True, slots=True)
class Segment:
    """A run of `length` satoshis all carrying the same taint label."""

    length: int
    label: str

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"segment length must be >= 1, got {self.length}")
        if not self.label:
            raise ValueError("segment label must be non-empty")


class SegmentList:
    """Immutable, normalized run-length list of taint segments.

    Normalized means no two adjacent segments share a label and no segment
    has zero length; `total()` is the number of satoshis described.
    """

    __slots__ = ("_segments",)

    def __init__(self, segments: Iterable[Segment | tuple[int, str]] = ()):
        normalized: list[Segment] = []
        for seg in segments:
            if not isinstance(seg, Segment):
                seg = Segment(*seg)
            if normalized and normalized[-1].label == seg.label:
                normalized[-1] = Segment(normalized[-1].length + seg.length, seg.label)
            else:
                normalized.append(seg)
        object.__setattr__(self, "_segments", tuple(normalized))

    @classmethod
    def clean(cls, length: int) -> "SegmentList":
        """A fully clean run of `length` satoshis (empty list for length 0)."""
        if length == 0:
            return cls()
        return cls([Segment(length, CLEAN)])

    @classmethod
    def uniform(cls, length: int, label: str) -> "SegmentList":
        if length == 0:
            return cls()
        return cls([Segment(length, label)])

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    def total(self) -> int:
        return sum(seg.length for seg in self._segments)

    def is_clean(self) -> bool:
        """True when no satoshi carries a non-CLEAN label (empty counts as clean)."""
        return all(seg.label == CLEAN for seg in self._segments)

    def tainted_total(self) -> int:
        return sum(seg.length for seg in self._segments if seg.label != CLEAN)

    def mass_by_label(self) -> dict[str, int]:
        """Satoshi count per non-CLEAN label, in first-appearance order."""
        mass: dict[str, int] = {}
        for seg in self._segments:
            if seg.label != CLEAN:
                mass[seg.label] = mass.get(seg.label, 0) + seg.length
        return mass

    def labels(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for seg in self._segments:
            if seg.label != CLEAN:
                seen.setdefault(seg.label)
        return tuple(seen)

    def concat(self, other: "SegmentList") -> "SegmentList":
        return SegmentList(self._segments + other._segments)

    def split_at(self, n: int) -> tuple["SegmentList", "SegmentList"]:
        """Split into the first `n` satoshis and the remainder.

        `n` must lie in [0, total()]; a segment straddling the cut is divided.
        """
        if n < 0 or n > self.total():
            raise ValueError(f"split point {n} outside [0, {self.total()}]")
        head: list[Segment] = []
        tail: list[Segment] = []
        remaining = n
        for seg in self._segments:
            if remaining >= seg.length:
                head.append(seg)
                remaining -= seg.length
            elif remaining > 0:
                head.append(Segment(remaining, seg.label))
                tail.append(Segment(seg.length - remaining, seg.label))
                remaining = 0
            else:
                tail.append(seg)
        return SegmentList(head), SegmentList(tail)

    def slice(self, start: int, end: int) -> "SegmentList":
        """The sub-run covering satoshi positions [start, end)."""
        if not 0 <= start <= end <= self.total():
            raise ValueError(f"slice [{start}, {end}) outside [0, {self.total()})")
        _, rest = self.split_at(start)
        out, _ = rest.split_at(end - start)
        return out

    def runs(self) -> Iterator[tuple[int, str]]:
        for seg in self._segments:
            yield seg.length, seg.label

    def to_pairs(self) -> list[list]:
        """Wire form: [[length, label], ...]."""
        return [[seg.length, seg.label] for seg in self._segments]

    @classmethod
    def from_pairs(cls, pairs: Iterable[Iterable]) -> "SegmentList":
        return cls(tuple((int(length), str(label)) for length, label in pairs))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegmentList):
            return NotImplemented
        return self._segments == other._segments

    def __hash__(self) -> int:
        return hash(self._segments)

    def __len__(self) -> int:
        return len(self._segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self._segments)

    def __repr__(self) -> str:
        inner = ", ".join(f"({seg.length}, {seg.label!r})" for seg in self._segments)
        return f"SegmentList([{inner}])"


def concat_all(lists: Iterable[SegmentList]) -> SegmentList:
    out = SegmentList()
    for lst in lists:
        out = out.concat(lst)
    return out
