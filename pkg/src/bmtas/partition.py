"""Task-grouping algebra on set partitions of {0, ..., T-1}.

A grouping is encoded canonically as a restricted-growth string (RGS):
entry ``i`` holds the block index of task ``i``, with blocks numbered in
order of first appearance. Canonicality makes structural equality of the
RGS coincide with set-partition equality, and lexicographic order on the
RGS gives the deterministic enumeration order used everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import BoundsError, DimensionMismatch

# B_8 = 4140 groupings per layer and 8^8 joint edge choices keep the exact
# expected-cost machinery tractable; beyond that it is not.
MAX_TASKS = 8


@dataclass(frozen=True)
class Partition:
    """A task grouping in canonical restricted-growth form."""

    rgs: tuple[int, ...]

    def __post_init__(self):
        rgs = tuple(int(v) for v in self.rgs)
        object.__setattr__(self, "rgs", rgs)
        if not 1 <= len(rgs) <= MAX_TASKS:
            raise BoundsError(
                f"partition covers {len(rgs)} tasks; supported range is 1..{MAX_TASKS}"
            )
        top = -1
        for i, v in enumerate(rgs):
            if v < 0 or v > top + 1:
                raise ValueError(
                    f"rgs {rgs} is not in canonical restricted-growth form "
                    f"(violation at position {i})"
                )
            top = max(top, v)

    @property
    def num_tasks(self) -> int:
        return len(self.rgs)

    @property
    def num_blocks(self) -> int:
        return 1 + max(self.rgs)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        """Canonicalize an arbitrary block labeling (tasks grouped iff equal labels)."""
        seen: dict[int, int] = {}
        rgs = []
        for v in labels:
            if v not in seen:
                seen[v] = len(seen)
            rgs.append(seen[v])
        return cls(tuple(rgs))

    @classmethod
    def coarsest(cls, num_tasks: int) -> "Partition":
        """The single-block grouping: all tasks share."""
        return cls((0,) * num_tasks)

    @classmethod
    def finest(cls, num_tasks: int) -> "Partition":
        """The all-singletons grouping: no task shares."""
        return cls(tuple(range(num_tasks)))

    def blocks(self) -> list[list[int]]:
        """Blocks as task-index lists, ordered by smallest member."""
        out: list[list[int]] = [[] for _ in range(self.num_blocks)]
        for task, b in enumerate(self.rgs):
            out[b].append(task)
        return out

    def to_json(self) -> list[list[int]]:
        return self.blocks()

    @classmethod
    def from_json(cls, blocks: Iterable[Iterable[int]]) -> "Partition":
        """Rebuild from a block list; must cover 0..T-1 exactly once."""
        labels: dict[int, int] = {}
        for b, members in enumerate(blocks):
            for task in members:
                task = int(task)
                if task in labels:
                    raise ValueError(f"task {task} appears in more than one block")
                labels[task] = b
        n = len(labels)
        if n == 0 or set(labels) != set(range(n)):
            raise ValueError("blocks must cover tasks 0..T-1 exactly")
        return cls.from_labels([labels[t] for t in range(n)])

    def __str__(self) -> str:
        return "".join(str(v) for v in self.rgs)


@dataclass(frozen=True)
class AncestorSet:
    """A grouping together with every grouping it refines (itself included)."""

    base: Partition
    members: tuple[Partition, ...]


@lru_cache(maxsize=None)
def enumerate_partitions(num_tasks: int) -> tuple[Partition, ...]:
    """All set partitions of {0..T-1}, in lexicographic RGS order.

    The length of the result is the Bell number B_T.
    """
    if not 1 <= num_tasks <= MAX_TASKS:
        raise BoundsError(
            f"task count must be in 1..{MAX_TASKS}, got {num_tasks}"
        )
    out: list[Partition] = []
    rgs = [0] * num_tasks

    def grow(i: int, top: int):
        if i == num_tasks:
            out.append(Partition(tuple(rgs)))
            return
        for v in range(top + 2):
            rgs[i] = v
            grow(i + 1, max(top, v))

    grow(1, 0) if num_tasks > 1 else out.append(Partition((0,)))
    return tuple(out)


def _check_same_tasks(a: Partition, b: Partition):
    if a.num_tasks != b.num_tasks:
        raise DimensionMismatch(
            f"partitions cover {a.num_tasks} and {b.num_tasks} tasks"
        )


def refines(a: Partition, b: Partition) -> bool:
    """True iff every block of ``a`` lies inside a single block of ``b``."""
    _check_same_tasks(a, b)
    image: dict[int, int] = {}
    for la, lb in zip(a.rgs, b.rgs):
        if image.setdefault(la, lb) != lb:
            return False
    return True


def meet(a: Partition, b: Partition) -> Partition:
    """Coarsest partition refining both: tasks grouped iff grouped in both."""
    _check_same_tasks(a, b)
    return Partition.from_labels(list(zip(a.rgs, b.rgs)))


def ancestors(k: Partition) -> AncestorSet:
    """Every grouping of which ``k`` is a refinement, in enumeration order."""
    members = tuple(m for m in enumerate_partitions(k.num_tasks) if refines(k, m))
    return AncestorSet(base=k, members=members)


def num_parts(k: Partition) -> int:
    """Number of blocks, i.e. distinct operations the grouping requires."""
    return k.num_blocks
