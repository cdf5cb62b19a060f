"""Greedy vaccine-drive pruning.

Iteratively commits the (cell, day) drive with the highest utility —
the best achievable sum of drive-over-nothing gains among nearby
eligible mothers — whenever the drive is at most as expensive as
vouchering its beneficiaries. Committed mothers leave the population,
shrinking the integer program that follows.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .domain import ConfigError, Instance, Kind, Money, ProbabilityTable

# utilities below this are treated as "nothing left to gain at this cell-day"
_EPS = 1e-12


@dataclass(frozen=True)
class CommittedDrive:
    cell: int
    day: int
    mothers: tuple[int, ...]
    utility: float


@dataclass
class PruneState:
    """Outcome of the greedy phase."""

    committed: list[CommittedDrive]
    visited: set[tuple[int, int]]  # (cell, day) pairs taken off the table
    remaining_mothers: list[int]  # ids, ascending
    remaining_budget: Money
    iterations: int = 0
    utility_matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def drive_cells(self) -> set[tuple[int, int]]:
        return {(c.cell, c.day) for c in self.committed}

    @property
    def pruned_mothers(self) -> set[int]:
        return {m for c in self.committed for m in c.mothers}


def drive_utility(instance: Instance, table: ProbabilityTable,
                  eligible_ids: list[int], capacity: int) -> tuple[float, list[int]]:
    """Best drive value over the eligible set: the `capacity` largest
    drive-over-nothing gains, ties broken toward lower mother ids."""
    scored = sorted(((-table.gain(m, Kind.VACCINE_DRIVE), m) for m in eligible_ids))
    chosen = scored[:capacity]
    return (-sum(g for g, _ in chosen), [m for _, m in chosen])


class _Candidates:
    """Static per-(cell, day) candidate lists, gain-sorted, shared by all
    iterations; utilities are recomputed lazily against the shrinking
    population."""

    def __init__(self, instance: Instance, table: ProbabilityTable):
        self.instance = instance
        mothers = instance.mothers
        self.ids = np.array([m.id for m in mothers], dtype=np.int64)
        gains = np.array([table.gain(m.id, Kind.VACCINE_DRIVE) for m in mothers])
        dist = instance.distance_matrix()
        in_range = dist <= instance.drive_radius_km + 1e-12

        T = instance.horizon
        elig = np.zeros((T + 1, len(mothers)), dtype=bool)
        for i, m in enumerate(mothers):
            elig[m.elig_start:m.elig_end + 1, i] = True

        self.gains = gains
        self.lists: dict[tuple[int, int], np.ndarray] = {}
        order_key = np.lexsort((self.ids, -gains))  # gain desc, id asc
        for g in range(instance.grid.n_cells):
            near = in_range[:, g]
            if not near.any():
                continue
            for t in range(1, T + 1):
                mask = near & elig[t]
                if mask.any():
                    idx = order_key[mask[order_key]]
                    self.lists[(g, t)] = idx

    def utility(self, key: tuple[int, int], active: np.ndarray, capacity: int) -> tuple[float, list[int]]:
        members = self.lists.get(key)
        if members is None:
            return 0.0, []
        chosen: list[int] = []
        total = 0.0
        for i in members:
            if active[i]:
                chosen.append(int(i))
                total += float(self.gains[i])
                if len(chosen) == capacity:
                    break
        return total, chosen


def greedy_prune(instance: Instance, table: ProbabilityTable,
                 threshold: Money) -> PruneState:
    """Run the pruning loop until the budget falls below `threshold` or
    every (cell, day) pair has been inspected.

    A drive is committed only when vouchering its targeted mothers would
    cost at least as much as the drive itself, and only while both the
    budget and the optional total-drive cap allow it. Ties in the argmax
    go to the lowest cell index, then the earliest day.
    """
    if not 0 <= threshold <= instance.budget:
        raise ConfigError(f"threshold {threshold} outside [0, budget {instance.budget}]")

    cand = _Candidates(instance, table)
    active = np.ones(len(instance.mothers), dtype=bool)
    capacity = instance.drive_capacity
    cost_drive = instance.costs.drive
    cost_voucher = instance.costs.voucher

    # lazy max-heap of (-utility, cell, day); stale entries get
    # recomputed on pop, which is exact because utilities only decay
    heap: list[tuple[float, int, int]] = []
    fresh: dict[tuple[int, int], float] = {}
    for (g, t), members in cand.lists.items():
        u, _ = cand.utility((g, t), active, capacity)
        heap.append((-u, g, t))
        fresh[(g, t)] = u
    heapq.heapify(heap)

    committed: list[CommittedDrive] = []
    visited: set[tuple[int, int]] = set()
    budget = instance.budget
    total_cells = instance.grid.n_cells * instance.horizon
    count = 0

    while budget >= threshold and count < total_cells:
        best = None
        while heap:
            neg_u, g, t = heapq.heappop(heap)
            u, chosen = cand.utility((g, t), active, capacity)
            if u + _EPS < -neg_u:  # stale: reinsert with the fresh value
                heapq.heappush(heap, (-u, g, t))
                continue
            best = (u, g, t, chosen)
            break
        if best is None:
            break
        count += 1
        u, g, t, chosen = best
        visited.add((g, t))
        cap_ok = instance.drive_cap is None or len(committed) < instance.drive_cap
        if cost_voucher * len(chosen) >= cost_drive and budget >= cost_drive and cap_ok and chosen:
            ids = tuple(int(cand.ids[i]) for i in chosen)
            committed.append(CommittedDrive(cell=g, day=t, mothers=ids, utility=u))
            active[chosen] = False
            budget -= cost_drive

    remaining = sorted(int(cand.ids[i]) for i in np.flatnonzero(active))
    return PruneState(committed=committed, visited=visited,
                      remaining_mothers=remaining, remaining_budget=budget,
                      iterations=count)
