"""Bounded resident set standing in for device memory."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..errors import CapacityExceeded, NotResident


@dataclass
class DeviceArena:
    """Capacity and sizes are in descriptor units.

    Every transition appends ``(event, image_id, occupancy)`` to ``trace`` so
    the occupancy series can be replayed or plotted.
    """

    capacity: int
    resident: Dict[int, int] = field(default_factory=dict)
    uploads: int = 0
    evictions: int = 0
    units_uploaded: int = 0
    peak_occupancy: int = 0
    trace: List[Tuple[str, int, int]] = field(default_factory=list)
    record_trace: bool = True

    @property
    def occupancy(self) -> int:
        return sum(self.resident.values())

    def is_resident(self, image_id: int) -> bool:
        return image_id in self.resident

    def upload(self, image_id: int, size: int) -> bool:
        """Make ``image_id`` resident; returns False (and changes nothing) if it already is."""
        if image_id in self.resident:
            return False
        occ = self.occupancy
        if occ + size > self.capacity:
            raise CapacityExceeded(
                f"uploading image {image_id} ({size} units) onto {occ} of {self.capacity} units"
            )
        self.resident[image_id] = int(size)
        self.uploads += 1
        self.units_uploaded += int(size)
        self.peak_occupancy = max(self.peak_occupancy, occ + size)
        if self.record_trace:
            self.trace.append(("upload", image_id, occ + size))
        return True

    def evict(self, image_id: int) -> None:
        if image_id not in self.resident:
            raise NotResident(image_id)
        del self.resident[image_id]
        self.evictions += 1
        if self.record_trace:
            self.trace.append(("evict", image_id, self.occupancy))

    def clear(self) -> None:
        for image_id in sorted(self.resident):
            self.evict(image_id)

    def counters(self) -> dict:
        return {
            "uploads": self.uploads,
            "evictions": self.evictions,
            "units_uploaded": self.units_uploaded,
            "peak_occupancy": self.peak_occupancy,
        }


def arena_upload(arena: DeviceArena, image_id: int, size: int) -> bool:
    return arena.upload(image_id, size)


def arena_evict(arena: DeviceArena, image_id: int) -> None:
    arena.evict(image_id)


def capacity_for(size_gpu: int, descriptor_counts, capacity: Optional[int] = None) -> int:
    """Arena units that hold ``size_gpu`` of the largest images."""
    if capacity is not None:
        return int(capacity)
    return int(size_gpu) * max(list(descriptor_counts) or [1])
