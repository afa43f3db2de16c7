from .blocks import (
    ScheduleBlock,
    ScheduleIteration,
    SchedulePlan,
    chunks_per_row,
    generate_blocks,
    iterate_schedule,
    plan_pair_multiset,
    read_plan,
    size_gpu_from_memory,
    write_plan,
)
from .gps import LevelStructure, PermutationOrder, bandwidth, gps_order, level_structure, pseudo_peripheral_pair

__all__ = [
    "LevelStructure",
    "PermutationOrder",
    "ScheduleBlock",
    "ScheduleIteration",
    "SchedulePlan",
    "bandwidth",
    "chunks_per_row",
    "generate_blocks",
    "gps_order",
    "iterate_schedule",
    "level_structure",
    "plan_pair_multiset",
    "pseudo_peripheral_pair",
    "read_plan",
    "size_gpu_from_memory",
    "write_plan",
]
