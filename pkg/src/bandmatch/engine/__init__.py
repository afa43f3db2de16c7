from .arena import DeviceArena, arena_evict, arena_upload, capacity_for
from .baselines import STRATEGIES, plan_baseline, plan_group_block, plan_load_free_list, plan_sequential
from .executor import (
    ExecutionResult,
    HostBackend,
    PipelineMetrics,
    execute_plan,
    pair_seed,
    write_metrics,
    write_occupancy_csv,
    write_pair_stats,
)

__all__ = [
    "STRATEGIES",
    "DeviceArena",
    "ExecutionResult",
    "HostBackend",
    "PipelineMetrics",
    "arena_evict",
    "arena_upload",
    "capacity_for",
    "execute_plan",
    "pair_seed",
    "plan_baseline",
    "plan_group_block",
    "plan_load_free_list",
    "plan_sequential",
    "write_metrics",
    "write_occupancy_csv",
    "write_pair_stats",
]
