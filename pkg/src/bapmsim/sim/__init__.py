from .events import Event, EventKind, EventQueue
from .jobs import JitterModel, JobRun, PowerLoss, Simulation, inject_power_loss, run_simulation
from .report import SimReport, spread_stats, summarize_results
from .workflow import Schedule, ScheduledJob, WorkflowPolicy, schedule_workflow

__all__ = [
    "Event", "EventKind", "EventQueue", "JitterModel", "JobRun", "PowerLoss", "Simulation",
    "inject_power_loss", "run_simulation", "SimReport", "spread_stats", "summarize_results",
    "Schedule", "ScheduledJob", "WorkflowPolicy", "schedule_workflow",
]
