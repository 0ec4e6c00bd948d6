from .metrics import MjeReport, integrate_plan, mje, mje_report
from .tasks import Task, generate_tasks, load_tasks, save_tasks
from .runner import BenchConfig, run_benchmark

__all__ = [
    "MjeReport",
    "integrate_plan",
    "mje",
    "mje_report",
    "Task",
    "generate_tasks",
    "load_tasks",
    "save_tasks",
    "BenchConfig",
    "run_benchmark",
]
