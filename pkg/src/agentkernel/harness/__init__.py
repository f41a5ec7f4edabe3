"""Offline evaluation harness: scripted mock model server, e2e task suite,
and micro-benchmark scenarios."""

from .script import Fault, FaultKind, ModelScript, ScriptTurn, load_script, parse_script_jsonl  # noqa: F401
from .server import ChannelTransport, MockModelServer, RecordedRequest, serve  # noqa: F401
from .tasks import EVAL_TASKS, EvalReport, EvalTask, run_eval  # noqa: F401
from .micro import MICRO_SCENARIOS, MicroReport, run_micro  # noqa: F401
from .report import write_reports  # noqa: F401
