"""Tool registry, built-in handlers, patch engine, and the orchestrator.

The orchestrator and handlers import the permissions pipeline, which in
turn needs the invocation types from this package, so those two modules are
re-exported lazily to keep imports acyclic.
"""

from .types import (  # noqa: F401
    DispatchLimits,
    ParsedListDir,
    ParsedPatch,
    ParsedRequestPermissions,
    ParsedShell,
    ToolInvocation,
    ToolResult,
    ToolStatus,
    UnknownTool,
    parse_invocation,
)
from .registry import DuplicateTool, ToolRegistry  # noqa: F401
from .patch import (  # noqa: F401
    PatchConflict,
    PatchDocument,
    PatchParseError,
    apply_patch,
    parse_patch,
    render_patch,
)

_LAZY = {
    "ExecutionContext": "orchestrator",
    "dispatch_batch": "orchestrator",
    "orchestrate": "orchestrator",
    "new_probe": "orchestrator",
    "default_registry": "handlers",
    "list_dir": "handlers",
}


def __getattr__(name: str):
    module_name = _LAZY.get(name)
    if module_name is None:
        raise AttributeError(name)
    from importlib import import_module

    module = import_module(f".{module_name}", __name__)
    return getattr(module, name)
