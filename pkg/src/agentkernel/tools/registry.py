"""Name-to-handler registry, immutable once the session starts."""

from __future__ import annotations

from typing import Callable, Iterable

from .types import ToolInvocation, ToolResult, UnknownTool

Handler = Callable[[ToolInvocation, "object"], ToolResult]


class DuplicateTool(ValueError):
    pass


class ToolRegistry:
    def __init__(self) -> None:
        self._handlers: dict[str, Handler] = {}

    def register(self, name: str, handler: Handler) -> None:
        if name in self._handlers:
            raise DuplicateTool(f"tool {name!r} already registered")
        self._handlers[name] = handler

    def lookup(self, name: str) -> Handler:
        try:
            return self._handlers[name]
        except KeyError:
            raise UnknownTool(name) from None

    def names(self) -> Iterable[str]:
        return sorted(self._handlers)

    def __len__(self) -> int:
        return len(self._handlers)

    def __contains__(self, name: str) -> bool:
        return name in self._handlers
