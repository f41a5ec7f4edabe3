"""agentkernel: an offline-testable AI coding-agent runtime.

The pieces: typed protocol items and SSE framing, token budgeting and
three-phase compaction, a declarative execution policy engine, guardian
risk assessment, a layered approval pipeline, a tool registry with a patch
engine and bounded dispatch, sandbox mode resolution, a recovering model
client over two transports, the agent turn loop, feature flags with parity
mode, versioned session persistence, and a scripted mock-model harness.
"""

__version__ = "0.1.0"
