// Wire types for the kernel's stdio interface: agent events arrive as JSON
// lines (the CLI's jsonl output), approval requests as lines carrying an
// "approval_request" object (docs/wire_grammar.md in the kernel repo).

export type EventVariant =
  | "TurnStarted"
  | "ToolCall"
  | "ToolResult"
  | "TurnCompleted"
  | "Error"
  | "TokenUsage";

export interface AgentEvent {
  variant: EventVariant;
  turn_index: number;
  payload: Record<string, unknown>;
  timestamp: number;
}

export interface ApprovalRequest {
  request_id: number;
  tool_name: string;
  summary: string;
}

export type Decision = "allow" | "allow_for_turn" | "deny";

export type SessionLine =
  | { kind: "event"; event: AgentEvent }
  | { kind: "approval"; request: ApprovalRequest }
  | { kind: "noise"; raw: string };

const VARIANTS: ReadonlySet<string> = new Set([
  "TurnStarted",
  "ToolCall",
  "ToolResult",
  "TurnCompleted",
  "Error",
  "TokenUsage",
]);

export function parseSessionLine(line: string): SessionLine {
  const raw = line.trim();
  if (raw === "") {
    return { kind: "noise", raw: line };
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return { kind: "noise", raw: line };
  }
  if (typeof parsed !== "object" || parsed === null) {
    return { kind: "noise", raw: line };
  }
  const obj = parsed as Record<string, unknown>;

  const approval = obj["approval_request"];
  if (typeof approval === "object" && approval !== null) {
    const req = approval as Record<string, unknown>;
    if (typeof req["request_id"] === "number") {
      return {
        kind: "approval",
        request: {
          request_id: req["request_id"],
          tool_name: String(req["tool_name"] ?? "unknown"),
          summary: String(req["summary"] ?? ""),
        },
      };
    }
  }

  if (typeof obj["variant"] === "string" && VARIANTS.has(obj["variant"])) {
    return {
      kind: "event",
      event: {
        variant: obj["variant"] as EventVariant,
        turn_index: Number(obj["turn_index"] ?? 0),
        payload: (obj["payload"] as Record<string, unknown>) ?? {},
        timestamp: Number(obj["timestamp"] ?? 0),
      },
    };
  }
  return { kind: "noise", raw: line };
}

export function encodeDecision(requestId: number, decision: Decision): string {
  return JSON.stringify({ request_id: requestId, decision });
}
