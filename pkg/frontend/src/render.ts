// Pure rendering: events to transcript entries, approval prompt widget.

import type { AgentEvent, ApprovalRequest } from "./events.js";

export type Emphasis = "plain" | "header" | "tool" | "error" | "dim";

export interface TranscriptEntry {
  text: string;
  emphasis: Emphasis;
  // full text behind a truncated preview; the x key expands it
  expandable?: string;
}

export const PREVIEW_LIMIT = 100;

function previewOf(output: string): { text: string; truncated: boolean } {
  const firstLine = output.split("\n")[0] ?? "";
  if (output.includes("\n") || firstLine.length > PREVIEW_LIMIT) {
    return { text: firstLine.slice(0, PREVIEW_LIMIT), truncated: true };
  }
  return { text: firstLine, truncated: false };
}

export function renderEvent(event: AgentEvent): TranscriptEntry[] {
  const payload = event.payload;
  switch (event.variant) {
    case "TurnStarted":
      return [{ text: `── turn ${event.turn_index}`, emphasis: "header" }];
    case "ToolCall": {
      const name = String(payload["tool_name"] ?? "?");
      const args = JSON.stringify(payload["arguments"] ?? {});
      return [{ text: `→ ${name} ${args}`, emphasis: "tool" }];
    }
    case "ToolResult": {
      const status = String(payload["status"] ?? "?");
      const output = String(payload["output"] ?? "");
      const { text, truncated } = previewOf(output);
      const suffix = truncated ? "  [x: view full output]" : "";
      return [
        {
          text: `← ${status}: ${text}${suffix}`,
          emphasis: status === "ok" ? "plain" : "error",
          expandable: truncated ? output : undefined,
        },
      ];
    }
    case "TurnCompleted":
      return payload["final"] === true
        ? [{ text: "turn complete (final)", emphasis: "dim" }]
        : [];
    case "Error":
      return [{ text: `error: ${String(payload["message"] ?? "")}`, emphasis: "error" }];
    case "TokenUsage":
      return [
        {
          text: `tokens in=${payload["input_tokens"] ?? 0} out=${payload["output_tokens"] ?? 0}`,
          emphasis: "dim",
        },
      ];
  }
}

export function renderApprovalPrompt(request: ApprovalRequest): string[] {
  return [
    "┌─ approval required ─────────────────────────",
    `│ tool: ${request.tool_name}`,
    `│ ${request.summary}`,
    "│ [a] allow   [t] allow for turn   [d] deny",
    "└──────────────────────────────────────────────",
  ];
}

const CODES: Record<Emphasis, [string, string]> = {
  plain: ["", ""],
  header: ["[1m", "[0m"],
  tool: ["[36m", "[0m"],
  error: ["[31m", "[0m"],
  dim: ["[2m", "[0m"],
};

export function ansi(entry: TranscriptEntry): string {
  const [open, close] = CODES[entry.emphasis];
  return `${open}${entry.text}${close}`;
}
