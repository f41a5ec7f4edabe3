import { describe, expect, it } from "vitest";

import type { AgentEvent } from "../src/events.js";
import { PREVIEW_LIMIT, renderApprovalPrompt, renderEvent } from "../src/render.js";

function event(variant: AgentEvent["variant"], payload: Record<string, unknown>, turn = 0): AgentEvent {
  return { variant, turn_index: turn, payload, timestamp: 0 };
}

describe("renderEvent", () => {
  it("turn start renders a header with the index", () => {
    const [entry] = renderEvent(event("TurnStarted", {}, 3));
    expect(entry?.text).toContain("turn 3");
    expect(entry?.emphasis).toBe("header");
  });

  it("tool calls show name and summary arguments", () => {
    const [entry] = renderEvent(event("ToolCall", { tool_name: "shell", arguments: { command: "ls" } }));
    expect(entry?.text).toContain("shell");
    expect(entry?.text).toContain("ls");
  });

  it("long tool results are truncated with an expand affordance", () => {
    const output = "line one is quite long\nline two\nline three";
    const [entry] = renderEvent(event("ToolResult", { status: "ok", output }));
    expect(entry?.text).toContain("[x: view full output]");
    expect(entry?.expandable).toBe(output);
  });

  it("short tool results render inline without affordance", () => {
    const [entry] = renderEvent(event("ToolResult", { status: "ok", output: "done" }));
    expect(entry?.text).toContain("done");
    expect(entry?.expandable).toBeUndefined();
    expect(entry?.text.length).toBeLessThan(PREVIEW_LIMIT + 40);
  });

  it("errors render highlighted", () => {
    const [entry] = renderEvent(event("Error", { message: "transport gave up" }));
    expect(entry?.emphasis).toBe("error");
    expect(entry?.text).toContain("transport gave up");
  });
});

describe("renderApprovalPrompt", () => {
  it("documents the keybindings on the widget", () => {
    const lines = renderApprovalPrompt({ request_id: 1, tool_name: "shell", summary: "run: make" });
    const joined = lines.join("\n");
    expect(joined).toContain("[a] allow");
    expect(joined).toContain("[t] allow for turn");
    expect(joined).toContain("[d] deny");
    expect(joined).toContain("run: make");
  });
});
