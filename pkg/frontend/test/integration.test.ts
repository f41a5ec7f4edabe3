// Scripted driver sessions against the real kernel CLI over --approval-io.
// Skipped when the kernel is not importable in this environment.

import { execFileSync } from "node:child_process";
import { mkdtempSync, writeFileSync, existsSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { TuiController } from "../src/controller.js";
import type { SessionLine } from "../src/events.js";
import { SubprocessSession } from "../src/session.js";

const PYTHON = "python3";

function kernelAvailable(): boolean {
  try {
    execFileSync(PYTHON, ["-c", "import agentkernel"], { stdio: "ignore" });
    return true;
  } catch {
    return false;
  }
}

const available = kernelAvailable();
const suite = available ? describe : describe.skip;

interface Driver {
  controller: TuiController;
  session: SubprocessSession;
  lines: SessionLine[];
  exited: Promise<number>;
}

function startSession(script: string, decide: (controller: TuiController, count: number) => void): Driver {
  const root = mkdtempSync(join(tmpdir(), "tui-int-"));
  const workspace = join(root, "ws");
  mkdirSync(workspace);
  const scriptPath = join(root, "script.jsonl");
  writeFileSync(scriptPath, script);

  const session = new SubprocessSession({
    prompt: "drive the scripted task",
    command: [PYTHON, "-m", "agentkernel.cli"],
    passthroughArgs: [
      "--model", `mock:${scriptPath}`,
      "--sandbox", "workspace-write",
      "--workspace", workspace,
      "--disable", "GUARDIAN",
      "--no-store",
    ],
    cwd: workspace,
    env: { ...process.env, CODEX_HOME: join(root, "home") },
  });

  const lines: SessionLine[] = [];
  let approvals = 0;
  const controller = new TuiController(session);
  session.onLine((line) => {
    lines.push(line);
    controller.handleLine(line);
    if (line.kind === "approval") {
      approvals += 1;
      decide(controller, approvals);
    }
  });
  return { controller, session, lines, exited: session.exited };
}

function toolResults(lines: SessionLine[]): Array<{ call_id: string; status: string }> {
  const results: Array<{ call_id: string; status: string }> = [];
  for (const line of lines) {
    if (line.kind === "event" && line.event.variant === "ToolResult") {
      results.push({
        call_id: String(line.event.payload["call_id"]),
        status: String(line.event.payload["status"]),
      });
    }
  }
  return results;
}

function approvalCount(lines: SessionLine[]): number {
  return lines.filter((l) => l.kind === "approval").length;
}

const SINGLE_TOUCH = [
  JSON.stringify({
    turn: { tool_calls: [{ call_id: "c1", name: "shell", arguments: { command: "touch made-it.txt" } }] },
  }),
  JSON.stringify({ turn: { final: "finished" } }),
  "",
].join("\n");

// two identical calls inside one turn, then the same command again next turn
const REPEATED_TOUCH = [
  JSON.stringify({
    turn: {
      tool_calls: [
        { call_id: "c1", name: "shell", arguments: { command: "touch again.txt" } },
        { call_id: "c2", name: "shell", arguments: { command: "touch again.txt" } },
      ],
    },
  }),
  JSON.stringify({
    turn: { tool_calls: [{ call_id: "c3", name: "shell", arguments: { command: "touch again.txt" } }] },
  }),
  JSON.stringify({ turn: { final: "finished" } }),
  "",
].join("\n");

suite("scripted driver sessions", () => {
  it("prompts for an unapproved tool and 'a' allows it", async () => {
    const driver = startSession(SINGLE_TOUCH, (controller) => controller.handleKey("a"));
    const code = await driver.exited;
    expect(code).toBe(0);
    expect(approvalCount(driver.lines)).toBe(1);
    expect(toolResults(driver.lines)).toEqual([{ call_id: "c1", status: "ok" }]);
    expect(driver.controller.approvalKeypresses).toEqual(["a"]);
  }, 30000);

  it("'d' denies the tool and the session still completes", async () => {
    const driver = startSession(SINGLE_TOUCH, (controller) => controller.handleKey("d"));
    const code = await driver.exited;
    expect(code).toBe(0);
    expect(toolResults(driver.lines)).toEqual([{ call_id: "c1", status: "denied" }]);
  }, 30000);

  it("'t' allows for the turn and suppresses a second prompt within it", async () => {
    const decisions: string[] = ["t", "d"];
    const driver = startSession(REPEATED_TOUCH, (controller, count) => {
      controller.handleKey(decisions[count - 1] ?? "d");
    });
    const code = await driver.exited;
    expect(code).toBe(0);
    // one prompt covers both identical calls in turn 1; the next turn's
    // identical call prompts again because the cache is turn-scoped
    expect(approvalCount(driver.lines)).toBe(2);
    expect(toolResults(driver.lines)).toEqual([
      { call_id: "c1", status: "ok" },
      { call_id: "c2", status: "ok" },
      { call_id: "c3", status: "denied" },
    ]);
    expect(driver.controller.approvalKeypresses).toEqual(["t", "d"]);
  }, 30000);

  it("closing mid-prompt denies and the session exits without hanging", async () => {
    const driver = startSession(SINGLE_TOUCH, (controller) => controller.close());
    const code = await driver.exited;
    expect(code).toBe(0);
    const results = toolResults(driver.lines);
    expect(results).toEqual([{ call_id: "c1", status: "denied" }]);
    expect(driver.controller.approvalKeypresses).toEqual([]);
  }, 30000);
});

it("kernel availability probe ran", () => {
  expect(typeof available).toBe("boolean");
});
