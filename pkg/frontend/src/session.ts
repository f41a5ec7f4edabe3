// Subprocess session: spawns the kernel CLI in approval-IO mode and wires
// its stdio to the controller. Events and approval requests arrive on
// stdout as JSON lines; decisions go back on stdin.

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface } from "node:readline";

import { encodeDecision, parseSessionLine, type Decision, type SessionLine } from "./events.js";

export interface SubprocessOptions {
  prompt: string;
  passthroughArgs?: string[];
  /** argv prefix for the kernel binary; AGENTKERNEL_BIN env overrides. */
  command?: string[];
  cwd?: string;
  env?: NodeJS.ProcessEnv;
}

export function kernelCommand(override?: string[]): string[] {
  if (override && override.length > 0) {
    return override;
  }
  const fromEnv = process.env["AGENTKERNEL_BIN"];
  if (fromEnv && fromEnv.trim() !== "") {
    return fromEnv.trim().split(/\s+/);
  }
  return ["agentkernel"];
}

export class SubprocessSession {
  private readonly child: ChildProcessWithoutNullStreams;
  readonly exited: Promise<number>;
  private lineHandlers: Array<(line: SessionLine) => void> = [];
  private stdinOpen = true;

  constructor(options: SubprocessOptions) {
    const command = kernelCommand(options.command);
    const argv = [
      ...command.slice(1),
      "exec",
      options.prompt,
      ...(options.passthroughArgs ?? []),
      "--approval-io",
      "--output",
      "jsonl",
    ];
    this.child = spawn(command[0] as string, argv, {
      cwd: options.cwd,
      env: options.env ?? process.env,
      stdio: ["pipe", "pipe", "pipe"],
    });
    const lines = createInterface({ input: this.child.stdout });
    lines.on("line", (raw) => {
      const parsed = parseSessionLine(raw);
      for (const handler of this.lineHandlers) {
        handler(parsed);
      }
    });
    this.exited = new Promise((resolve) => {
      this.child.on("close", (code) => resolve(code ?? -1));
    });
  }

  onLine(handler: (line: SessionLine) => void): void {
    this.lineHandlers.push(handler);
  }

  sendDecision(requestId: number, decision: Decision): void {
    if (!this.stdinOpen) {
      return;
    }
    this.child.stdin.write(encodeDecision(requestId, decision) + "\n");
  }

  /** Stop driving approvals. The kernel treats a closed stdin as deny. */
  close(): void {
    if (this.stdinOpen) {
      this.stdinOpen = false;
      this.child.stdin.end();
    }
  }

  kill(): void {
    this.close();
    this.child.kill("SIGTERM");
  }
}
