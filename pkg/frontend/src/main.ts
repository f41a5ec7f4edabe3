#!/usr/bin/env node
// chat entry point: spawn a kernel session and drive it interactively.
// Accepts the same flags as `agentkernel exec`; unrecognized options are
// passed straight through to the kernel.

import { emitKeypressEvents } from "node:readline";

import { TuiController } from "./controller.js";
import { ansi } from "./render.js";
import { SubprocessSession } from "./session.js";

const USAGE = `usage: agentkernel-chat [chat] "prompt" [exec flags...]

Runs one interactive kernel session. All flags after the prompt are passed
through to \`agentkernel exec\` (--sandbox, --model, --enable/--disable,
--parity, --max-turns, --workspace, ...).

Keys while an approval prompt is visible: a allow, t allow-for-turn, d deny.
Other keys: x expand last truncated tool output, q or Ctrl-C quit (denies
any pending approvals and detaches).`;

function parseArgv(argv: string[]): { prompt: string; passthrough: string[] } | null {
  const args = [...argv];
  if (args[0] === "chat") {
    args.shift();
  }
  const positional: string[] = [];
  const passthrough: string[] = [];
  let index = 0;
  while (index < args.length) {
    const arg = args[index] as string;
    if (arg === "-h" || arg === "--help") {
      return null;
    }
    if (arg.startsWith("-")) {
      passthrough.push(arg);
      const next = args[index + 1];
      const bare = new Set(["--parity", "--approval-io", "--interactive", "--non-interactive", "--no-store"]);
      if (!bare.has(arg) && next !== undefined && !next.startsWith("-")) {
        passthrough.push(next);
        index += 1;
      }
    } else {
      positional.push(arg);
    }
    index += 1;
  }
  const prompt = positional.join(" ").trim();
  if (prompt === "") {
    return null;
  }
  return { prompt, passthrough };
}

function main(): void {
  const parsed = parseArgv(process.argv.slice(2));
  if (parsed === null) {
    process.stderr.write(USAGE + "\n");
    process.exit(64);
  }

  const session = new SubprocessSession({
    prompt: parsed.prompt,
    passthroughArgs: parsed.passthrough,
  });

  let printed = 0;
  let promptVisible = false;
  const controller = new TuiController(session, () => {
    while (printed < controller.transcript.length) {
      const entry = controller.transcript[printed];
      if (entry) {
        process.stdout.write(ansi(entry) + "\n");
      }
      printed += 1;
    }
    const expanded = controller.expandedOutput();
    if (expanded !== null) {
      process.stdout.write("[2m--- full output ---[0m\n" + expanded + "\n");
    }
    if (controller.pendingApproval !== null && !promptVisible) {
      for (const line of controller.promptLines()) {
        process.stdout.write("[33m" + line + "[0m\n");
      }
      promptVisible = true;
    }
    if (controller.pendingApproval === null) {
      promptVisible = false;
    }
  });

  session.onLine((line) => controller.handleLine(line));

  if (process.stdin.isTTY) {
    emitKeypressEvents(process.stdin);
    process.stdin.setRawMode(true);
    process.stdin.on("keypress", (_chunk: string, key: { name?: string; ctrl?: boolean; sequence?: string }) => {
      if ((key.ctrl && key.name === "c") || key.name === "q") {
        controller.close();
        return;
      }
      controller.handleKey(key.sequence ?? key.name ?? "");
    });
  }

  void session.exited.then((code) => {
    if (process.stdin.isTTY) {
      process.stdin.setRawMode(false);
    }
    process.stdin.pause();
    process.exit(code);
  });
}

main();
