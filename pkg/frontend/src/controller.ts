// Session-agnostic TUI logic: transcript state, the approval queue, and
// key handling. At most one approval is visible; the rest wait FIFO behind
// it. Every interactive decision corresponds to exactly one recorded
// keypress, except the fail-closed denials issued when the UI closes.

import type { AgentEvent, ApprovalRequest, Decision, SessionLine } from "./events.js";
import { renderApprovalPrompt, renderEvent, type TranscriptEntry } from "./render.js";

export interface Session {
  sendDecision(requestId: number, decision: Decision): void;
  close(): void;
}

export type SessionStatus = "running" | "completed" | "failed" | "max_turns" | "closed";

export interface SentDecision {
  requestId: number;
  decision: Decision;
}

const KEY_DECISIONS: Record<string, Decision> = {
  a: "allow",
  t: "allow_for_turn",
  d: "deny",
};

export class TuiController {
  readonly transcript: TranscriptEntry[] = [];
  pendingApproval: ApprovalRequest | null = null;
  readonly approvalQueue: ApprovalRequest[] = [];
  inputBuffer = "";
  status: SessionStatus = "running";

  // audit trail: one approval keypress per decision sent interactively
  readonly approvalKeypresses: string[] = [];
  readonly decisionsSent: SentDecision[] = [];
  readonly closeDenials: SentDecision[] = [];

  private expanded = false;

  constructor(
    private readonly session: Session,
    private readonly onChange: () => void = () => {},
  ) {}

  handleLine(line: SessionLine): void {
    if (this.status === "closed") {
      return;
    }
    if (line.kind === "event") {
      this.applyEvent(line.event);
    } else if (line.kind === "approval") {
      if (this.pendingApproval === null) {
        this.pendingApproval = line.request;
      } else {
        this.approvalQueue.push(line.request);
      }
    }
    this.onChange();
  }

  private applyEvent(event: AgentEvent): void {
    this.transcript.push(...renderEvent(event));
    if (event.variant === "Error") {
      this.status = "failed";
    }
    if (event.variant === "TurnCompleted" && event.payload["final"] === true) {
      this.status = "completed";
    }
  }

  promptLines(): string[] {
    return this.pendingApproval ? renderApprovalPrompt(this.pendingApproval) : [];
  }

  handleKey(key: string): void {
    if (this.status === "closed") {
      return;
    }
    if (this.pendingApproval !== null) {
      const decision = KEY_DECISIONS[key];
      if (decision !== undefined) {
        const request = this.pendingApproval;
        this.approvalKeypresses.push(key);
        this.decisionsSent.push({ requestId: request.request_id, decision });
        this.session.sendDecision(request.request_id, decision);
        this.pendingApproval = this.approvalQueue.shift() ?? null;
        this.onChange();
      }
      return; // other keys are inert while a prompt is visible
    }
    if (key === "x") {
      this.expanded = true;
      this.onChange();
      return;
    }
    if (key === "\r" || key === "\n") {
      this.inputBuffer = "";
    } else if (key === "") {
      this.inputBuffer = this.inputBuffer.slice(0, -1);
    } else if (key.length === 1 && key >= " ") {
      this.inputBuffer += key;
    }
    this.onChange();
  }

  /** Latest expandable output when the user pressed x, else null. */
  expandedOutput(): string | null {
    if (!this.expanded) {
      return null;
    }
    for (let i = this.transcript.length - 1; i >= 0; i -= 1) {
      const entry = this.transcript[i];
      if (entry && entry.expandable !== undefined) {
        return entry.expandable;
      }
    }
    return null;
  }

  /**
   * The driver is going away: deny the visible prompt and everything
   * queued behind it (fail-closed), then detach. The kernel session keeps
   * running; it just sees denials.
   */
  close(): void {
    if (this.status === "closed") {
      return;
    }
    const pending = this.pendingApproval ? [this.pendingApproval, ...this.approvalQueue] : [...this.approvalQueue];
    for (const request of pending) {
      this.closeDenials.push({ requestId: request.request_id, decision: "deny" });
      this.session.sendDecision(request.request_id, "deny");
    }
    this.pendingApproval = null;
    this.approvalQueue.length = 0;
    this.status = "closed";
    this.session.close();
    this.onChange();
  }
}
