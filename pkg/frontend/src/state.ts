/**
 * Session state machine for the onboarding flow.
 *
 * The controller owns all interaction with the service and exposes a single
 * ViewState snapshot for the renderer. Two invariants are enforced here
 * rather than in the DOM layer:
 *
 *  - exactly one item is live at a time — a new item is only requested
 *    after the previous one's feedback has been shown and acknowledged;
 *  - an answer is never recorded twice for the same item — the answer
 *    control locks the moment a choice is made (stage "submitting"), and a
 *    retry after a transport failure re-sends the same item id, which the
 *    service resolves idempotently.
 *
 * Every public operation settles internally: failures become state
 * transitions (retryable "error" or blocking "fatal"), never rejections.
 */

import {
  ApiError,
  NetworkError,
  UnsupportedVersionError,
} from "./api.js";
import type {
  AnswerOutcome,
  Feedback,
  ItemPayload,
  OnboardingApi,
  Phase,
  SessionOptions,
  Transcript,
} from "./api.js";

// ---------------------------------------------------------------------------
// View state
// ---------------------------------------------------------------------------

export type Stage =
  | "idle"
  | "starting"
  | "loading"
  | "answering"
  | "submitting"
  | "feedback"
  | "summary"
  | "error"
  | "fatal";

/** Which request failed, so retry() knows what to re-dispatch. */
export type FailedOp = "start" | "next" | "submit" | "transcript";

export interface PendingAnswer {
  itemId: string;
  answer: string;
  usedAi: boolean;
}

export interface ProgressCounters {
  /** Distinct items the service has handed out. */
  served: number;
  /** Distinct items whose answer the service has recorded. */
  answered: number;
  /** Answered counts broken down by phase. */
  byPhase: Partial<Record<Phase, number>>;
}

export interface ErrorState {
  op: FailedOp;
  message: string;
  /** True for transport failures; false for protocol or service errors. */
  retryable: boolean;
}

export interface ViewState {
  stage: Stage;
  sessionId: string | null;
  /** Latest phase reported by the service. */
  phase: Phase | null;
  /** The one item currently in front of the user, if any. */
  item: ItemPayload | null;
  /** The answer chosen for the current item, kept until feedback lands. */
  pending: PendingAnswer | null;
  /** Feedback for the answer just recorded. */
  feedback: Feedback | null;
  /** Final transcript, present only in the summary stage. */
  transcript: Transcript | null;
  counters: ProgressCounters;
  error: ErrorState | null;
}

export type Listener = (state: ViewState) => void;

function initialState(): ViewState {
  return {
    stage: "idle",
    sessionId: null,
    phase: null,
    item: null,
    pending: null,
    feedback: null,
    transcript: null,
    counters: { served: 0, answered: 0, byPhase: {} },
    error: null,
  };
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

export class SessionController {
  private readonly api: OnboardingApi;
  private readonly options: SessionOptions;
  private readonly listeners = new Set<Listener>();
  private readonly servedIds = new Set<string>();
  private readonly answeredIds = new Set<string>();
  private state: ViewState = initialState();

  constructor(api: OnboardingApi, options: SessionOptions = {}) {
    this.api = api;
    this.options = options;
  }

  getState(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  private fail(op: FailedOp, err: unknown): void {
    if (err instanceof NetworkError) {
      this.update({
        stage: "error",
        error: { op, message: err.message, retryable: true },
      });
      return;
    }
    const message =
      err instanceof UnsupportedVersionError || err instanceof ApiError
        ? err.message
        : `unexpected failure: ${err instanceof Error ? err.message : String(err)}`;
    this.update({ stage: "fatal", error: { op, message, retryable: false } });
  }

  // -- session start --------------------------------------------------------

  /** Create a session and load its first item. Valid from "idle" only. */
  async start(): Promise<void> {
    if (this.state.stage !== "idle") {
      return;
    }
    await this.doStart();
  }

  private async doStart(): Promise<void> {
    this.update({ stage: "starting", error: null });
    let sessionId: string;
    try {
      sessionId = await this.api.createSession(this.options);
    } catch (err) {
      this.fail("start", err);
      return;
    }
    this.update({ sessionId });
    await this.fetchNext();
  }

  // -- item flow -------------------------------------------------------------

  private async fetchNext(): Promise<void> {
    this.update({ stage: "loading", error: null });
    try {
      const outcome = await this.api.nextItem(this.state.sessionId as string);
      if (outcome.done) {
        await this.finish();
        return;
      }
      const item = outcome.item;
      this.servedIds.add(item.item_id);
      this.update({
        stage: "answering",
        item,
        phase: item.phase,
        pending: null,
        feedback: null,
        counters: this.countersSnapshot(),
      });
    } catch (err) {
      this.fail("next", err);
    }
  }

  /**
   * Record the user's answer for the current item. Accepted only while the
   * item is open for answering; returns false (and does nothing) otherwise,
   * which is what locks the controls between submission and feedback.
   */
  async choose(answer: string, usedAi: boolean): Promise<boolean> {
    if (this.state.stage !== "answering" || this.state.item === null) {
      return false;
    }
    const pending: PendingAnswer = {
      itemId: this.state.item.item_id,
      answer,
      usedAi,
    };
    this.update({ stage: "submitting", pending });
    await this.doSubmit();
    return true;
  }

  /** Adopt the AI's decision as the answer for the current item. */
  async useAi(): Promise<boolean> {
    const item = this.state.item;
    if (item === null || item.kind === "card" || item.ai_decision === undefined) {
      return false;
    }
    return this.choose(item.ai_decision, true);
  }

  /** Acknowledge the intro card (its only valid "answer"). */
  async acknowledgeCard(): Promise<boolean> {
    if (this.state.item === null || this.state.item.kind !== "card") {
      return false;
    }
    return this.choose("acknowledged", false);
  }

  private async doSubmit(): Promise<void> {
    const pending = this.state.pending as PendingAnswer;
    let outcome: AnswerOutcome;
    try {
      outcome = await this.api.submitAnswer(this.state.sessionId as string, {
        itemId: pending.itemId,
        answer: pending.answer,
        usedAi: pending.usedAi,
      });
    } catch (err) {
      // On a transport failure the pending answer is retained so retry()
      // re-sends the identical record; the service deduplicates on item id.
      this.fail("submit", err);
      return;
    }
    this.answeredIds.add(pending.itemId);
    const patch: Partial<ViewState> = {
      stage: "feedback",
      feedback: outcome.feedback,
      pending: null,
      counters: this.countersSnapshot(),
    };
    if (outcome.kind === "answered") {
      patch.phase = outcome.phase;
    }
    this.update(patch);
  }

  /** Move past the feedback view to the next item. Valid from "feedback". */
  async advance(): Promise<void> {
    if (this.state.stage !== "feedback") {
      return;
    }
    await this.fetchNext();
  }

  // -- completion ------------------------------------------------------------

  private async finish(): Promise<void> {
    let transcript: Transcript;
    try {
      transcript = await this.api.transcript(this.state.sessionId as string);
    } catch (err) {
      this.fail("transcript", err);
      return;
    }
    this.update({
      stage: "summary",
      phase: "done",
      item: null,
      feedback: null,
      transcript,
      counters: this.countersSnapshot(),
    });
  }

  // -- recovery ----------------------------------------------------------------

  /** Re-dispatch the operation that failed. Valid from "error" only. */
  async retry(): Promise<void> {
    if (this.state.stage !== "error" || this.state.error === null) {
      return;
    }
    const op = this.state.error.op;
    switch (op) {
      case "start":
        await this.doStart();
        return;
      case "next":
        await this.fetchNext();
        return;
      case "submit":
        this.update({ stage: "submitting", error: null });
        await this.doSubmit();
        return;
      case "transcript":
        this.update({ stage: "loading", error: null });
        await this.finish();
        return;
    }
  }

  // -- bookkeeping -------------------------------------------------------------

  private countersSnapshot(): ProgressCounters {
    const byPhase: Partial<Record<Phase, number>> = {};
    for (const itemId of this.answeredIds) {
      const phase = itemId.split(":")[0] as Phase;
      byPhase[phase] = (byPhase[phase] ?? 0) + 1;
    }
    return {
      served: this.servedIds.size,
      answered: this.answeredIds.size,
      byPhase,
    };
  }
}
