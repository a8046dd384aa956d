/**
 * Typed client for the onboarding service HTTP API.
 *
 * Every payload — success or error — carries a top-level protocol version
 * "v". A response with any other version is rejected with
 * UnsupportedVersionError so the caller can show a blocking error view
 * instead of misreading the body. Transport failures surface as
 * NetworkError (retryable); structured service errors as ApiError.
 *
 * This module is the frontend's only network surface: it talks to the
 * onboarding service endpoints and nothing else.
 */

export const SUPPORTED_VERSION = 1;

export type Phase =
  | "intro"
  | "practice"
  | "teaching"
  | "second_pass"
  | "testing"
  | "done";

export interface ExampleView {
  id: string;
  text: string | null;
  metadata: Record<string, string>;
}

export interface PerformanceSummary {
  metric?: string;
  value?: number;
}

export interface SubgroupRow {
  subgroup: string;
  accuracy: number;
  count: number;
}

export interface HumanAICard {
  ai_input: string;
  ai_output: string;
  training_data_source: string;
  pretraining_data_source: string;
  training_objective: string;
  average_ai_performance: PerformanceSummary;
  average_human_performance: PerformanceSummary;
  subgroup_rows: SubgroupRow[];
}

export interface Recommendation {
  decision: 0 | 1;
  region_id: number;
  description: string | null;
  stats: Record<string, unknown>;
}

/** Intro item: the human-AI briefing card, acknowledged rather than answered. */
export interface CardItem {
  item_id: string;
  phase: "intro";
  kind: "card";
  card: HumanAICard;
  incomplete_fields: string[];
}

/** Teaching or second-pass item: one region's representative example. */
export interface LessonItem {
  item_id: string;
  phase: "teaching" | "second_pass";
  kind: "lesson";
  lesson_index: number;
  example: ExampleView;
  ai_decision: string;
  labels: string[];
}

/** Practice or testing item. Testing adds the AI's answer and, on covered
 * examples, an integration recommendation. */
export interface ExampleItem {
  item_id: string;
  phase: "practice" | "testing";
  kind: "example";
  example: ExampleView;
  labels: string[];
  ai_decision?: string;
  recommendation?: Recommendation;
}

export type ItemPayload = CardItem | LessonItem | ExampleItem;

export interface RegionReveal {
  region_id: number;
  decision: 0 | 1;
  description: string | null;
  human_accuracy: number;
  ai_accuracy: number;
  gallery: string[];
}

/** Answer feedback. Practice carries correctness and the true label; lessons
 * add the AI's correctness and the region reveal; intro and testing items
 * are acknowledged with recorded=true only. */
export interface Feedback {
  recorded?: boolean;
  user_correct?: boolean;
  ai_correct?: boolean;
  label?: string;
  reveal?: RegionReveal;
}

export type AnswerOutcome =
  | { kind: "answered"; feedback: Feedback; phase: Phase }
  | { kind: "already_answered"; feedback: Feedback };

export type NextOutcome = { done: true } | { done: false; item: ItemPayload };

export interface TranscriptSummary {
  accuracy: number | null;
  ai_reliance: number | null;
  mean_seconds_per_item: number | null;
}

export interface TranscriptEvent {
  index: number;
  item_id: string;
  phase: Phase;
  answer: string;
  used_ai: boolean;
  user_correct: boolean | null;
  ai_correct: boolean | null;
  served_at: number;
  answered_at: number;
}

export interface Transcript {
  session_id: string;
  options: Record<string, unknown>;
  phase: Phase;
  second_pass_queue: number[];
  events: TranscriptEvent[];
  summary: TranscriptSummary;
}

export interface SessionOptions {
  n_practice?: number;
  n_test?: number;
  show_recommendations?: boolean;
  seed?: number;
}

export interface AnswerRequest {
  itemId: string;
  answer: string;
  usedAi: boolean;
}

export interface RecommendLookup {
  example_id: string;
  covered: boolean;
  recommendation: Recommendation | null;
}

/** The transport failed before a structured response arrived; safe to retry. */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

/** The service answered with a protocol version this client does not speak. */
export class UnsupportedVersionError extends Error {
  constructor(version: unknown) {
    super(
      `service answered with protocol version ${JSON.stringify(version)}; ` +
        `this client supports version ${SUPPORTED_VERSION}`,
    );
    this.name = "UnsupportedVersionError";
  }
}

/** A structured error response from the service. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly reason: string;

  constructor(status: number, code: string, reason: string) {
    super(`${code} (${status}): ${reason}`);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
    this.reason = reason;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

interface Envelope {
  status: number;
  doc: Record<string, unknown>;
}

/** The slice of the client the session controller depends on. */
export interface OnboardingApi {
  createSession(options: SessionOptions): Promise<string>;
  nextItem(sessionId: string): Promise<NextOutcome>;
  submitAnswer(sessionId: string, request: AnswerRequest): Promise<AnswerOutcome>;
  transcript(sessionId: string): Promise<Transcript>;
}

export class ServiceClient implements OnboardingApi {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
  ): Promise<Envelope> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      const detail = err instanceof Error ? err.message : String(err);
      throw new NetworkError(`${method} ${path} failed: ${detail}`);
    }
    let doc: unknown;
    try {
      doc = await response.json();
    } catch {
      throw new NetworkError(`${method} ${path}: response body was not JSON`);
    }
    if (typeof doc !== "object" || doc === null) {
      throw new UnsupportedVersionError(undefined);
    }
    const envelope = doc as Record<string, unknown>;
    if (envelope.v !== SUPPORTED_VERSION) {
      throw new UnsupportedVersionError(envelope.v);
    }
    return { status: response.status, doc: envelope };
  }

  private static errorFrom(envelope: Envelope): ApiError {
    const code = typeof envelope.doc.error === "string" ? envelope.doc.error : "unknown";
    const reason =
      typeof envelope.doc.reason === "string" ? envelope.doc.reason : "no reason given";
    return new ApiError(envelope.status, code, reason);
  }

  async createSession(options: SessionOptions = {}): Promise<string> {
    const envelope = await this.request("POST", "/sessions", { options });
    if (envelope.status !== 201) {
      throw ServiceClient.errorFrom(envelope);
    }
    return envelope.doc.session_id as string;
  }

  async nextItem(sessionId: string): Promise<NextOutcome> {
    const envelope = await this.request("GET", `/sessions/${sessionId}/next`);
    if (envelope.status === 200) {
      return { done: false, item: envelope.doc.item as unknown as ItemPayload };
    }
    if (envelope.status === 409 && envelope.doc.error === "done") {
      return { done: true };
    }
    throw ServiceClient.errorFrom(envelope);
  }

  async submitAnswer(
    sessionId: string,
    request: AnswerRequest,
  ): Promise<AnswerOutcome> {
    const envelope = await this.request("POST", `/sessions/${sessionId}/answer`, {
      answer: request.answer,
      used_ai: request.usedAi,
      item_id: request.itemId,
    });
    if (envelope.status === 200) {
      return {
        kind: "answered",
        feedback: envelope.doc.feedback as Feedback,
        phase: envelope.doc.phase as Phase,
      };
    }
    if (envelope.status === 409 && envelope.doc.error === "already_answered") {
      // The answer was applied on a previous attempt whose response we never
      // saw; the service hands back the original feedback so the retry is a
      // clean no-op rather than a duplicate record.
      return {
        kind: "already_answered",
        feedback: envelope.doc.feedback as Feedback,
      };
    }
    throw ServiceClient.errorFrom(envelope);
  }

  async transcript(sessionId: string): Promise<Transcript> {
    const envelope = await this.request("GET", `/sessions/${sessionId}/transcript`);
    if (envelope.status !== 200) {
      throw ServiceClient.errorFrom(envelope);
    }
    const { v: _v, ...rest } = envelope.doc;
    return rest as unknown as Transcript;
  }

  async card(): Promise<{ card: HumanAICard; incomplete_fields: string[] }> {
    const envelope = await this.request("GET", "/card");
    if (envelope.status !== 200) {
      throw ServiceClient.errorFrom(envelope);
    }
    return {
      card: envelope.doc.card as HumanAICard,
      incomplete_fields: envelope.doc.incomplete_fields as string[],
    };
  }

  async recommendExample(exampleId: string): Promise<RecommendLookup> {
    const envelope = await this.request(
      "GET",
      `/recommend?example_id=${encodeURIComponent(exampleId)}`,
    );
    if (envelope.status !== 200) {
      throw ServiceClient.errorFrom(envelope);
    }
    return {
      example_id: envelope.doc.example_id as string,
      covered: envelope.doc.covered as boolean,
      recommendation: (envelope.doc.recommendation ?? null) as Recommendation | null,
    };
  }

  async health(): Promise<{ status: string; regions: number; examples: number }> {
    const envelope = await this.request("GET", "/health");
    if (envelope.status !== 200) {
      throw ServiceClient.errorFrom(envelope);
    }
    return {
      status: envelope.doc.status as string,
      regions: envelope.doc.regions as number,
      examples: envelope.doc.examples as number,
    };
  }
}
