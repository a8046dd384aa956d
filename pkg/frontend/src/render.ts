/**
 * DOM renderer for the onboarding flow.
 *
 * Pure projection of ViewState onto the page: every state change rebuilds
 * the view from scratch, so what is on screen is always exactly what the
 * controller says. Interaction rules the renderer upholds:
 *
 *  - practice items never show the AI's output;
 *  - teaching and testing items show the AI's decision and a "use AI"
 *    action that submits the answer with used_ai set;
 *  - a testing item's recommendation banner appears only when the payload
 *    carries one;
 *  - answer controls are disabled while a submission is in flight, and the
 *    feedback panel replaces them once it lands;
 *  - a protocol or service error renders a blocking view with no actions.
 */

import type {
  CardItem,
  ExampleItem,
  ExampleView,
  Feedback,
  HumanAICard,
  ItemPayload,
  LessonItem,
  RegionReveal,
  Transcript,
} from "./api.js";
import type { SessionController, ViewState } from "./state.js";

// ---------------------------------------------------------------------------
// Element helper
// ---------------------------------------------------------------------------

type Attrs = Record<string, string | number | boolean | null | undefined>;
type Child = Node | string | null;

function el(tag: string, attrs: Attrs = {}, children: Child[] = []): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value === null || value === undefined || value === false) {
      continue;
    }
    if (value === true) {
      node.setAttribute(key, "");
    } else {
      node.setAttribute(key, String(value));
    }
  }
  for (const child of children) {
    if (child === null) {
      continue;
    }
    node.append(child);
  }
  return node;
}

function percent(value: number | null | undefined): string {
  if (value === null || value === undefined || Number.isNaN(value)) {
    return "–";
  }
  return `${Math.round(value * 1000) / 10}%`;
}

// ---------------------------------------------------------------------------
// Shared fragments
// ---------------------------------------------------------------------------

const PHASE_TITLES: Record<string, string> = {
  intro: "Before you start",
  practice: "Warm-up: answer on your own",
  teaching: "Lessons: where the AI helps and where it doesn't",
  second_pass: "Second look: lessons to revisit",
  testing: "Now decide: your answer or the AI's",
  done: "Session complete",
};

function progressHeader(state: ViewState): HTMLElement {
  const { counters, phase } = state;
  return el("header", { class: "progress" }, [
    el("span", { class: "phase-label", "data-phase": phase ?? "" }, [
      PHASE_TITLES[phase ?? ""] ?? "",
    ]),
    el("span", { class: "progress-count" }, [
      `${counters.answered} answered · ${counters.served} seen`,
    ]),
  ]);
}

function exampleBlock(example: ExampleView): HTMLElement {
  const metadata = Object.entries(example.metadata);
  return el("section", { class: "example", "data-example-id": example.id }, [
    el("p", { class: "example-text" }, [example.text ?? "(no text for this example)"]),
    metadata.length === 0
      ? null
      : el(
          "dl",
          { class: "example-meta" },
          metadata.flatMap(([key, value]) => [
            el("dt", {}, [key]),
            el("dd", {}, [value]),
          ]),
        ),
  ]);
}

function answerButtons(labels: string[], disabled: boolean): HTMLElement {
  return el(
    "div",
    { class: "answer-row", role: "group", "aria-label": "your answer" },
    labels.map((label, index) =>
      el(
        "button",
        {
          class: "answer-btn",
          "data-label": label,
          disabled,
          title: `shortcut: ${index + 1}`,
        },
        [label],
      ),
    ),
  );
}

function aiSection(aiDecision: string, disabled: boolean): HTMLElement {
  return el("section", { class: "ai-section" }, [
    el("p", { class: "ai-decision" }, [`The AI answers: ${aiDecision}`]),
    el(
      "button",
      { class: "use-ai", disabled, title: "shortcut: a" },
      ["Use the AI's answer"],
    ),
  ]);
}

// ---------------------------------------------------------------------------
// Item views
// ---------------------------------------------------------------------------

function cardTable(card: HumanAICard): HTMLElement {
  const rows: Array<[string, string]> = [
    ["Reads", card.ai_input],
    ["Produces", card.ai_output],
    ["Trained on", card.training_data_source],
    ["Pretrained on", card.pretraining_data_source],
    ["Objective", card.training_objective],
  ];
  const perf = (label: string, summary: { metric?: string; value?: number }) =>
    el("tr", {}, [
      el("th", {}, [label]),
      el("td", {}, [
        summary.value === undefined
          ? "–"
          : `${percent(summary.value)} ${summary.metric ?? ""}`.trim(),
      ]),
    ]);
  return el("table", { class: "card-table" }, [
    el(
      "tbody",
      {},
      rows
        .map(([label, value]) =>
          el("tr", {}, [
            el("th", {}, [label]),
            el("td", {}, [value === "" ? "–" : value]),
          ]),
        )
        .concat([
          perf("AI on average", card.average_ai_performance),
          perf("People on average", card.average_human_performance),
        ]),
    ),
  ]);
}

function subgroupList(card: HumanAICard): HTMLElement | null {
  if (card.subgroup_rows.length === 0) {
    return null;
  }
  return el("section", { class: "subgroups" }, [
    el("h3", {}, ["Where the AI differs from its average"]),
    el(
      "ul",
      {},
      card.subgroup_rows.map((row) =>
        el("li", { class: "subgroup-row" }, [
          `${row.subgroup}: ${percent(row.accuracy)} AI accuracy over ${row.count} examples`,
        ]),
      ),
    ),
  ]);
}

function cardView(item: CardItem, disabled: boolean): HTMLElement {
  return el("article", { class: "item card-item" }, [
    el("h2", {}, ["How this AI works"]),
    cardTable(item.card),
    subgroupList(item.card),
    item.incomplete_fields.length === 0
      ? null
      : el("p", { class: "card-incomplete" }, [
          `Not yet documented: ${item.incomplete_fields.join(", ")}`,
        ]),
    el("button", { class: "acknowledge", disabled }, ["Got it — start"]),
  ]);
}

function lessonView(item: LessonItem, disabled: boolean): HTMLElement {
  return el("article", { class: "item lesson-item" }, [
    el("h2", {}, [`Lesson ${item.lesson_index + 1}`]),
    el("p", { class: "lesson-hint" }, [
      "Answer yourself or adopt the AI's answer — you'll see how both did.",
    ]),
    exampleBlock(item.example),
    aiSection(item.ai_decision, disabled),
    answerButtons(item.labels, disabled),
  ]);
}

function practiceView(item: ExampleItem, disabled: boolean): HTMLElement {
  // Deliberately no AI output here: warm-up measures the user alone.
  return el("article", { class: "item practice-item" }, [
    el("h2", {}, ["Your call"]),
    exampleBlock(item.example),
    answerButtons(item.labels, disabled),
  ]);
}

function recommendationBanner(item: ExampleItem): HTMLElement | null {
  const rec = item.recommendation;
  if (rec === undefined) {
    return null;
  }
  const advice =
    rec.decision === 1
      ? "On examples like this one, the AI is usually right — leaning on its answer is recommended."
      : "On examples like this one, people usually beat the AI — deciding yourself is recommended.";
  return el("aside", { class: "recommendation-banner", "data-region-id": rec.region_id }, [
    el("strong", {}, ["Guidance"]),
    el("p", {}, [advice]),
    rec.description === null ? null : el("p", { class: "rec-description" }, [rec.description]),
  ]);
}

function testingView(item: ExampleItem, disabled: boolean): HTMLElement {
  return el("article", { class: "item testing-item" }, [
    el("h2", {}, ["Final answer"]),
    recommendationBanner(item),
    exampleBlock(item.example),
    item.ai_decision === undefined ? null : aiSection(item.ai_decision, disabled),
    answerButtons(item.labels, disabled),
  ]);
}

function itemView(item: ItemPayload, disabled: boolean): HTMLElement {
  switch (item.kind) {
    case "card":
      return cardView(item, disabled);
    case "lesson":
      return lessonView(item, disabled);
    case "example":
      return item.phase === "practice"
        ? practiceView(item, disabled)
        : testingView(item, disabled);
  }
}

// ---------------------------------------------------------------------------
// Feedback views
// ---------------------------------------------------------------------------

function revealView(reveal: RegionReveal): HTMLElement {
  const who =
    reveal.decision === 1
      ? "the AI is the stronger decider"
      : "people are the stronger deciders";
  return el("section", { class: "region-reveal", "data-region-id": reveal.region_id }, [
    el("h3", {}, [`This example sits in a region where ${who}`]),
    reveal.description === null
      ? null
      : el("p", { class: "reveal-description" }, [reveal.description]),
    el("p", { class: "reveal-stats" }, [
      `Here, people get ${percent(reveal.human_accuracy)} right; the AI gets ${percent(
        reveal.ai_accuracy,
      )}.`,
    ]),
    reveal.gallery.length === 0
      ? null
      : el("section", { class: "gallery" }, [
          el("h4", {}, ["More examples from this region"]),
          el(
            "ul",
            {},
            reveal.gallery.map((id) =>
              el("li", { class: "gallery-item", "data-example-id": id }, [id]),
            ),
          ),
        ]),
  ]);
}

function feedbackView(state: ViewState): HTMLElement {
  const feedback = state.feedback as Feedback;
  const pieces: Child[] = [];
  if (feedback.user_correct !== undefined) {
    pieces.push(
      el("p", { class: feedback.user_correct ? "verdict right" : "verdict wrong" }, [
        feedback.user_correct ? "You got it right." : "You got it wrong.",
      ]),
    );
  }
  if (feedback.ai_correct !== undefined) {
    pieces.push(
      el("p", { class: feedback.ai_correct ? "ai-verdict right" : "ai-verdict wrong" }, [
        feedback.ai_correct ? "The AI got it right." : "The AI got it wrong.",
      ]),
    );
  }
  if (feedback.label !== undefined) {
    pieces.push(el("p", { class: "true-label" }, [`Correct answer: ${feedback.label}`]));
  }
  if (feedback.recorded === true && pieces.length === 0) {
    pieces.push(el("p", { class: "recorded" }, ["Answer recorded."]));
  }
  if (feedback.reveal !== undefined) {
    pieces.push(revealView(feedback.reveal));
  }
  pieces.push(
    el("button", { class: "advance", title: "shortcut: Enter" }, ["Continue"]),
  );
  return el("section", { class: "feedback" }, pieces);
}

// ---------------------------------------------------------------------------
// Terminal views
// ---------------------------------------------------------------------------

function summaryView(transcript: Transcript): HTMLElement {
  const summary = transcript.summary;
  const stat = (
    label: string,
    attr: string,
    value: number | null,
    render: (v: number) => string,
  ) =>
    el("div", { class: "stat", [attr]: value === null ? "" : String(value) }, [
      el("span", { class: "stat-label" }, [label]),
      el("span", { class: "stat-value" }, [value === null ? "–" : render(value)]),
    ]);
  return el("article", { class: "item summary" }, [
    el("h2", {}, ["Session complete"]),
    el("div", { class: "stats" }, [
      stat("Accuracy on scored items", "data-accuracy", summary.accuracy, percent),
      stat("How often you used the AI", "data-reliance", summary.ai_reliance, percent),
      stat(
        "Average seconds per item",
        "data-mean-seconds",
        summary.mean_seconds_per_item,
        (v) => `${Math.round(v * 10) / 10}s`,
      ),
    ]),
    el("p", { class: "summary-note" }, [
      `${transcript.events.length} answers recorded for session ${transcript.session_id}.`,
    ]),
  ]);
}

function errorView(state: ViewState): HTMLElement {
  const error = state.error;
  return el("section", { class: "error" }, [
    el("h2", {}, ["Connection trouble"]),
    el("p", { class: "error-message" }, [error?.message ?? "request failed"]),
    el("p", {}, [
      state.pending === null
        ? "Nothing was lost — retry when you're back online."
        : "Your answer is saved locally and will be sent once — retry when you're back online.",
    ]),
    el("button", { class: "retry" }, ["Retry"]),
  ]);
}

function fatalView(state: ViewState): HTMLElement {
  return el("section", { class: "fatal", role: "alert" }, [
    el("h2", {}, ["Something is wrong with the service"]),
    el("p", { class: "error-message" }, [state.error?.message ?? "unsupported response"]),
    el("p", {}, ["Reload the page once the service is fixed."]),
  ]);
}

// ---------------------------------------------------------------------------
// Top-level render
// ---------------------------------------------------------------------------

/** Rebuild the whole app view for the given state and wire its actions. */
export function renderApp(
  root: HTMLElement,
  state: ViewState,
  controller: SessionController,
): void {
  root.textContent = "";
  const children: Child[] = [];

  switch (state.stage) {
    case "idle":
      children.push(
        el("section", { class: "welcome" }, [
          el("h1", {}, ["Working with your AI teammate"]),
          el("p", {}, [
            "A short session: a briefing card, warm-up questions, lessons on " +
              "where the AI succeeds or fails, then scored decisions.",
          ]),
          el("button", { id: "start" }, ["Start"]),
        ]),
      );
      break;
    case "starting":
    case "loading":
      children.push(progressHeader(state));
      children.push(el("p", { class: "loading" }, ["Loading…"]));
      break;
    case "answering":
    case "submitting": {
      children.push(progressHeader(state));
      const item = state.item as ItemPayload;
      const view = itemView(item, state.stage === "submitting");
      view.setAttribute("data-item-id", item.item_id);
      view.setAttribute("data-kind", item.kind);
      children.push(view);
      break;
    }
    case "feedback":
      children.push(progressHeader(state));
      if (state.item !== null) {
        const context = el("p", { class: "feedback-context" }, [
          `Example ${state.item.item_id}`,
        ]);
        context.setAttribute("data-item-id", state.item.item_id);
        children.push(context);
      }
      children.push(feedbackView(state));
      break;
    case "summary":
      children.push(progressHeader(state));
      children.push(summaryView(state.transcript as Transcript));
      break;
    case "error":
      children.push(errorView(state));
      break;
    case "fatal":
      children.push(fatalView(state));
      break;
  }

  for (const child of children) {
    if (child !== null) {
      root.append(child);
    }
  }
  wireActions(root, controller);
}

function wireActions(root: HTMLElement, controller: SessionController): void {
  root.querySelector<HTMLButtonElement>("#start")?.addEventListener("click", () => {
    void controller.start();
  });
  root
    .querySelector<HTMLButtonElement>(".acknowledge")
    ?.addEventListener("click", () => {
      void controller.acknowledgeCard();
    });
  for (const button of root.querySelectorAll<HTMLButtonElement>(".answer-btn")) {
    button.addEventListener("click", () => {
      const label = button.getAttribute("data-label");
      if (label !== null) {
        void controller.choose(label, false);
      }
    });
  }
  root.querySelector<HTMLButtonElement>(".use-ai")?.addEventListener("click", () => {
    void controller.useAi();
  });
  root.querySelector<HTMLButtonElement>(".advance")?.addEventListener("click", () => {
    void controller.advance();
  });
  root.querySelector<HTMLButtonElement>(".retry")?.addEventListener("click", () => {
    void controller.retry();
  });
}
