/**
 * Entry point: wires the service client, session controller, renderer, and
 * global input handlers onto a root element.
 *
 * Keyboard shortcuts: the digit keys choose an answer (1 = first label,
 * 2 = second, …), "a" adopts the AI's answer where one is shown, and Enter
 * triggers the contextual action (start, acknowledge the card, continue
 * past feedback, or retry after a connection failure).
 */

import { ServiceClient } from "./api.js";
import type { OnboardingApi, SessionOptions } from "./api.js";
import { SessionController } from "./state.js";
import { renderApp } from "./render.js";

export interface BootstrapConfig {
  /** Service origin; empty string means same-origin. */
  baseUrl?: string;
  /** Preconstructed API (tests inject fakes here); overrides baseUrl. */
  api?: OnboardingApi;
  options?: SessionOptions;
}

function isTextEntry(target: EventTarget | null): boolean {
  return (
    target instanceof HTMLElement &&
    (target.tagName === "INPUT" || target.tagName === "TEXTAREA" || target.isContentEditable)
  );
}

/** Mount the onboarding flow on `root` and return its controller. */
export function bootstrap(
  root: HTMLElement,
  config: BootstrapConfig = {},
): SessionController {
  const api = config.api ?? new ServiceClient(config.baseUrl ?? "");
  const controller = new SessionController(api, config.options ?? {});

  controller.subscribe((state) => renderApp(root, state, controller));
  renderApp(root, controller.getState(), controller);

  root.ownerDocument.addEventListener("keydown", (event) => {
    if (!root.isConnected) {
      return; // the app this handler belongs to has been unmounted
    }
    if (event.altKey || event.ctrlKey || event.metaKey || isTextEntry(event.target)) {
      return;
    }
    const state = controller.getState();
    if (event.key >= "1" && event.key <= "9") {
      if (state.stage === "answering" && state.item !== null && state.item.kind !== "card") {
        const label = state.item.labels[Number(event.key) - 1];
        if (label !== undefined) {
          event.preventDefault();
          void controller.choose(label, false);
        }
      }
      return;
    }
    if (event.key === "a" || event.key === "A") {
      if (state.stage === "answering") {
        event.preventDefault();
        void controller.useAi();
      }
      return;
    }
    if (event.key === "Enter") {
      switch (state.stage) {
        case "idle":
          event.preventDefault();
          void controller.start();
          return;
        case "answering":
          if (state.item !== null && state.item.kind === "card") {
            event.preventDefault();
            void controller.acknowledgeCard();
          }
          return;
        case "feedback":
          event.preventDefault();
          void controller.advance();
          return;
        case "error":
          event.preventDefault();
          void controller.retry();
          return;
        default:
          return;
      }
    }
  });

  // A submission stranded by going offline retries itself on reconnect;
  // the item-id key keeps the eventual server-side record single.
  root.ownerDocument.defaultView?.addEventListener("online", () => {
    if (root.isConnected) {
      void controller.retry();
    }
  });

  return controller;
}
