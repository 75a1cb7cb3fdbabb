/** Wiring: poller feeds the store, the store re-renders, one delegated click
 * handler dispatches actions. A dispatch performs exactly one API call and
 * changes nothing locally; the effect (or the conflict) arrives with the
 * next poll. */

import { ApiClient, ApiError, type FetchLike } from "./api.js";
import { Poller, Store } from "./poll.js";
import { renderApp } from "./render.js";
import type { ActionName, Snapshot } from "./types.js";

export type App = {
  store: Store;
  poller: Poller;
  dispatch: (action: ActionName, target: string) => Promise<void>;
  start: () => void;
  stop: () => void;
};

export function createApp(
  root: HTMLElement,
  baseUrl: string,
  fetchFn: FetchLike,
  intervalMs = 1000,
): App {
  const client = new ApiClient(baseUrl, fetchFn);
  const store = new Store();
  const poller = new Poller(client, store, intervalMs);

  store.subscribe((snapshot: Snapshot) => {
    root.innerHTML = renderApp(snapshot);
  });

  async function dispatch(action: ActionName, target: string): Promise<void> {
    try {
      await client.dispatch(action, target);
      store.setError(null); // a fresh poll will surface the effect
    } catch (error) {
      if (error instanceof ApiError) {
        store.setError(`${error.errorType}: ${error.detail}`); // server message, verbatim
      } else {
        store.setError(String(error));
      }
    }
  }

  root.addEventListener("click", (event: Event) => {
    const element = event.target as HTMLElement | null;
    const actionButton = element?.closest<HTMLButtonElement>("button[data-action]");
    if (actionButton) {
      if (actionButton.disabled) return;
      const action = actionButton.dataset["action"] as ActionName;
      const target = actionButton.dataset["target"] ?? "";
      void dispatch(action, target);
      return;
    }
    if (element?.closest("button[data-action-dismiss]")) {
      store.setError(null);
    }
  });

  return {
    store,
    poller,
    dispatch,
    start: () => poller.start(),
    stop: () => poller.stop(),
  };
}
