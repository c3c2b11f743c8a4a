/** DOM glue: mounts the console, wires events, polls the API. */

import { HttpApi } from "./api.js";
import { Console } from "./controller.js";
import { appHtml } from "./views.js";

const REFRESH_MS = 5000;

export function mount(root: HTMLElement, baseUrl = ""): Console {
  const api = new HttpApi(baseUrl);
  const console_ = new Console(api, (state) => {
    root.innerHTML = appHtml(state, new Date().toISOString());
  });

  root.addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>("[data-role='queue-row']");
    if (row?.dataset.id) {
      void console_.select(row.dataset.id);
    }
  });

  root.addEventListener("change", (event) => {
    const el = event.target as HTMLSelectElement | HTMLInputElement;
    if (el.dataset.role === "status-filter") {
      console_.setFilters({ status: el.value as "pending" | "resolved" });
    } else if (el.dataset.role === "message-filter") {
      console_.setFilters({ message: el.value.trim() === "" ? "all" : el.value });
    }
  });

  root.addEventListener("submit", (event) => {
    const form = (event.target as HTMLElement).closest<HTMLFormElement>("[data-role='verdict-form']");
    if (!form) return;
    event.preventDefault();
    const data = new FormData(form);
    const id = form.dataset.id ?? "";
    void console_.submitVerdict(
      id,
      Number(data.get("label") ?? 0),
      String(data.get("note") ?? ""),
      String(data.get("analyst") ?? ""),
    );
  });

  const tick = () => {
    void console_.refreshQueue();
    void console_.refreshReport();
    void console_.retryPending();
  };
  tick();
  setInterval(tick, REFRESH_MS);
  return console_;
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    mount(root, "");
  }
}
