import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import { SteeringApp } from "./state.js";

function boot(): void {
  const container = document.getElementById("app");
  const userInput = document.getElementById("user-id") as HTMLInputElement | null;
  const loadButton = document.getElementById("load-user");
  if (!container) return;

  let showRaw = false;
  const api = new ApiClient("");
  const app = new SteeringApp(api, 20, 300, (state) => {
    renderApp(container, state, handlers, showRaw);
  });
  const handlers = {
    onSlider: (tagId: number, value: number) => app.setSlider(tagId, value),
    onToggleRaw: () => {
      showRaw = !showRaw;
      if (app.state.userId) {
        void api.profile(app.state.userId, showRaw).then((profile) => {
          app.state.profile = profile;
          renderApp(container, app.state, handlers, showRaw);
        });
      }
    },
    onCommit: () => void app.commit(),
    onReset: () => void app.reset(),
  };

  const load = () => {
    const uid = userInput?.value.trim();
    if (uid) {
      void app.load(uid).catch((err) => {
        container.replaceChildren();
        const div = document.createElement("div");
        div.className = "toast error";
        div.textContent = `user not found: ${String(err)}`;
        container.appendChild(div);
      });
    }
  };
  loadButton?.addEventListener("click", load);
  userInput?.addEventListener("keydown", (e) => {
    if ((e as KeyboardEvent).key === "Enter") load();
  });

  const params = new URLSearchParams(window.location.search);
  const preset = params.get("user");
  if (preset && userInput) {
    userInput.value = preset;
    load();
  }
}

document.addEventListener("DOMContentLoaded", boot);
