import { ApiClient } from "./api.js";
import { App, AppState } from "./app.js";
import { slateToHtml, statusToHtml } from "./render.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("server") ?? "http://127.0.0.1:8765";

const root = document.getElementById("root")!;
const bannerEl = document.getElementById("banner")!;

function render(state: AppState): void {
  bannerEl.textContent = state.banner ?? "";
  bannerEl.style.display = state.banner ? "block" : "none";
  if (state.screen.kind === "slate") {
    root.innerHTML =
      `<h2>pick the state closest to your goal</h2>` +
      slateToHtml(state.screen.slate, state.screen.selected);
    for (const button of root.querySelectorAll<HTMLButtonElement>(".tile")) {
      button.addEventListener("click", () => {
        void app.choose(Number(button.dataset.choice));
      });
    }
  } else if (state.screen.status !== null) {
    root.innerHTML = `<h2>training</h2>` + statusToHtml(state.screen.status);
  } else {
    root.innerHTML = `<p class="muted">connecting to ${base} ...</p>`;
  }
}

const app = new App(new ApiClient(base), render);
app.start(1000);
render(app.state);
