// Bootstrap: wire the session state machine to the page. The service base
// URL comes from the ?api= query parameter and defaults to same-origin.

import { ReviewApi } from "./api.js";
import { ReviewSession } from "./state.js";
import { highlightCaption, renderClues, renderStats } from "./render.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "";
const reviewer = params.get("reviewer") ?? "anonymous";

const api = new ReviewApi(baseUrl);
const session = new ReviewSession(api, reviewer);

const $ = (id: string) => document.getElementById(id) as HTMLElement;

function render(): void {
  const screen = session.screen;
  $("loading").hidden = screen.kind !== "loading";
  $("done").hidden = screen.kind !== "done";
  $("error").hidden = screen.kind !== "network-error";
  $("review").hidden = screen.kind !== "review";
  $("stats").innerHTML = renderStats(session.stats);

  if (screen.kind === "network-error") {
    $("error-message").textContent = screen.message;
    return;
  }
  if (screen.kind !== "review" || session.item === null) return;

  const item = session.item;
  $("clip-id").textContent = item.clip_id;
  $("caption").innerHTML = highlightCaption(item.caption,
                                            item.flags.inaudible_terms);
  $("clues").innerHTML = renderClues(item.clues);

  const editor = $("editor") as HTMLTextAreaElement;
  $("edit-panel").hidden = !session.form.editing;
  if (editor.value !== session.form.editBuffer) {
    editor.value = session.form.editBuffer;
  }
  $("modified-count").textContent = String(session.effectiveModifiedCount());

  ($("verdict-correspond") as HTMLInputElement).checked =
    session.form.verdict === "correspond";
  ($("verdict-not-correspond") as HTMLInputElement).checked =
    session.form.verdict === "not_correspond";
  ($("inaudible") as HTMLInputElement).checked = session.form.inaudible;
  ($("submit") as HTMLButtonElement).disabled = !session.canSubmit();

  const inline = $("inline-error");
  inline.hidden = session.inlineError === null;
  inline.textContent = session.inlineError ?? "";
}

function bind(): void {
  $("verdict-correspond").addEventListener("change", () => {
    session.setVerdict("correspond");
    render();
  });
  $("verdict-not-correspond").addEventListener("change", () => {
    session.setVerdict("not_correspond");
    render();
  });
  $("edit-toggle").addEventListener("click", () => {
    if (session.form.editing) session.cancelEditing();
    else session.startEditing();
    render();
  });
  $("editor").addEventListener("input", (event) => {
    session.setEditBuffer((event.target as HTMLTextAreaElement).value);
    session.setCountOverride(null);
    render();
  });
  $("modified-count-override").addEventListener("input", (event) => {
    const raw = (event.target as HTMLInputElement).value;
    session.setCountOverride(raw === "" ? null : Number(raw));
    render();
  });
  $("inaudible").addEventListener("change", (event) => {
    session.setInaudible((event.target as HTMLInputElement).checked);
    render();
  });
  $("submit").addEventListener("click", () => {
    void session.submit().then(render);
    render();
  });
  $("retry").addEventListener("click", () => {
    void session.loadNext().then(render);
    render();
  });
}

bind();
void session.loadNext().then(render);
render();
