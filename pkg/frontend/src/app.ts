/** DOM shell for the annotation study: intro page with the opening survey,
 * query pages (anchor + shuffled body panels, skip always available, phase
 * progress), and the closing survey. */

import { ApiClient } from "./api.js";
import { renderScene } from "./render.js";
import { SessionController, type View } from "./session.js";
import type { ScenePayload } from "./types.js";

export interface AppHandle {
  controller: SessionController;
  /** Resolves when the latest user action (including re-render) settles. */
  idle: Promise<void>;
}

const INTRO_COPY =
  "You will compare short football scenes. Each page shows one reference " +
  "scene and eight candidates in random order; pick the candidate most " +
  "similar to the reference, or skip if none is. Paths fade toward the " +
  "past, so brighter means more recent.";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function surveyForm(
  questions: readonly string[],
  label: string,
  onSubmit: (answers: Record<string, string>) => void,
): HTMLElement {
  const form = el("form", "survey");
  const inputs = new Map<string, HTMLInputElement>();
  for (const q of questions) {
    const row = el("label", "survey-row", `${q}: `);
    const input = el("input");
    input.name = q;
    row.appendChild(input);
    form.appendChild(row);
    inputs.set(q, input);
  }
  const submit = el("button", "survey-submit", label);
  submit.type = "submit";
  form.appendChild(submit);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const answers: Record<string, string> = {};
    for (const [q, input] of inputs) answers[q] = input.value;
    onSubmit(answers);
  });
  return form;
}

function scenePanel(payload: ScenePayload | Error, caption: string): HTMLElement {
  const panel = el("figure", "panel");
  if (payload instanceof Error) {
    const err = el("div", "panel-error", `could not display scene: ${payload.message}`);
    panel.appendChild(err);
  } else {
    const mount = el("div", "panel-svg");
    try {
      mount.innerHTML = renderScene(payload);
    } catch (e) {
      panel.appendChild(
        el("div", "panel-error", `could not display scene: ${(e as Error).message}`),
      );
      panel.appendChild(el("figcaption", "panel-caption", caption));
      return panel;
    }
    panel.appendChild(mount);
  }
  panel.appendChild(el("figcaption", "panel-caption", caption));
  return panel;
}

export function mountApp(root: HTMLElement, api: ApiClient): AppHandle {
  const controller = new SessionController(api);
  const handle: AppHandle = { controller, idle: Promise.resolve() };

  const run = (action: () => Promise<void>): void => {
    handle.idle = handle.idle.then(action).catch((e) => {
      root.replaceChildren(
        el("div", "fatal-error", `something went wrong: ${(e as Error).message}`),
      );
    });
  };

  const render = async (view: View): Promise<void> => {
    switch (view.kind) {
      case "intro":
        return renderIntro(view);
      case "query":
        return renderQuery(view);
      case "closing":
        return renderClosing(view);
      case "done":
        root.replaceChildren(
          el("div", "done", "All done - thank you for participating!"),
        );
    }
  };

  const renderIntro = async (view: View & { kind: "intro" }): Promise<void> => {
    const page = el("section", "page intro");
    page.appendChild(el("h1", undefined, "Scene similarity study"));
    page.appendChild(el("p", "intro-copy", INTRO_COPY));
    page.appendChild(
      surveyForm(view.questions, "Start annotating", (answers) =>
        run(async () => render(await controller.submitIntroSurvey(answers))),
      ),
    );
    root.replaceChildren(page);
  };

  const renderQuery = async (view: View & { kind: "query" }): Promise<void> => {
    const page = el("section", "page query");
    page.appendChild(
      el(
        "div",
        "progress",
        `phase ${view.phase} (${view.phaseIndex + 1}/${view.phaseCount})`,
      ),
    );

    const fetchPanel = (id: string): Promise<ScenePayload | Error> =>
      api.scene(id).catch((e: Error) => e);
    const [headScene, ...bodyScenes] = await Promise.all([
      fetchPanel(view.head),
      ...view.panels.map(fetchPanel),
    ]);

    const anchor = el("div", "anchor");
    anchor.appendChild(scenePanel(headScene, "reference"));
    page.appendChild(anchor);

    const grid = el("div", "body-grid");
    bodyScenes.forEach((scene, screenIndex) => {
      const button = el("button", "panel-choice");
      button.type = "button";
      button.dataset.screenIndex = String(screenIndex);
      button.appendChild(scenePanel(scene, `candidate ${screenIndex + 1}`));
      button.addEventListener("click", () =>
        run(async () => render(await controller.choose(screenIndex))),
      );
      grid.appendChild(button);
    });
    page.appendChild(grid);

    const skip = el("button", "skip", "Skip - none is similar");
    skip.type = "button";
    skip.addEventListener("click", () =>
      run(async () => render(await controller.skip())),
    );
    page.appendChild(skip);

    root.replaceChildren(page);
    // Panels are in the DOM; response timing starts now.
    controller.markRendered();
  };

  const renderClosing = async (view: View & { kind: "closing" }): Promise<void> => {
    const page = el("section", "page closing");
    page.appendChild(el("h1", undefined, "Almost done"));
    page.appendChild(
      surveyForm(view.questions, "Finish", (answers) =>
        run(async () => render(await controller.submitClosingSurvey(answers))),
      ),
    );
    root.replaceChildren(page);
  };

  run(async () => render(await controller.begin()));
  return handle;
}
