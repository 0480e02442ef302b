// @vitest-environment happy-dom
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeEach, describe, expect, it } from "vitest";

import { App } from "../src/app.js";
import { ApiClient } from "../src/api.js";
import { renderLineChart } from "../src/charts.js";

const HERE = dirname(fileURLToPath(import.meta.url));

function mountConsole(): App {
  const html = readFileSync(join(HERE, "..", "static", "index.html"), "utf-8");
  const body = html.slice(html.indexOf("<body>") + 6, html.indexOf("</body>"));
  document.body.innerHTML = body;
  const app = new App(document, new ApiClient("http://127.0.0.1:1"));
  app.bind();
  return app;
}

describe("modification form", () => {
  beforeEach(() => {
    mountConsole();
  });

  it("shows the amplitude field only for noise kinds", () => {
    const kindSelect = document.getElementById("mod-kind") as HTMLSelectElement;
    const amplitudeField = document.getElementById("amplitude-field") as HTMLElement;
    const cases: [string, boolean][] = [
      ["uniform_noise", true],
      ["gaussian_noise", true],
      ["replace_mean", false],
      ["replace_zeros", false],
    ];
    for (const [kind, visible] of cases) {
      kindSelect.value = kind;
      kindSelect.dispatchEvent(new Event("change"));
      expect(amplitudeField.hidden).toBe(!visible);
    }
  });

  it("reads the form into a modification payload, zeroing amplitude for replacements", () => {
    const app = mountConsole();
    (document.getElementById("mod-feature") as HTMLInputElement).value = "3";
    (document.getElementById("mod-start") as HTMLInputElement).value = "5";
    (document.getElementById("mod-end") as HTMLInputElement).value = "25";
    (document.getElementById("mod-amplitude") as HTMLInputElement).value = "0.7";
    (document.getElementById("mod-kind") as HTMLSelectElement).value = "replace_zeros";
    expect(app.readFormModification()).toEqual({
      feature: 3,
      start: 5,
      end: 25,
      kind: "replace_zeros",
      amplitude: 0,
      seed: 0,
    });
    (document.getElementById("mod-kind") as HTMLSelectElement).value = "gaussian_noise";
    expect(app.readFormModification().amplitude).toBe(0.7);
  });

  it("surfaces client-side validation without calling the API", () => {
    const app = mountConsole();
    app.state.geometry = { N: 50, J: 14, Z: 5, X: 45 };
    app.state.sessionId = "fake";
    (document.getElementById("mod-feature") as HTMLInputElement).value = "99";
    void app.applyFormModification();
    expect(document.getElementById("status")!.textContent).toMatch(/feature/);
  });
});

describe("charts", () => {
  it("renders exactly the windowed number of points", () => {
    mountConsole();
    const container = document.getElementById("timestep-chart") as HTMLElement;
    const values = Array.from({ length: 20 }, (_, i) => Math.sin(i / 3));
    renderLineChart(container, [{ name: "original", values, color: "#123456", startIndex: 10 }]);
    const dots = container.querySelectorAll("circle.dot");
    expect(dots).toHaveLength(20);
    expect(dots[0].getAttribute("data-step")).toBe("10");
    expect(dots[19].getAttribute("data-step")).toBe("29");
  });

  it("overlays multiple series as separate polylines", () => {
    mountConsole();
    const container = document.getElementById("timestep-chart") as HTMLElement;
    renderLineChart(container, [
      { name: "original", values: [1, 2, 3], color: "#808080" },
      { name: "modified", values: [2, 1, 0], color: "#d95f02" },
    ]);
    const lines = container.querySelectorAll("polyline.series");
    expect(lines).toHaveLength(2);
    expect(lines[0].getAttribute("data-name")).toBe("original");
    expect(lines[1].getAttribute("data-name")).toBe("modified");
  });
});
