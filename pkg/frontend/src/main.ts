// Browser bootstrap: reads the base URL, mounts the console, exposes a tiny
// chrome (open-scenario field and feedback form) around the rendered views.

import { ConsoleApp } from "./app.js";
import { VacsimClient } from "./api.js";

declare global {
  interface Window {
    VACSIM_BASE_URL?: string;
  }
}

function baseUrl(): string {
  return (
    window.VACSIM_BASE_URL ??
    localStorage.getItem("vacsim-base-url") ??
    "http://localhost:8000"
  );
}

function mount(): void {
  const chrome = document.getElementById("chrome");
  const view = document.getElementById("view");
  if (!chrome || !view) throw new Error("index.html is missing #chrome or #view");

  const app = new ConsoleApp(view, new VacsimClient(baseUrl()));

  const idInput = document.createElement("input");
  idInput.placeholder = "scenario id, e.g. s0001";
  const openButton = document.createElement("button");
  openButton.textContent = "open";
  openButton.addEventListener("click", () => {
    if (idInput.value) void app.openScenario(idInput.value.trim());
  });
  const trainButton = document.createElement("button");
  trainButton.textContent = "train";
  trainButton.addEventListener("click", () => void app.train());
  chrome.append(idInput, openButton, trainButton);

  const feedbackDate = document.createElement("input");
  feedbackDate.placeholder = "feedback date (YYYY-MM-DD)";
  const feedbackObserved = document.createElement("input");
  feedbackObserved.placeholder = 'observed drops, e.g. {"valley": 500, "port": 120}';
  const feedbackButton = document.createElement("button");
  feedbackButton.textContent = "submit feedback";
  feedbackButton.addEventListener("click", () => {
    const observed = JSON.parse(feedbackObserved.value || "{}") as Record<string, number>;
    void app.submitFeedback(feedbackDate.value.trim(), observed);
  });
  chrome.append(feedbackDate, feedbackObserved, feedbackButton);
}

mount();
