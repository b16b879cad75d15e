// Message list (Sent / Pending / Success) and the config tab.

import { ConsoleStore } from "./store.js";
import { MessageEntry } from "./types.js";

function entryHtml(m: MessageEntry): string {
  const target = m.target === "all" ? "All" : `node ${m.target}`;
  const t = new Date(m.sentAt).toLocaleTimeString();
  return `<li>${m.command} → ${target} <span class="ts">${t}</span></li>`;
}

export function renderMessageList(root: HTMLElement, store: ConsoleStore): void {
  const sections: Array<[string, MessageEntry[]]> = [
    ["Sent", store.byState("sent")],
    ["Pending", store.byState("pending")],
    ["Success", store.byState("success")],
  ];
  root.innerHTML = sections
    .map(
      ([name, entries]) =>
        `<details ${name === "Success" ? "open" : ""}><summary>${name} ` +
        `(${entries.length})</summary><ul>` +
        entries.slice(-25).map(entryHtml).join("") +
        `</ul></details>`,
    )
    .join("");
}

export interface ConfigHandlers {
  issue(cmd: string, target: "all" | number, value?: unknown): void;
  confirm(question: string): boolean;
}

export function wireConfigForm(form: HTMLElement, handlers: ConfigHandlers): void {
  const select = form.querySelector<HTMLSelectElement>("#cfg-command")!;
  const targetInput = form.querySelector<HTMLInputElement>("#cfg-target")!;
  const valueInput = form.querySelector<HTMLInputElement>("#cfg-value")!;
  const button = form.querySelector<HTMLButtonElement>("#cfg-apply")!;
  const errorBox = form.querySelector<HTMLElement>("#cfg-error")!;

  button.addEventListener("click", () => {
    errorBox.textContent = "";
    const cmd = select.value;
    const rawTarget = targetInput.value.trim();
    const target = rawTarget === "" || rawTarget === "all"
      ? ("all" as const)
      : Number(rawTarget);
    if (target !== "all" && !Number.isInteger(target)) {
      errorBox.textContent = "target must be a node id or 'all'";
      return;
    }
    const needsValue = cmd.startsWith("set_");
    const value = needsValue ? Number(valueInput.value) : undefined;
    if (cmd === "reset_network" || cmd === "reset_node") {
      if (!handlers.confirm(`Really send ${cmd.replace("_", " ")}?`)) {
        return;
      }
    }
    handlers.issue(cmd, target, value);
  });
}
