import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { JSDOM } from "jsdom";
import { AuthoringApp } from "../src/app.js";
import { AuthoringBackend } from "../src/api.js";

export interface ServiceHandle {
    baseUrl: string;
    stop(): Promise<void>;
}

/** Spawn a real service process on a fresh store and wait for /health. */
export async function startService(): Promise<ServiceHandle> {
    const port = 8800 + Math.floor(Math.random() * 600);
    const store = mkdtempSync(join(tmpdir(), "blocksmith-ui-"));
    const child: ChildProcess = spawn(
        "blocksmith",
        ["serve", "--port", String(port), "--store", store],
        { stdio: ["ignore", "ignore", "pipe"] },
    );
    let stderr = "";
    child.stderr?.on("data", (chunk: Buffer) => {
        stderr += chunk.toString();
    });
    const baseUrl = `http://127.0.0.1:${port}`;
    const deadline = Date.now() + 60000;
    for (;;) {
        if (child.exitCode !== null) {
            throw new Error(`service exited early: ${stderr}`);
        }
        try {
            const response = await fetch(`${baseUrl}/health`);
            if (response.ok) {
                break;
            }
        } catch {
            // not listening yet
        }
        if (Date.now() > deadline) {
            child.kill("SIGKILL");
            throw new Error(`service never came up: ${stderr}`);
        }
        await new Promise((resolve) => setTimeout(resolve, 150));
    }
    return {
        baseUrl,
        stop: () =>
            new Promise<void>((resolve) => {
                child.once("exit", () => resolve());
                child.kill("SIGTERM");
                setTimeout(() => child.kill("SIGKILL"), 3000).unref();
            }),
    };
}

export interface Page {
    dom: JSDOM;
    app: AuthoringApp;
}

/** A fresh in-memory page with the app mounted on its body. */
export function makePage(client: AuthoringBackend): Page {
    const dom = new JSDOM("<!doctype html><html><body></body></html>");
    const app = new AuthoringApp(client, dom.window.document.body);
    return { dom, app };
}

/** Type into the instruction box and click submit, as a user would. */
export async function submitText(app: AuthoringApp, text: string): Promise<void> {
    app.input.value = text;
    app.submitButton.click();
    await app.settled();
}

export function timelineEntries(app: AuthoringApp): HTMLElement[] {
    return Array.from(app.timeline.root.querySelectorAll("li"));
}

export function timelineHashes(app: AuthoringApp): (string | null)[] {
    return timelineEntries(app).map((item) => item.getAttribute("data-hash"));
}
