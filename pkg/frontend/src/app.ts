/** Authoring app controller: wires the instruction box, version timeline,
 * and the two scene panels to the service. The server is the source of
 * truth; the only state held here is the session id and the latest
 * responses (version list, rendered states, last report or error).
 *
 * Mutations are serialized: input stays disabled from submit until the
 * server answers, and a second submit during that window is a no-op.
 */

import {
    ApiError,
    AuthoringBackend,
    ErrorDetail,
    MutationResult,
    Snapshot,
} from "./api.js";
import { SceneView } from "./scene.js";
import { TimelineList } from "./timeline.js";

export class AuthoringApp {
    readonly client: AuthoringBackend;
    readonly root: HTMLElement;

    readonly input: HTMLInputElement;
    readonly submitButton: HTMLButtonElement;
    readonly retryButton: HTMLButtonElement;
    readonly sessionLabel: HTMLElement;
    readonly banner: HTMLElement;
    readonly report: HTMLElement;
    readonly timeline: TimelineList;
    readonly initialView: SceneView;
    readonly goalView: SceneView;

    private readonly errorCode: HTMLElement;
    private readonly errorStage: HTMLElement;
    private readonly failureKind: HTMLElement;
    private readonly diagnostics: HTMLElement;
    private readonly transportMessage: HTMLElement;

    sessionId: string | null = null;
    snapshots: Snapshot[] = [];
    selectedVersion: number | null = null;
    seed = 0;
    inFlight = false;
    onsession: ((sessionId: string) => void) | null = null;

    private pendingText: string | null = null;
    private lastOperation: Promise<void> = Promise.resolve();

    constructor(client: AuthoringBackend, host: HTMLElement) {
        this.client = client;
        const doc = host.ownerDocument;

        this.root = doc.createElement("div");
        this.root.className = "authoring";

        const header = doc.createElement("header");
        const title = doc.createElement("h1");
        title.textContent = "block task authoring";
        this.sessionLabel = doc.createElement("span");
        this.sessionLabel.className = "session-id";
        header.append(title, this.sessionLabel);

        const compose = doc.createElement("div");
        compose.className = "compose";
        this.input = doc.createElement("input");
        this.input.className = "instruction";
        this.input.setAttribute("placeholder", "describe a task, or an edit to the current one");
        this.submitButton = doc.createElement("button");
        this.submitButton.className = "submit";
        this.submitButton.textContent = "submit";
        this.retryButton = doc.createElement("button");
        this.retryButton.className = "retry";
        this.retryButton.textContent = "retry";
        this.retryButton.hidden = true;
        compose.append(this.input, this.submitButton, this.retryButton);

        this.banner = doc.createElement("div");
        this.banner.className = "banner";
        this.banner.hidden = true;
        this.errorCode = doc.createElement("span");
        this.errorCode.className = "error-code";
        this.errorStage = doc.createElement("span");
        this.errorStage.className = "error-stage";
        this.failureKind = doc.createElement("span");
        this.failureKind.className = "failure-kind";
        this.diagnostics = doc.createElement("span");
        this.diagnostics.className = "diagnostics";
        this.transportMessage = doc.createElement("span");
        this.transportMessage.className = "transport-message";
        this.banner.append(
            this.errorCode,
            this.errorStage,
            this.failureKind,
            this.diagnostics,
            this.transportMessage,
        );

        this.report = doc.createElement("div");
        this.report.className = "report";
        this.report.hidden = true;

        const panels = doc.createElement("div");
        panels.className = "panels";
        this.initialView = new SceneView(doc, "initial state");
        this.goalView = new SceneView(doc, "goal state");
        panels.append(this.initialView.root, this.goalView.root);

        this.timeline = new TimelineList(doc);
        this.timeline.onselect = (version) => {
            this.lastOperation = this.selectVersion(version);
        };

        this.root.append(header, compose, this.banner, this.report, panels, this.timeline.root);
        host.appendChild(this.root);

        this.submitButton.addEventListener("click", () => {
            this.lastOperation = this.submit();
        });
        this.retryButton.addEventListener("click", () => {
            this.lastOperation = this.retry();
        });
        this.input.addEventListener("keydown", (event) => {
            if ((event as KeyboardEvent).key === "Enter") {
                this.lastOperation = this.submit();
            }
        });
    }

    /** Resolves when the most recently started operation has finished. */
    settled(): Promise<void> {
        return this.lastOperation;
    }

    headVersion(): number | null {
        if (this.snapshots.length === 0) {
            return null;
        }
        return this.snapshots[this.snapshots.length - 1].version_id;
    }

    /** Join an existing session and rebuild the whole view from the server. */
    async attach(sessionId: string): Promise<void> {
        this.sessionId = sessionId;
        this.sessionLabel.textContent = sessionId;
        await this.refresh();
    }

    async submit(): Promise<void> {
        if (this.inFlight) {
            // One mutation at a time: a second submit joins the current one.
            return this.lastOperation;
        }
        const text = this.input.value.trim();
        if (text === "") {
            return;
        }
        this.setBusy(true);
        let reverted = false;
        try {
            if (this.sessionId === null) {
                this.sessionId = await this.client.createSession();
                this.sessionLabel.textContent = this.sessionId;
                this.onsession?.(this.sessionId);
            }
            const head = this.headVersion();
            let result: MutationResult;
            if (head === null) {
                result = await this.client.instruction(this.sessionId, text);
            } else {
                if (this.selectedVersion !== null && this.selectedVersion !== head) {
                    await this.client.revert(this.sessionId, this.selectedVersion);
                    reverted = true;
                }
                result = await this.client.steer(this.sessionId, text);
            }
            this.pendingText = null;
            this.input.value = "";
            this.hideErrors();
            await this.refresh();
            this.renderReport(result);
        } catch (err) {
            this.pendingText = text;
            // A rejected edit rolls back server-side, but a revert that
            // already committed is a real new version: pick it up.
            if (reverted) {
                await this.refresh().catch(() => undefined);
            }
            if (err instanceof ApiError) {
                this.showRejection(err.detail);
            } else {
                this.showTransportFailure(err);
            }
        } finally {
            this.setBusy(false);
        }
    }

    private async retry(): Promise<void> {
        if (this.pendingText !== null) {
            this.input.value = this.pendingText;
        }
        await this.submit();
    }

    async selectVersion(version: number): Promise<void> {
        if (this.inFlight) {
            return this.lastOperation;
        }
        if (!this.snapshots.some((snapshot) => snapshot.version_id === version)) {
            return;
        }
        this.selectedVersion = version;
        this.renderTimeline();
        await this.renderScenes();
    }

    async refresh(): Promise<void> {
        if (this.sessionId === null) {
            return;
        }
        this.snapshots = await this.client.versions(this.sessionId);
        this.selectedVersion = this.headVersion();
        this.renderTimeline();
        await this.renderScenes();
    }

    private setBusy(busy: boolean): void {
        this.inFlight = busy;
        this.input.disabled = busy;
        this.submitButton.disabled = busy;
        this.retryButton.disabled = busy;
    }

    private hideErrors(): void {
        this.banner.hidden = true;
        this.retryButton.hidden = true;
    }

    private showRejection(detail: ErrorDetail): void {
        this.report.hidden = true;
        this.retryButton.hidden = true;
        this.errorCode.textContent = detail.code;
        this.errorStage.textContent = detail.stage;
        this.failureKind.textContent = detail.failure_kind;
        this.diagnostics.textContent = detail.diagnostics;
        this.transportMessage.textContent = "";
        this.banner.hidden = false;
    }

    private showTransportFailure(err: unknown): void {
        this.report.hidden = true;
        this.errorCode.textContent = "";
        this.errorStage.textContent = "";
        this.failureKind.textContent = "";
        this.diagnostics.textContent = "";
        this.transportMessage.textContent = `request failed: ${err instanceof Error ? err.message : String(err)}`;
        this.banner.hidden = false;
        this.retryButton.hidden = false;
    }

    private renderReport(result: MutationResult): void {
        const doc = this.root.ownerDocument;
        while (this.report.firstChild !== null) {
            this.report.removeChild(this.report.firstChild);
        }
        const line = doc.createElement("span");
        line.className = "admitted";
        const reference =
            result.reference_version === null ? "fresh" : `builds on v${result.reference_version}`;
        line.textContent = `admitted v${result.version} (${result.category}, ${reference})`;
        const hash = doc.createElement("code");
        hash.className = "code-hash";
        hash.textContent = result.hash;
        this.report.append(line, hash);
        if (result.repairs !== undefined && result.repairs.length > 0) {
            const repairs = doc.createElement("span");
            repairs.className = "repairs";
            repairs.textContent = `repairs: ${result.repairs.join(", ")}`;
            this.report.appendChild(repairs);
        }
        this.report.hidden = false;
    }

    private renderTimeline(): void {
        this.timeline.render(this.snapshots, this.headVersion(), this.selectedVersion);
    }

    private async renderScenes(): Promise<void> {
        if (this.sessionId === null || this.selectedVersion === null) {
            this.initialView.clear();
            this.goalView.clear();
            return;
        }
        await Promise.all([
            this.renderPhase(this.initialView, "initial"),
            this.renderPhase(this.goalView, "goal"),
        ]);
    }

    private async renderPhase(view: SceneView, phase: "initial" | "goal"): Promise<void> {
        if (this.sessionId === null || this.selectedVersion === null) {
            return;
        }
        try {
            const payload = await this.client.state(
                this.sessionId,
                this.selectedVersion,
                phase,
                this.seed,
            );
            view.render(payload.constants, payload.rows);
        } catch (err) {
            if (err instanceof ApiError) {
                view.showError(err.detail.diagnostics);
            } else {
                view.showError(err instanceof Error ? err.message : String(err));
            }
        }
    }
}
