/** Version timeline: one entry per snapshot, in server order. */

import { Snapshot } from "./api.js";

export class TimelineList {
    readonly root: HTMLElement;
    onselect: ((version: number) => void) | null = null;

    constructor(doc: Document) {
        this.root = doc.createElement("ol");
        this.root.className = "timeline";
    }

    render(snapshots: Snapshot[], pointer: number | null, selected: number | null): void {
        const doc = this.root.ownerDocument;
        while (this.root.firstChild !== null) {
            this.root.removeChild(this.root.firstChild);
        }
        for (const snapshot of snapshots) {
            const item = doc.createElement("li");
            item.setAttribute("data-version", String(snapshot.version_id));
            item.setAttribute("data-hash", snapshot.code_hash);
            const classes = ["timeline-entry"];
            if (snapshot.version_id === pointer) {
                classes.push("current");
            }
            if (snapshot.version_id === selected) {
                classes.push("selected");
            }
            item.className = classes.join(" ");

            const tag = doc.createElement("span");
            tag.className = "version-tag";
            tag.textContent = `v${snapshot.version_id}`;
            const description = doc.createElement("span");
            description.className = "description";
            description.textContent = snapshot.description;
            const summary = doc.createElement("span");
            summary.className = "goal-summary";
            summary.textContent = snapshot.goal_summary;
            const assets = doc.createElement("span");
            assets.className = "asset-count";
            assets.textContent = `${snapshot.assets_used.length} assets`;
            item.append(tag, description, summary, assets);

            item.addEventListener("click", () => {
                this.onselect?.(snapshot.version_id);
            });
            this.root.appendChild(item);
        }
    }
}
