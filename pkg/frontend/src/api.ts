/** JSON shapes of the blocksmith service and a typed fetch client for them. */

export type Phase = "initial" | "goal";

export interface Snapshot {
    assets_used: string[];
    code_hash: string;
    description: string;
    goal_summary: string;
    version_id: number;
}

export interface MutationResult {
    version: number;
    category: string;
    reference_version: number | null;
    hash: string;
    snapshot: Snapshot;
    spec: Record<string, unknown>;
    repairs?: string[];
}

export interface SceneConstants {
    camera_pos: [number, number, number];
    camera_look: [number, number, number];
    table_z: number;
    workspace_x: [number, number];
    workspace_y: [number, number];
}

export interface SceneRow {
    id: string;
    kind: string;
    color: string | null;
    label: string | null;
    edge_m: number;
    x: number;
    y: number;
    z: number;
    qw: number;
    qx: number;
    qy: number;
    qz: number;
}

/** State payload; rows stay unchecked here so views can reject bad ones. */
export interface StatePayload {
    version: number;
    phase: Phase;
    seed: number;
    constants: SceneConstants;
    rows: unknown[];
}

export interface ErrorDetail {
    code: string;
    stage: string;
    failure_kind: string;
    diagnostics: string;
}

export interface HealthStatus {
    ok: boolean;
    backend: string;
    sessions: number;
}

function isFiniteNumber(value: unknown): value is number {
    return typeof value === "number" && Number.isFinite(value);
}

function isNumberVec(value: unknown, length: number): boolean {
    return Array.isArray(value) && value.length === length && value.every(isFiniteNumber);
}

function isStringArray(value: unknown): value is string[] {
    return Array.isArray(value) && value.every((item) => typeof item === "string");
}

export function isSnapshot(value: unknown): value is Snapshot {
    return (
        typeof value === "object" &&
        value !== null &&
        isStringArray((value as Snapshot).assets_used) &&
        typeof (value as Snapshot).code_hash === "string" &&
        typeof (value as Snapshot).description === "string" &&
        typeof (value as Snapshot).goal_summary === "string" &&
        typeof (value as Snapshot).version_id === "number"
    );
}

export function isMutationResult(value: unknown): value is MutationResult {
    if (typeof value !== "object" || value === null) {
        return false;
    }
    const result = value as MutationResult;
    return (
        typeof result.version === "number" &&
        typeof result.category === "string" &&
        (result.reference_version === null || typeof result.reference_version === "number") &&
        typeof result.hash === "string" &&
        isSnapshot(result.snapshot) &&
        typeof result.spec === "object" &&
        result.spec !== null &&
        (result.repairs === undefined || isStringArray(result.repairs))
    );
}

export function isSceneConstants(value: unknown): value is SceneConstants {
    if (typeof value !== "object" || value === null) {
        return false;
    }
    const constants = value as SceneConstants;
    return (
        isNumberVec(constants.camera_pos, 3) &&
        isNumberVec(constants.camera_look, 3) &&
        isFiniteNumber(constants.table_z) &&
        isNumberVec(constants.workspace_x, 2) &&
        isNumberVec(constants.workspace_y, 2)
    );
}

export function isSceneRow(value: unknown): value is SceneRow {
    if (typeof value !== "object" || value === null) {
        return false;
    }
    const row = value as SceneRow;
    return (
        typeof row.id === "string" &&
        typeof row.kind === "string" &&
        (row.color === null || typeof row.color === "string") &&
        (row.label === null || typeof row.label === "string") &&
        isFiniteNumber(row.edge_m) &&
        row.edge_m > 0 &&
        isFiniteNumber(row.x) &&
        isFiniteNumber(row.y) &&
        isFiniteNumber(row.z) &&
        isFiniteNumber(row.qw) &&
        isFiniteNumber(row.qx) &&
        isFiniteNumber(row.qy) &&
        isFiniteNumber(row.qz)
    );
}

export function isStatePayload(value: unknown): value is StatePayload {
    if (typeof value !== "object" || value === null) {
        return false;
    }
    const payload = value as StatePayload;
    return (
        typeof payload.version === "number" &&
        (payload.phase === "initial" || payload.phase === "goal") &&
        typeof payload.seed === "number" &&
        isSceneConstants(payload.constants) &&
        Array.isArray(payload.rows)
    );
}

export function isErrorDetail(value: unknown): value is ErrorDetail {
    if (typeof value !== "object" || value === null) {
        return false;
    }
    const detail = value as ErrorDetail;
    return (
        typeof detail.code === "string" &&
        typeof detail.stage === "string" &&
        typeof detail.failure_kind === "string" &&
        typeof detail.diagnostics === "string"
    );
}

/** A structured non-2xx response; fields mirror the server body verbatim. */
export class ApiError extends Error {
    readonly status: number;
    readonly detail: ErrorDetail;

    constructor(status: number, detail: ErrorDetail) {
        super(`${detail.code}: ${detail.diagnostics}`);
        this.name = "ApiError";
        this.status = status;
        this.detail = detail;
    }
}

/** The slice of the service the authoring app depends on. */
export interface AuthoringBackend {
    createSession(sessionId?: string): Promise<string>;
    instruction(sessionId: string, text: string): Promise<MutationResult>;
    steer(sessionId: string, text: string): Promise<MutationResult>;
    revert(sessionId: string, version: number): Promise<MutationResult>;
    versions(sessionId: string): Promise<Snapshot[]>;
    state(sessionId: string, version: number, phase: Phase, seed: number): Promise<StatePayload>;
}

export class ServiceClient implements AuthoringBackend {
    private readonly baseUrl: string;
    private readonly fetchFn: typeof fetch;

    constructor(baseUrl: string, fetchFn?: typeof fetch) {
        this.baseUrl = baseUrl.replace(/\/$/, "");
        this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    }

    private async request(path: string, init?: RequestInit): Promise<Response> {
        const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
        if (!response.ok) {
            const body: unknown = await response.json().catch(() => null);
            const detail = (body as { detail?: unknown } | null)?.detail;
            if (isErrorDetail(detail)) {
                throw new ApiError(response.status, detail);
            }
            throw new ApiError(response.status, {
                code: `HTTP${response.status}`,
                stage: "",
                failure_kind: "",
                diagnostics: "",
            });
        }
        return response;
    }

    private async requestJson(path: string, init?: RequestInit): Promise<unknown> {
        const response = await this.request(path, init);
        return response.json();
    }

    private post(path: string, body: unknown): Promise<unknown> {
        return this.requestJson(path, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
        });
    }

    async createSession(sessionId?: string): Promise<string> {
        const body = sessionId === undefined ? {} : { session_id: sessionId };
        const data = (await this.post("/sessions", body)) as { session_id?: unknown };
        if (typeof data?.session_id !== "string") {
            throw new Error("malformed session payload");
        }
        return data.session_id;
    }

    private async mutate(path: string, body: unknown): Promise<MutationResult> {
        const data = await this.post(path, body);
        if (!isMutationResult(data)) {
            throw new Error(`malformed mutation payload from ${path}`);
        }
        return data;
    }

    instruction(sessionId: string, text: string): Promise<MutationResult> {
        return this.mutate(`/sessions/${sessionId}/instruction`, { text });
    }

    steer(sessionId: string, text: string): Promise<MutationResult> {
        return this.mutate(`/sessions/${sessionId}/steer`, { text });
    }

    revert(sessionId: string, version: number): Promise<MutationResult> {
        return this.mutate(`/sessions/${sessionId}/revert`, { version });
    }

    async versions(sessionId: string): Promise<Snapshot[]> {
        const data = (await this.requestJson(`/sessions/${sessionId}/versions`)) as {
            versions?: unknown;
        };
        const versions = data?.versions;
        if (!Array.isArray(versions) || !versions.every(isSnapshot)) {
            throw new Error("malformed versions payload");
        }
        return versions;
    }

    async state(sessionId: string, version: number, phase: Phase, seed: number): Promise<StatePayload> {
        const data = await this.requestJson(
            `/sessions/${sessionId}/state/${version}?phase=${phase}&seed=${seed}`,
        );
        if (!isStatePayload(data)) {
            throw new Error("malformed state payload");
        }
        return data;
    }

    async artifactText(digest: string): Promise<string> {
        const response = await this.request(`/artifacts/${digest}`);
        return response.text();
    }

    async health(): Promise<HealthStatus> {
        const data = (await this.requestJson("/health")) as HealthStatus;
        return data;
    }
}
