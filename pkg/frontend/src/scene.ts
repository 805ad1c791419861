/** Projection and SVG rendering of scene rows: one shaded box per cube, one
 * flat quad per patch, table underneath. The camera pose comes from the
 * constants carried in each state payload; the view applies no physics and
 * draws exactly the rows it was given.
 */

import { SceneConstants, SceneRow, isSceneRow } from "./api.js";

export type Vec3 = [number, number, number];

export const VIEW_WIDTH = 640;
export const VIEW_HEIGHT = 480;
const FOCAL_SCALE = 600;

const SVG_NS = "http://www.w3.org/2000/svg";
const WORLD_UP: Vec3 = [0, 0, 1];
const LIGHT_DIR: Vec3 = normalize([0.35, 0.25, 0.9]);

const COLOR_RGB: Record<string, [number, number, number]> = {
    red: [211, 63, 51],
    blue: [56, 108, 217],
    green: [67, 160, 71],
    yellow: [240, 201, 56],
    purple: [142, 68, 173],
    orange: [235, 140, 52],
    pink: [233, 148, 180],
    brown: [146, 104, 66],
    black: [45, 45, 50],
    white: [236, 238, 240],
    gray: [150, 150, 156],
    cyan: [74, 192, 203],
};
const FALLBACK_RGB: [number, number, number] = [150, 150, 156];

function sub(a: Vec3, b: Vec3): Vec3 {
    return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function dot(a: Vec3, b: Vec3): number {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function cross(a: Vec3, b: Vec3): Vec3 {
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
}

function normalize(a: Vec3): Vec3 {
    const n = Math.hypot(a[0], a[1], a[2]);
    return [a[0] / n, a[1] / n, a[2] / n];
}

/** Rotate a vector by a unit quaternion (w, x, y, z). */
function rotate(q: [number, number, number, number], v: Vec3): Vec3 {
    const [w, x, y, z] = q;
    const u: Vec3 = [x, y, z];
    const uv = cross(u, v);
    const uuv = cross(u, uv);
    return [
        v[0] + 2 * (w * uv[0] + uuv[0]),
        v[1] + 2 * (w * uv[1] + uuv[1]),
        v[2] + 2 * (w * uv[2] + uuv[2]),
    ];
}

export interface Camera {
    position: Vec3;
    forward: Vec3;
    right: Vec3;
    up: Vec3;
}

export function makeCamera(constants: SceneConstants): Camera {
    const position: Vec3 = [...constants.camera_pos];
    const forward = normalize(sub([...constants.camera_look], position));
    // World +y is the scene's left, so screen x must grow toward -y for
    // word rows to keep their reading order.
    const right = normalize(cross(WORLD_UP, forward));
    const up = cross(forward, right);
    return { position, forward, right, up };
}

/** Perspective-project a world point to viewport pixels. */
export function project(camera: Camera, point: Vec3): [number, number] {
    const d = sub(point, camera.position);
    const depth = dot(d, camera.forward);
    const sx = dot(d, camera.right) / depth;
    const sy = dot(d, camera.up) / depth;
    return [VIEW_WIDTH / 2 + sx * FOCAL_SCALE, VIEW_HEIGHT / 2 - sy * FOCAL_SCALE];
}

function depthOf(camera: Camera, point: Vec3): number {
    return dot(sub(point, camera.position), camera.forward);
}

// Cube corner i has +edge/2 on axis k iff bit k of i is set.
const CORNER_SIGNS: Vec3[] = [];
for (let i = 0; i < 8; i++) {
    CORNER_SIGNS.push([i & 1 ? 1 : -1, i & 2 ? 1 : -1, i & 4 ? 1 : -1]);
}

interface FaceDef {
    normal: Vec3;
    corners: [number, number, number, number];
}

const FACES: FaceDef[] = [
    { normal: [1, 0, 0], corners: [1, 3, 7, 5] },
    { normal: [-1, 0, 0], corners: [0, 2, 6, 4] },
    { normal: [0, 1, 0], corners: [2, 3, 7, 6] },
    { normal: [0, -1, 0], corners: [0, 1, 5, 4] },
    { normal: [0, 0, 1], corners: [4, 5, 7, 6] },
    { normal: [0, 0, -1], corners: [0, 1, 3, 2] },
];

function rgbOf(color: string | null): [number, number, number] {
    return (color === null ? undefined : COLOR_RGB[color]) ?? FALLBACK_RGB;
}

function shade(rgb: [number, number, number], normal: Vec3): string {
    const brightness = 0.62 + 0.38 * Math.max(0, dot(normal, LIGHT_DIR));
    const channels = rgb.map((c) => Math.round(Math.min(255, c * brightness)));
    return `rgb(${channels[0]}, ${channels[1]}, ${channels[2]})`;
}

function pointsAttr(points: [number, number][]): string {
    return points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
}

interface DrawItem {
    depth: number;
    node: Element;
}

function makePolygon(
    doc: Document,
    points: [number, number][],
    fill: string,
    attrs: Record<string, string>,
): Element {
    const polygon = doc.createElementNS(SVG_NS, "polygon");
    polygon.setAttribute("points", pointsAttr(points));
    polygon.setAttribute("fill", fill);
    polygon.setAttribute("stroke", "rgba(20, 20, 25, 0.45)");
    polygon.setAttribute("stroke-width", "0.6");
    for (const [key, value] of Object.entries(attrs)) {
        polygon.setAttribute(key, value);
    }
    return polygon;
}

interface LabelSpot {
    depth: number;
    center: Vec3;
    cosine: number;
    edgePx: number;
}

function assetAttrs(row: SceneRow): Record<string, string> {
    const attrs: Record<string, string> = { "data-asset": row.id, "data-kind": row.kind };
    if (row.color !== null) {
        attrs["data-color"] = row.color;
    }
    return attrs;
}

function cubeItems(doc: Document, camera: Camera, row: SceneRow): DrawItem[] {
    const center: Vec3 = [row.x, row.y, row.z];
    const half = row.edge_m / 2;
    const q: [number, number, number, number] = [row.qw, row.qx, row.qy, row.qz];
    const corners = CORNER_SIGNS.map((signs) => {
        const local: Vec3 = [signs[0] * half, signs[1] * half, signs[2] * half];
        const world = rotate(q, local);
        return [center[0] + world[0], center[1] + world[1], center[2] + world[2]] as Vec3;
    });
    const rgb = rgbOf(row.color);
    const label = row.label ?? "";
    const items: DrawItem[] = [];
    let labelSpot: LabelSpot | null = null;
    for (const face of FACES) {
        const normal = rotate(q, face.normal);
        const faceCenter: Vec3 = [
            center[0] + normal[0] * half,
            center[1] + normal[1] * half,
            center[2] + normal[2] * half,
        ];
        const toCamera = sub(camera.position, faceCenter);
        const facing = dot(normal, toCamera);
        if (facing <= 0) {
            continue;
        }
        const projected = face.corners.map((i) => project(camera, corners[i]));
        const depth = depthOf(camera, faceCenter);
        items.push({
            depth,
            node: makePolygon(doc, projected, shade(rgb, normal), assetAttrs(row)),
        });
        const cosine = facing / Math.hypot(...toCamera);
        if (label !== "" && (labelSpot === null || cosine > labelSpot.cosine)) {
            labelSpot = {
                depth,
                center: faceCenter,
                cosine,
                edgePx: Math.hypot(
                    projected[1][0] - projected[0][0],
                    projected[1][1] - projected[0][1],
                ),
            };
        }
    }
    if (labelSpot !== null) {
        const text = doc.createElementNS(SVG_NS, "text");
        const [tx, ty] = project(camera, labelSpot.center);
        text.setAttribute("x", tx.toFixed(2));
        text.setAttribute("y", ty.toFixed(2));
        text.setAttribute("text-anchor", "middle");
        text.setAttribute("dominant-baseline", "central");
        text.setAttribute("font-size", Math.max(8, 0.55 * labelSpot.edgePx).toFixed(1));
        text.setAttribute("font-family", "sans-serif");
        const luminance = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        text.setAttribute("fill", luminance > 140 ? "#222" : "#fff");
        text.setAttribute("data-label-for", row.id);
        text.textContent = label;
        // Nudged nearer than its face so it lands right after it in the
        // painter order, while nearer cubes still cover it.
        items.push({ depth: labelSpot.depth - 1e-6, node: text });
    }
    return items;
}

function patchQuad(doc: Document, camera: Camera, row: SceneRow): Element {
    const half = row.edge_m / 2;
    const corners: Vec3[] = [
        [row.x - half, row.y - half, row.z],
        [row.x + half, row.y - half, row.z],
        [row.x + half, row.y + half, row.z],
        [row.x - half, row.y + half, row.z],
    ];
    const rgb = rgbOf(row.color);
    const quad = makePolygon(
        doc,
        corners.map((corner) => project(camera, corner)),
        `rgba(${rgb[0]}, ${rgb[1]}, ${rgb[2]}, 0.4)`,
        assetAttrs(row),
    );
    quad.setAttribute("stroke-dasharray", "4 3");
    return quad;
}

function tableQuad(doc: Document, camera: Camera, constants: SceneConstants): Element {
    const [x0, x1] = constants.workspace_x;
    const [y0, y1] = constants.workspace_y;
    const z = constants.table_z;
    const corners: Vec3[] = [
        [x0, y0, z],
        [x1, y0, z],
        [x1, y1, z],
        [x0, y1, z],
    ];
    const quad = makePolygon(
        doc,
        corners.map((corner) => project(camera, corner)),
        "#e7decf",
        { "data-kind": "table" },
    );
    quad.setAttribute("stroke", "#b9ac96");
    return quad;
}

function clearChildren(node: Element): void {
    while (node.firstChild !== null) {
        node.removeChild(node.firstChild);
    }
}

/** One scene panel: caption, error banner, and the projected block view. */
export class SceneView {
    readonly root: HTMLElement;
    readonly svg: Element;
    readonly banner: HTMLElement;

    constructor(doc: Document, title: string) {
        this.root = doc.createElement("section");
        this.root.className = "scene-panel";
        const caption = doc.createElement("h2");
        caption.textContent = title;
        this.banner = doc.createElement("p");
        this.banner.className = "scene-banner";
        this.banner.hidden = true;
        this.svg = doc.createElementNS(SVG_NS, "svg");
        this.svg.setAttribute("viewBox", `0 0 ${VIEW_WIDTH} ${VIEW_HEIGHT}`);
        this.svg.setAttribute("width", String(VIEW_WIDTH));
        this.svg.setAttribute("height", String(VIEW_HEIGHT));
        this.root.append(caption, this.banner, this.svg);
    }

    showError(message: string): void {
        clearChildren(this.svg);
        this.banner.textContent = message;
        this.banner.hidden = false;
    }

    clear(): void {
        clearChildren(this.svg);
        this.banner.hidden = true;
    }

    render(constants: SceneConstants, rows: unknown[]): void {
        const doc = this.root.ownerDocument;
        // Validate every row before touching the drawing: no partial render.
        const parsed: SceneRow[] = [];
        for (let i = 0; i < rows.length; i++) {
            const row = rows[i];
            if (!isSceneRow(row)) {
                this.showError(`malformed scene row ${i}`);
                return;
            }
            parsed.push(row);
        }
        this.clear();
        const camera = makeCamera(constants);
        this.svg.appendChild(tableQuad(doc, camera, constants));
        // Patches lie flat at table height, so they can never occlude a box
        // seen from above the table plane; draw them before all cubes.
        const patches = parsed
            .filter((row) => row.kind === "GoalPatch")
            .map((row) => ({ depth: depthOf(camera, [row.x, row.y, row.z]), row }));
        patches.sort((a, b) => b.depth - a.depth);
        for (const patch of patches) {
            this.svg.appendChild(patchQuad(doc, camera, patch.row));
        }
        const items: DrawItem[] = [];
        for (const row of parsed) {
            if (row.kind === "GoalPatch") {
                continue;
            }
            items.push(...cubeItems(doc, camera, row));
        }
        items.sort((a, b) => b.depth - a.depth);
        for (const item of items) {
            this.svg.appendChild(item.node);
        }
    }
}
