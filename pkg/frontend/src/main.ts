/** Browser entry point. The session id lives in the URL fragment so a
 * reload reattaches to the same server-side session.
 */

import { ServiceClient } from "./api.js";
import { AuthoringApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8787";

const app = new AuthoringApp(new ServiceClient(baseUrl), document.body);
app.onsession = (sessionId) => {
    window.location.hash = `#s=${sessionId}`;
};

const match = window.location.hash.match(/^#s=([a-z0-9-]+)$/);
if (match !== null) {
    void app.attach(match[1]);
}
