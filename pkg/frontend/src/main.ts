/** Browser entry point: ?api=... overrides the service base URL. */

import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8000";
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
mountApp(root, new ApiClient(baseUrl));
