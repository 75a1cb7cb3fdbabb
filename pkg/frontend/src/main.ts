/** Browser entry point. Serve the control plane (`meshsim serve`) and open
 * index.html; pass ?api=http://host:port to point elsewhere. */

import { createApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8080";
const root = document.getElementById("root");
if (!root) {
  throw new Error("missing #root element");
}
const app = createApp(root, base, (url, init) => fetch(url, init), 1000);
app.start();
