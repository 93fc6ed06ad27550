/** Browser entry point. Pass ?api=http://host:port to point the dashboard at
 * a gateway on another origin; defaults to the serving origin. */

import { GatewayClient } from "./api.js";
import { DashboardApp } from "./app.js";
import { NdjsonStream } from "./stream.js";

const base = new URLSearchParams(window.location.search).get("api") ?? "";
const root = document.getElementById("app");
if (root !== null) {
  const client = new GatewayClient(base);
  const stream = new NdjsonStream(`${base}/api/v1/stream`);
  const app = new DashboardApp(root, client, stream);
  void app.start();
  window.addEventListener("beforeunload", () => app.stop());
}
