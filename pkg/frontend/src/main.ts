import { ServiceClient } from "./api.js";
import { ReviewSession } from "./session.js";
import { ConsoleApp } from "./view.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8787";
const reviewerId = params.get("reviewer") ?? "anonymous";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}

const app = new ConsoleApp(root, new ServiceClient(baseUrl), new ReviewSession(reviewerId));
void app.start();
