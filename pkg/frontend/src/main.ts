// Entry point: connect to the gateway (``?gateway=`` query parameter or the
// default local port) and render the console.

import { GatewayClient } from "./client.js";
import type { ConsoleModel } from "./model.js";
import { ConsoleSession } from "./session.js";
import { renderInto } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const gatewayUrl = params.get("gateway") ?? "http://127.0.0.1:8000";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}

let update: (model: ConsoleModel) => void = () => {};
const session = new ConsoleSession(new GatewayClient(gatewayUrl), (model) =>
  update(model),
);
update = renderInto(root, session);

void session.connect();
