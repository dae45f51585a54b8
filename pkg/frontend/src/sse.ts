// Minimal SSE reader over fetch. EventSource is browser-only and cannot set
// a starting sequence cleanly, so the console parses the stream itself; this
// works identically in browsers and under node (vitest).

import type { EngineEvent } from "./types.js";

export async function* sseEvents(
  url: string,
  signal: AbortSignal,
): AsyncGenerator<EngineEvent> {
  const resp = await fetch(url, {
    signal,
    headers: { accept: "text/event-stream" },
  });
  if (!resp.ok || !resp.body) {
    throw new Error(`event stream failed: HTTP ${resp.status}`);
  }
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      let sep;
      while ((sep = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        const data = block
          .split("\n")
          .filter((line) => line.startsWith("data: "))
          .map((line) => line.slice("data: ".length))
          .join("\n");
        if (data) {
          yield JSON.parse(data) as EngineEvent;
        }
        // blocks without a data line are keepalive comments; skip them
      }
    }
  } finally {
    reader.releaseLock();
  }
}
