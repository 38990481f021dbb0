// Server-sent event client over fetch streaming (EventSource is absent in
// Node and workers). Reconnects with the last seen id as the resume
// token.

export interface SSEMessage {
  id: number | null;
  data: string;
}

/** Incremental parser for one text/event-stream connection. */
export class SSEParser {
  private buffer = "";

  push(chunk: string): SSEMessage[] {
    this.buffer += chunk;
    const out: SSEMessage[] = [];
    let sep: number;
    while ((sep = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      let id: number | null = null;
      const dataLines: string[] = [];
      for (const line of block.split("\n")) {
        if (line.startsWith("id:")) id = parseInt(line.slice(3).trim(), 10);
        else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
        // comment lines (keepalives) start with ':' and are dropped
      }
      if (dataLines.length) out.push({ id, data: dataLines.join("\n") });
    }
    return out;
  }
}

export interface StreamOptions {
  fetchFn?: typeof fetch;
  signal?: AbortSignal;
  reconnectDelayMs?: number;
  maxErrors?: number;
  /** Stop after a clean server close instead of resuming. */
  once?: boolean;
}

/** Consume an SSE endpoint, invoking onMessage per event; resumes from
 * the last event id across reconnects. The server drops idle streams
 * after a few seconds, so a clean close is normal mid-session: keep
 * resuming until the callback returns false, the signal aborts, or
 * ``once`` is set. */
export async function streamEvents(
  url: (after: number) => string,
  onMessage: (m: SSEMessage) => boolean | void,
  opts: StreamOptions = {}
): Promise<void> {
  const fetchFn = opts.fetchFn ?? fetch;
  let lastId = -1;
  let errors = 0;
  for (;;) {
    if (opts.signal?.aborted) return;
    let response: Response;
    try {
      response = await fetchFn(url(lastId), { signal: opts.signal });
    } catch (e) {
      if (opts.signal?.aborted) return;
      if (++errors > (opts.maxErrors ?? 5)) throw e;
      await new Promise((r) => setTimeout(r, opts.reconnectDelayMs ?? 500));
      continue;
    }
    errors = 0;
    if (!response.body) return;
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SSEParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const msg of parser.push(decoder.decode(value, { stream: true }))) {
        if (msg.id !== null) lastId = msg.id;
        if (onMessage(msg) === false) {
          await reader.cancel();
          return;
        }
      }
    }
    if (opts.once) return;
    await new Promise((r) => setTimeout(r, opts.reconnectDelayMs ?? 500));
  }
}
