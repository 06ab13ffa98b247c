/**
 * JSON-lines transport to a `rfcl bridge-serve` child process.
 *
 * One request is in flight at a time; callers must serialize access (the
 * underlying scheduler handles are stateful and not thread-safe). Responses
 * are matched to requests by a monotonically increasing id.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

export const BRIDGE_ABI = "rfcl-bridge-1";

/** Error raised by the primary component, carrying its exception type as code. */
export class BridgeError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = "BridgeError";
    this.code = code;
  }
}

interface Response {
  id: number;
  ok: boolean;
  result?: unknown;
  error?: string;
}

export interface BridgeProcessOptions {
  /** Command used to start the server; defaults to the installed `rfcl` CLI. */
  command?: string[];
}

export class BridgeProcess {
  private proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private nextId = 1;
  private pending = new Map<number, { resolve: (v: unknown) => void; reject: (e: Error) => void }>();
  private closed = false;

  constructor(options: BridgeProcessOptions = {}) {
    const command = options.command ?? [process.env.RFCL_BIN ?? "rfcl", "bridge-serve"];
    this.proc = spawn(command[0], command.slice(1), { stdio: ["pipe", "pipe", "pipe"] });
    this.lines = createInterface({ input: this.proc.stdout });
    this.lines.on("line", (line) => this.onLine(line));
    this.proc.on("exit", (codeOrNull) => {
      if (!this.closed) {
        const err = new BridgeError("ProcessExit", `bridge process exited with code ${codeOrNull}`);
        for (const p of this.pending.values()) p.reject(err);
        this.pending.clear();
      }
    });
  }

  private onLine(line: string): void {
    let resp: Response;
    try {
      resp = JSON.parse(line) as Response;
    } catch {
      return; // stray non-JSON output (e.g. logging) is ignored
    }
    const waiter = this.pending.get(resp.id);
    if (!waiter) return;
    this.pending.delete(resp.id);
    if (resp.ok) {
      waiter.resolve(resp.result);
    } else {
      const text = resp.error ?? "unknown error";
      const sep = text.indexOf(": ");
      waiter.reject(sep > 0
        ? new BridgeError(text.slice(0, sep), text.slice(sep + 2))
        : new BridgeError("Error", text));
    }
  }

  call<T>(op: string, args: Record<string, unknown> = {}): Promise<T> {
    if (this.closed) {
      return Promise.reject(new BridgeError("Closed", "bridge process already closed"));
    }
    const id = this.nextId++;
    const promise = new Promise<T>((resolve, reject) => {
      this.pending.set(id, { resolve: resolve as (v: unknown) => void, reject });
    });
    this.proc.stdin.write(JSON.stringify({ id, op, args }) + "\n");
    return promise;
  }

  close(): void {
    this.closed = true;
    this.proc.stdin.end();
    this.lines.close();
    this.proc.kill();
  }
}
