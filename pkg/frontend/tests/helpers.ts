import { ChildProcess, execFileSync, spawn } from "node:child_process";
import * as net from "node:net";

/** Runs the reconstruction CLI from the parent package; throws on nonzero exit. */
export function nsmi(args: string[], timeoutMs = 600_000): string {
  return execFileSync("nsmi", args, { encoding: "utf-8", timeout: timeoutMs });
}

/**
 * Starts `trainer serve` as a child process so blocking CLI calls in the
 * test cannot starve it, and resolves with the bound endpoint.
 */
export function startServer(
  cliPath: string, args: string[], timeoutMs = 30_000,
): Promise<{ proc: ChildProcess; endpoint: string }> {
  return new Promise((resolve, reject) => {
    const proc = spawn(process.execPath, [cliPath, "serve", ...args]);
    let out = "";
    const timer = setTimeout(() => {
      proc.kill();
      reject(new Error(`server did not come up in time; output so far: ${out}`));
    }, timeoutMs);
    proc.stdout.on("data", (chunk: Buffer) => {
      out += chunk.toString("utf-8");
      const match = out.match(/listening on ([\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve({ proc, endpoint: match[1] });
      }
    });
    proc.stderr.on("data", (chunk: Buffer) => {
      out += chunk.toString("utf-8");
    });
    proc.once("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early with code ${code}: ${out}`));
    });
  });
}

/** Buffers everything the peer sends so reads never race the data events. */
export class ByteReader {
  private pending: Buffer = Buffer.alloc(0);
  private closed = false;
  private waiter: {
    n: number;
    resolve: (b: Buffer) => void;
    reject: (e: Error) => void;
    timer: NodeJS.Timeout;
  } | null = null;
  private closeWaiters: (() => void)[] = [];

  constructor(sock: net.Socket) {
    sock.on("data", (chunk: Buffer) => {
      this.pending = this.pending.length === 0 ? chunk : Buffer.concat([this.pending, chunk]);
      this.drain();
    });
    const onClose = () => {
      this.closed = true;
      this.drain();
      for (const w of this.closeWaiters) w();
      this.closeWaiters = [];
    };
    sock.once("end", onClose);
    sock.once("close", onClose);
    sock.once("error", onClose);
  }

  private drain(): void {
    if (this.waiter === null) {
      return;
    }
    const { n, resolve, reject, timer } = this.waiter;
    if (this.pending.length >= n) {
      clearTimeout(timer);
      this.waiter = null;
      const out = Buffer.from(this.pending.subarray(0, n));
      this.pending = Buffer.from(this.pending.subarray(n));
      resolve(out);
    } else if (this.closed) {
      clearTimeout(timer);
      this.waiter = null;
      reject(new Error(`connection closed after ${this.pending.length} of ${n} bytes`));
    }
  }

  read(n: number, timeoutMs = 10_000): Promise<Buffer> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.waiter = null;
        reject(new Error(`timed out waiting for ${n} bytes (got ${this.pending.length})`));
      }, timeoutMs);
      this.waiter = { n, resolve, reject, timer };
      this.drain();
    });
  }

  waitClose(timeoutMs = 10_000): Promise<void> {
    if (this.closed) {
      return Promise.resolve();
    }
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("peer did not close")), timeoutMs);
      this.closeWaiters.push(() => {
        clearTimeout(timer);
        resolve();
      });
    });
  }
}

export function connect(
  port: number, host = "127.0.0.1",
): Promise<{ sock: net.Socket; reader: ByteReader }> {
  return new Promise((resolve, reject) => {
    const sock = net.createConnection({ port, host }, () =>
      resolve({ sock, reader: new ByteReader(sock) }));
    sock.once("error", reject);
  });
}
