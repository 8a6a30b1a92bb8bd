// Wire-protocol server: answers one request at a time per connection.
// Framing errors get a status-1 response and the connection is dropped;
// handler errors get a status-1 response and the connection stays usable.

import * as net from "node:net";

import {
  encodeErrorResponse,
  encodeResponse,
  Request,
  tryDecodeRequest,
} from "./protocol.js";
import { referenceEps } from "./reference.js";
import { loadCheckpoint } from "./train.js";

export type EpsHandler = (req: Request) => Float32Array;

export function parseListenAddress(addr: string): { host: string; port: number } {
  const idx = addr.lastIndexOf(":");
  let host = "127.0.0.1";
  let portStr = addr;
  if (idx >= 0) {
    host = addr.slice(0, idx) || "127.0.0.1";
    portStr = addr.slice(idx + 1);
  }
  if (!/^\d+$/.test(portStr) || Number(portStr) > 65535) {
    throw new Error(`listen address must be host:port, got '${addr}'`);
  }
  return { host, port: Number(portStr) };
}

export function createProtocolServer(handler: EpsHandler): net.Server {
  return net.createServer((socket) => {
    let pending: Buffer = Buffer.alloc(0);
    socket.on("error", () => {
      socket.destroy();
    });
    socket.on("data", (chunk: Buffer) => {
      pending = pending.length === 0 ? chunk : Buffer.concat([pending, chunk]);
      for (;;) {
        let decoded: { request: Request; consumed: number } | null;
        try {
          decoded = tryDecodeRequest(pending);
        } catch (err) {
          const message = err instanceof Error ? err.message : String(err);
          socket.end(encodeErrorResponse(message));
          return;
        }
        if (decoded === null) {
          return;
        }
        pending = Buffer.from(pending.subarray(decoded.consumed));
        let reply: Buffer;
        try {
          const req = decoded.request;
          const eps = handler(req);
          if (eps.length !== req.height * req.width) {
            throw new Error(
              `handler returned ${eps.length} values for ${req.height}x${req.width}`);
          }
          reply = encodeResponse(eps);
        } catch (err) {
          const message = err instanceof Error
            ? `${err.constructor.name}: ${err.message}`
            : String(err);
          reply = encodeErrorResponse(message);
        }
        socket.write(reply);
      }
    });
  });
}

export interface ServeOptions {
  checkpointPath: string | null;
  listen: string;
  reference: boolean;
  log?: (line: string) => void;
}

/** Resolves once the server is accepting connections. */
export async function serve(opts: ServeOptions): Promise<net.Server> {
  const log = opts.log ?? console.log;
  let handler: EpsHandler;
  if (opts.reference) {
    handler = (req) => referenceEps(req.xT, req.t, req.condition);
    log("serving the pinned reference function (conformance mode)");
  } else {
    if (opts.checkpointPath === null) {
      throw new Error("a checkpoint is required unless --reference is set");
    }
    const { net: model, checkpoint } = loadCheckpoint(opts.checkpointPath);
    const s = checkpoint.schedule;
    log(
      `loaded ${opts.checkpointPath}: schedule T=${s.T} ` +
      `betaStart=${s.betaStart} betaEnd=${s.betaEnd} hash=${checkpoint.scheduleHash}`);
    handler = (req) => model.predict(req.xT, req.t, req.height, req.width, req.condition);
  }
  const { host, port } = parseListenAddress(opts.listen);
  const server = createProtocolServer(handler);
  await new Promise<void>((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => resolve());
  });
  const bound = server.address() as net.AddressInfo;
  log(`listening on ${bound.address}:${bound.port}`);
  return server;
}

export function installShutdownHandlers(server: net.Server,
                                        log: (line: string) => void = console.log): void {
  const stop = (signal: string) => {
    log(`received ${signal}, shutting down`);
    server.close(() => process.exit(0));
    setTimeout(() => process.exit(0), 500).unref();
  };
  process.once("SIGINT", () => stop("SIGINT"));
  process.once("SIGTERM", () => stop("SIGTERM"));
}
