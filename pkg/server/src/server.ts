/**
 * Server runtime: configuration parsing and the stdio / TCP listen loops.
 *
 * One connection is served at a time (capabilities declare
 * concurrent_safe=false). A clean shutdown request ends the process; a peer
 * disconnect or malformed line just ends that connection.
 */

import net from "node:net";
import { createInterface } from "node:readline";
import { parseArgs } from "node:util";
import type { Readable, Writable } from "node:stream";

import { Backend, handleRequest } from "./protocol.js";

export class ConfigError extends Error {}

export interface ServerConfig {
  model: string;
  lexicons: string;
  device: string;
  truncation: number;
  listen: { kind: "stdio" } | { kind: "tcp"; port: number };
}

export function parseConfig(argv: string[]): ServerConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      model: { type: "string" },
      lexicons: { type: "string" },
      device: { type: "string", default: "cpu" },
      truncation: { type: "string", default: "2048" },
      stdio: { type: "boolean", default: false },
      tcp: { type: "string" },
    },
  });
  if (!values.model) throw new ConfigError("--model is required");
  if (!values.lexicons) throw new ConfigError("--lexicons is required");
  const truncation = Number(values.truncation);
  if (!Number.isInteger(truncation) || truncation < 1) {
    throw new ConfigError(`--truncation must be an integer >= 1, got ${values.truncation}`);
  }
  if (values.stdio && values.tcp !== undefined) {
    throw new ConfigError("choose exactly one of --stdio and --tcp");
  }
  let listen: ServerConfig["listen"] = { kind: "stdio" };
  if (values.tcp !== undefined) {
    const port = Number(values.tcp);
    if (!Number.isInteger(port) || port < 0 || port > 65535) {
      throw new ConfigError(`--tcp needs a port number, got ${values.tcp}`);
    }
    listen = { kind: "tcp", port };
  }
  return {
    model: values.model,
    lexicons: values.lexicons,
    device: values.device ?? "cpu",
    truncation,
    listen,
  };
}

/**
 * Serve one connection until a shutdown request (resolves true) or until
 * the peer disconnects or sends an unparseable line (resolves false).
 */
export function serveStream(backend: Backend, input: Readable, output: Writable): Promise<boolean> {
  return new Promise((resolve) => {
    const lines = createInterface({ input, crlfDelay: Infinity });
    let lastId = 0;
    let settled = false;
    const finish = (clean: boolean) => {
      if (settled) return;
      settled = true;
      lines.close();
      resolve(clean);
    };
    lines.on("line", (line) => {
      if (settled || !line.trim()) return;
      let parsed: unknown;
      try {
        parsed = JSON.parse(line);
      } catch {
        finish(false);
        return;
      }
      if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
        finish(false);
        return;
      }
      const { outcome, lastId: next } = handleRequest(
        backend, parsed as Record<string, unknown>, lastId,
      );
      lastId = next;
      output.write(JSON.stringify(outcome.response) + "\n");
      if (outcome.stop) finish(true);
    });
    lines.on("close", () => finish(false));
  });
}

export function serveStdio(backend: Backend): Promise<boolean> {
  return serveStream(backend, process.stdin, process.stdout);
}

/**
 * Accept connections one at a time until some client requests shutdown.
 * Announces the bound address on stdout first (useful with port 0).
 */
export function serveTcp(backend: Backend, port: number, host = "127.0.0.1"): Promise<void> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.maxConnections = 1;
    server.on("connection", (sock) => {
      // an abruptly dropped client must not take the server down
      sock.on("error", () => {});
      void serveStream(backend, sock, sock).then((clean) => {
        sock.end();
        if (clean) server.close(() => resolve());
      });
    });
    server.on("error", reject);
    server.listen(port, host, () => {
      const addr = server.address() as net.AddressInfo;
      process.stdout.write(`listening on ${addr.address}:${addr.port}\n`);
    });
  });
}
