#!/usr/bin/env node
/**
 * Entry point. Both artifacts are loaded before the first request is
 * accepted, so a broken path or artifact exits nonzero instead of failing
 * mid-session. The --device flag is accepted for config compatibility; the
 * bundled model is CPU-only.
 */

import process from "node:process";

import { LexiconClassifier } from "./classifier.js";
import { NgramModel } from "./model.js";
import { Backend } from "./protocol.js";
import { parseConfig, serveStdio, serveTcp, ServerConfig } from "./server.js";

async function main(): Promise<number> {
  let config: ServerConfig;
  let backend: Backend;
  try {
    config = parseConfig(process.argv.slice(2));
    backend = {
      model: NgramModel.load(config.model),
      classifier: LexiconClassifier.load(config.lexicons),
      truncation: config.truncation,
    };
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    process.stderr.write(`error: ${message}\n`);
    return 1;
  }
  if (config.listen.kind === "tcp") {
    await serveTcp(backend, config.listen.port);
  } else {
    await serveStdio(backend);
  }
  return 0;
}

main().then(
  (code) => {
    // let stdout drain instead of process.exit(), which can drop the
    // final response; releasing stdin lets the event loop wind down
    process.exitCode = code;
    process.stdin.destroy();
  },
  (err) => {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    process.exitCode = 1;
    process.stdin.destroy();
  },
);
