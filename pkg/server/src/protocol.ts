/**
 * Backend wire protocol v1: one JSON object per line, request-response.
 *
 * Request types are hello, logprobs, score, classify, shutdown. Request ids
 * are strictly increasing integers; a stale or non-integer id is answered
 * with error code "bad_id" without advancing the counter. Other error codes:
 * "bad_version" (hello with an unknown version; the connection then closes),
 * "bad_request" (unknown type), "internal" (handler failure).
 *
 * Token ids cross the wire for LM calls; classification crosses as text.
 */

import { NgramModel, sentenceTerminalIds } from "./model.js";
import { LexiconClassifier } from "./classifier.js";

export const PROTOCOL_VERSION = "v1";

export interface Capabilities {
  version: string;
  vocab_size: number;
  eos_id: number;
  terminal_ids: number[];
  concurrent_safe: boolean;
  labels: string[];
  surfaces: string[];
  batching: boolean;
}

export interface Backend {
  model: NgramModel;
  classifier: LexiconClassifier;
  truncation: number;
}

export interface Outcome {
  response: Record<string, unknown>;
  stop: boolean;
}

export function capabilitiesFor(backend: Backend): Capabilities {
  const vocab = backend.model.vocabulary;
  return {
    version: PROTOCOL_VERSION,
    vocab_size: vocab.surfaces.length,
    eos_id: vocab.eosId,
    terminal_ids: sentenceTerminalIds(vocab),
    concurrent_safe: false,
    labels: backend.classifier.labels,
    surfaces: vocab.surfaces,
    batching: false,
  };
}

function failure(id: unknown, code: string, message: string): Record<string, unknown> {
  return { id: id ?? null, ok: false, error: { code, message } };
}

function intList(value: unknown, what: string): number[] {
  if (!Array.isArray(value)) throw new Error(`${what} must be an array of token ids`);
  return value.map(Number);
}

/** The source payload is accepted and truncated per config; the n-gram
 * model itself conditions only on the prefix tokens. */
function truncatedSource(req: Record<string, unknown>, limit: number): string {
  const source = req.source as Record<string, unknown> | undefined;
  const text = typeof source?.text === "string" ? source.text : "";
  return text.slice(0, limit);
}

/** Dispatch one parsed request; returns the response, the new last id, and
 * whether the connection should stop after replying. */
export function handleRequest(
  backend: Backend,
  req: Record<string, unknown>,
  lastId: number,
): { outcome: Outcome; lastId: number } {
  const id = req.id;
  if (!Number.isInteger(id) || (id as number) <= lastId) {
    return {
      outcome: {
        response: failure(id, "bad_id", `ids must increase past ${lastId}`),
        stop: false,
      },
      lastId,
    };
  }
  const rid = id as number;
  const kind = req.type;
  try {
    if (kind === "hello") {
      if (req.version !== PROTOCOL_VERSION) {
        return {
          outcome: {
            response: failure(rid, "bad_version", `server speaks ${PROTOCOL_VERSION}`),
            stop: true,
          },
          lastId: rid,
        };
      }
      return {
        outcome: {
          response: { id: rid, ok: true, capabilities: capabilitiesFor(backend) },
          stop: false,
        },
        lastId: rid,
      };
    }
    if (kind === "logprobs") {
      truncatedSource(req, backend.truncation);
      const row = backend.model.nextTokenLogprobs(intList(req.prefix, "prefix"));
      return {
        outcome: { response: { id: rid, ok: true, logprobs: row }, stop: false },
        lastId: rid,
      };
    }
    if (kind === "score") {
      truncatedSource(req, backend.truncation);
      const logliks = backend.model.scoreSequence(intList(req.tokens, "tokens"));
      return {
        outcome: { response: { id: rid, ok: true, logliks }, stop: false },
        lastId: rid,
      };
    }
    if (kind === "classify") {
      const dist = backend.classifier.classify(String(req.text ?? ""));
      const labelLogprobs: Record<string, number> = {};
      backend.classifier.labels.forEach((name, i) => {
        labelLogprobs[name] = dist[i];
      });
      return {
        outcome: {
          response: { id: rid, ok: true, label_logprobs: labelLogprobs },
          stop: false,
        },
        lastId: rid,
      };
    }
    if (kind === "shutdown") {
      return {
        outcome: { response: { id: rid, ok: true }, stop: true },
        lastId: rid,
      };
    }
    return {
      outcome: {
        response: failure(rid, "bad_request", `unknown type ${JSON.stringify(kind)}`),
        stop: false,
      },
      lastId: rid,
    };
  } catch (err) {
    const message = err instanceof Error ? `${err.constructor.name}: ${err.message}` : String(err);
    return {
      outcome: { response: failure(rid, "internal", message), stop: false },
      lastId: rid,
    };
  }
}
