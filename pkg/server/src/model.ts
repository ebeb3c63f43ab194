/**
 * Add-alpha smoothed n-gram language model, loaded from a persisted
 * "toylm-v1" JSON artifact.
 *
 * The math mirrors the in-process reference implementation exactly:
 * a context is the last (order - 1) prefix tokens, a seen context's row is
 * log((count + alpha) / (total + alpha * V)), and an unseen context falls
 * back to the uniform distribution. Rows are therefore normalized in log
 * space to float precision, which the client re-checks on every response.
 */

import { readFileSync } from "node:fs";

export interface Vocabulary {
  surfaces: string[];
  eosId: number;
  terminalIds: number[];
}

export class ModelError extends Error {}

interface ToylmArtifact {
  format: string;
  order: number;
  alpha: number;
  vocabulary: { surfaces: string[]; eos_id: number; terminal_ids: number[] };
  counts: Record<string, Record<string, number>>;
}

export class NgramModel {
  readonly order: number;
  readonly alpha: number;
  readonly vocabulary: Vocabulary;
  private readonly counts: Map<string, number[]>;
  private readonly rows = new Map<string, number[]>();
  private readonly uniformRow: number[];

  constructor(order: number, alpha: number, vocabulary: Vocabulary,
              counts: Map<string, number[]>) {
    if (!Number.isInteger(order) || order < 1) {
      throw new ModelError(`order must be a positive integer, got ${order}`);
    }
    if (!(alpha > 0)) {
      throw new ModelError(`alpha must be > 0, got ${alpha}`);
    }
    this.order = order;
    this.alpha = alpha;
    this.vocabulary = vocabulary;
    this.counts = counts;
    const v = vocabulary.surfaces.length;
    this.uniformRow = new Array(v).fill(-Math.log(v));
  }

  static fromArtifact(data: ToylmArtifact): NgramModel {
    if (data.format !== "toylm-v1") {
      throw new ModelError(`unsupported model format: ${JSON.stringify(data.format)}`);
    }
    const voc = data.vocabulary;
    const vocabulary: Vocabulary = {
      surfaces: voc.surfaces.map(String),
      eosId: voc.eos_id,
      terminalIds: voc.terminal_ids.map(Number),
    };
    const size = vocabulary.surfaces.length;
    const counts = new Map<string, number[]>();
    for (const [key, sparse] of Object.entries(data.counts)) {
      const dense = new Array<number>(size).fill(0);
      for (const [tok, count] of Object.entries(sparse)) {
        const t = Number(tok);
        if (!Number.isInteger(t) || t < 0 || t >= size) {
          throw new ModelError(`count entry for token ${tok} outside vocabulary`);
        }
        dense[t] = count;
      }
      counts.set(key, dense);
    }
    return new NgramModel(data.order, data.alpha, vocabulary, counts);
  }

  static load(path: string): NgramModel {
    return NgramModel.fromArtifact(JSON.parse(readFileSync(path, "utf8")));
  }

  /** Normalized log-distribution over the next token after the prefix. */
  nextTokenLogprobs(prefix: number[]): number[] {
    this.checkIds(prefix);
    return this.row(this.contextKey(prefix));
  }

  /** Per-token chain-rule log-likelihoods of the whole sequence. */
  scoreSequence(tokens: number[]): number[] {
    if (tokens.length === 0) {
      throw new ModelError("cannot score an empty token sequence");
    }
    this.checkIds(tokens);
    return tokens.map(
      (tok, i) => this.row(this.contextKey(tokens.slice(0, i)))[tok],
    );
  }

  private checkIds(tokens: number[]): void {
    const v = this.vocabulary.surfaces.length;
    for (const t of tokens) {
      if (!Number.isInteger(t) || t < 0 || t >= v) {
        throw new ModelError(`token id ${t} outside vocabulary of size ${v}`);
      }
    }
  }

  private contextKey(prefix: number[]): string {
    if (this.order === 1) return "";
    return prefix.slice(-(this.order - 1)).join(",");
  }

  private row(key: string): number[] {
    const cached = this.rows.get(key);
    if (cached !== undefined) return cached;
    const counts = this.counts.get(key);
    if (counts === undefined) return this.uniformRow;
    const v = counts.length;
    const total = counts.reduce((a, b) => a + b, 0);
    const denom = Math.log(total + this.alpha * v);
    const row = counts.map((c) => Math.log(c + this.alpha) - denom);
    this.rows.set(key, row);
    return row;
  }
}

/**
 * Sentence-terminal token ids, computed by scanning the vocabulary for
 * punctuation-final surfaces; the eos token always terminates.
 */
export function sentenceTerminalIds(vocabulary: Vocabulary): number[] {
  const ids = new Set<number>([vocabulary.eosId]);
  vocabulary.surfaces.forEach((surface, id) => {
    if (/[.!?]$/.test(surface)) ids.add(id);
  });
  return [...ids].sort((a, b) => a - b);
}
