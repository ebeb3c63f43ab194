/**
 * Weighted keyword-lexicon sentence classifier, loaded from the shared
 * lexicon JSON file. Serves as the classify backend when no trained
 * classifier is available: a label's logit is smoothing plus the summed
 * weights of its keywords present in the sentence's word set, and the
 * response is the log-softmax over those logits.
 */

import { readFileSync } from "node:fs";

const WORD_RE = /[\w']+/g;

export class ClassifierError extends Error {}

interface LexiconArtifact {
  labels: string[];
  smoothing: number;
  lexicons: Record<string, Record<string, number>>;
}

function logSumExp(values: number[]): number {
  const m = Math.max(...values);
  if (!Number.isFinite(m)) return m;
  let total = 0;
  for (const v of values) total += Math.exp(v - m);
  return m + Math.log(total);
}

export class LexiconClassifier {
  readonly labels: string[];
  private readonly smoothing: number;
  private readonly lexicons: Map<string, Map<string, number>>;

  constructor(labels: string[], smoothing: number,
              lexicons: Map<string, Map<string, number>>) {
    if (!(smoothing > 0)) {
      throw new ClassifierError(`smoothing must be > 0, got ${smoothing}`);
    }
    for (const name of labels) {
      if (!lexicons.has(name)) {
        throw new ClassifierError(`label ${name} has no lexicon entry`);
      }
    }
    this.labels = labels;
    this.smoothing = smoothing;
    this.lexicons = lexicons;
  }

  static fromArtifact(data: LexiconArtifact): LexiconClassifier {
    const lexicons = new Map<string, Map<string, number>>();
    for (const [name, lex] of Object.entries(data.lexicons)) {
      lexicons.set(name, new Map(Object.entries(lex)));
    }
    return new LexiconClassifier(data.labels.map(String), data.smoothing, lexicons);
  }

  static load(path: string): LexiconClassifier {
    return LexiconClassifier.fromArtifact(JSON.parse(readFileSync(path, "utf8")));
  }

  /** Normalized label log-probabilities, in label order. */
  classify(text: string): number[] {
    if (!text.trim()) {
      throw new ClassifierError("cannot classify an empty sentence");
    }
    const words = new Set(text.toLowerCase().match(WORD_RE) ?? []);
    const logits = this.labels.map((name) => {
      let score = this.smoothing;
      for (const [keyword, weight] of this.lexicons.get(name)!) {
        if (words.has(keyword)) score += weight;
      }
      return score;
    });
    const z = logSumExp(logits);
    // log-softmax is <= 0 by construction; clamp float dust on the argmax
    return logits.map((logit) => Math.min(logit - z, 0));
  }
}
