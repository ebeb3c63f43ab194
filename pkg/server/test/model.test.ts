import { describe, expect, it } from "vitest";

import { LexiconClassifier, ClassifierError } from "../src/classifier.js";
import { ModelError, NgramModel, sentenceTerminalIds } from "../src/model.js";

// Bigram counts derived by hand from the token stream [1, 2, 0, 1, 3, 0]
// with the context being the single previous token ("" at stream start).
const ARTIFACT = {
  format: "toylm-v1",
  order: 2,
  alpha: 1.0,
  vocabulary: {
    surfaces: [".", "a", "b", "c", "x!"],
    eos_id: 0,
    terminal_ids: [0, 4],
  },
  counts: {
    "": { "1": 1 },
    "0": { "1": 1 },
    "1": { "2": 1, "3": 1 },
    "2": { "0": 1 },
    "3": { "0": 1 },
  },
};

const LEXICONS = {
  labels: ["pos", "neg"],
  smoothing: 0.5,
  lexicons: {
    pos: { good: 2.0, fine: 1.0 },
    neg: { bad: 2.0 },
  },
};

function logSumExp(values: number[]): number {
  const m = Math.max(...values);
  return m + Math.log(values.reduce((acc, v) => acc + Math.exp(v - m), 0));
}

describe("NgramModel", () => {
  const model = NgramModel.fromArtifact(structuredClone(ARTIFACT));

  it("computes add-alpha rows for seen contexts", () => {
    // context "1": counts [0, 0, 1, 1, 0], total 2, denom 2 + 1 * 5 = 7
    const row = model.nextTokenLogprobs([0, 1]);
    expect(row).toHaveLength(5);
    expect(row[2]).toBeCloseTo(Math.log(2 / 7), 12);
    expect(row[3]).toBeCloseTo(Math.log(2 / 7), 12);
    expect(row[0]).toBeCloseTo(Math.log(1 / 7), 12);
  });

  it("uses only the last order-1 tokens as context", () => {
    expect(model.nextTokenLogprobs([3, 2, 0, 1]))
      .toEqual(model.nextTokenLogprobs([1]));
  });

  it("falls back to the uniform row for unseen contexts", () => {
    const row = model.nextTokenLogprobs([4]);
    for (const lp of row) expect(lp).toBeCloseTo(-Math.log(5), 12);
  });

  it("returns normalized log-distributions", () => {
    for (const prefix of [[], [1], [2], [4], [0, 1, 2]]) {
      expect(Math.abs(logSumExp(model.nextTokenLogprobs(prefix)))).toBeLessThan(1e-9);
    }
  });

  it("scores sequences by the chain rule", () => {
    // steps: "" -> 1 (2/6), "1" -> 2 (2/7), "2" -> 0 (2/6)
    const logliks = model.scoreSequence([1, 2, 0]);
    expect(logliks[0]).toBeCloseTo(Math.log(1 / 3), 12);
    expect(logliks[1]).toBeCloseTo(Math.log(2 / 7), 12);
    expect(logliks[2]).toBeCloseTo(Math.log(1 / 3), 12);
  });

  it("agrees with per-step next-token rows", () => {
    const tokens = [1, 3, 0, 1, 2];
    const logliks = model.scoreSequence(tokens);
    tokens.forEach((tok, i) => {
      expect(logliks[i]).toBe(model.nextTokenLogprobs(tokens.slice(0, i))[tok]);
    });
  });

  it("rejects empty sequences and out-of-vocabulary ids", () => {
    expect(() => model.scoreSequence([])).toThrow(ModelError);
    expect(() => model.nextTokenLogprobs([99])).toThrow(ModelError);
    expect(() => model.scoreSequence([1, 99])).toThrow(ModelError);
  });

  it("rejects unknown artifact formats and bad parameters", () => {
    expect(() => NgramModel.fromArtifact({ ...structuredClone(ARTIFACT), format: "toylm-v2" }))
      .toThrow(ModelError);
    expect(() => NgramModel.fromArtifact({ ...structuredClone(ARTIFACT), order: 0 }))
      .toThrow(ModelError);
    expect(() => NgramModel.fromArtifact({ ...structuredClone(ARTIFACT), alpha: 0 }))
      .toThrow(ModelError);
    const stray = structuredClone(ARTIFACT);
    stray.counts[""] = { "9": 1 };
    expect(() => NgramModel.fromArtifact(stray)).toThrow(ModelError);
  });
});

describe("sentenceTerminalIds", () => {
  it("collects eos plus punctuation-final surfaces, sorted", () => {
    const ids = sentenceTerminalIds({
      surfaces: ["</s>", "word", "stop.", "huh?", "wow!", "mid.dle"],
      eosId: 0,
      terminalIds: [],
    });
    expect(ids).toEqual([0, 2, 3, 4]);
  });
});

describe("LexiconClassifier", () => {
  const clf = LexiconClassifier.fromArtifact(structuredClone(LEXICONS));

  it("returns normalized log-probabilities favoring matched keywords", () => {
    const dist = clf.classify("a good day");
    expect(dist).toHaveLength(2);
    expect(Math.abs(logSumExp(dist))).toBeLessThan(1e-9);
    expect(dist[0]).toBeGreaterThan(dist[1]);
    // logits [0.5 + 2.0, 0.5] under log-softmax
    expect(dist[0]).toBeCloseTo(2.5 - logSumExp([2.5, 0.5]), 12);
  });

  it("folds case and counts each keyword once per sentence", () => {
    const dist = clf.classify("Bad, BAD thing!");
    expect(dist[1]).toBeCloseTo(2.5 - logSumExp([0.5, 2.5]), 12);
    expect(dist[1]).toBeGreaterThan(dist[0]);
  });

  it("is uniform when no keyword matches", () => {
    const dist = clf.classify("zzz qqq");
    expect(dist[0]).toBeCloseTo(-Math.LN2, 12);
    expect(dist[1]).toBeCloseTo(-Math.LN2, 12);
  });

  it("clamps log-probabilities at zero", () => {
    for (const text of ["good fine", "bad", "zzz"]) {
      for (const lp of clf.classify(text)) expect(lp).toBeLessThanOrEqual(0);
    }
  });

  it("rejects blank input", () => {
    expect(() => clf.classify("")).toThrow(ClassifierError);
    expect(() => clf.classify("   ")).toThrow(ClassifierError);
  });

  it("rejects bad smoothing and missing lexicon entries", () => {
    expect(() => LexiconClassifier.fromArtifact({ ...structuredClone(LEXICONS), smoothing: 0 }))
      .toThrow(ClassifierError);
    const missing = structuredClone(LEXICONS);
    delete (missing.lexicons as Record<string, unknown>).neg;
    expect(() => LexiconClassifier.fromArtifact(missing)).toThrow(ClassifierError);
  });
});
