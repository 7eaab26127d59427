import { describe, expect, it } from "vitest";

import { FEATURE_WIDTH, atomFeatures, featurizeSmiles, hybridization } from "../src/features.js";
import { parseSmiles } from "../src/smiles.js";

describe("atomFeatures", () => {
  it("gives methane the documented carbon vector", () => {
    const graph = featurizeSmiles("C");
    expect(graph.nodes).toHaveLength(1);
    expect(graph.edges).toHaveLength(0);
    const vec = graph.nodes[0];
    expect(vec).toHaveLength(FEATURE_WIDTH);
    expect(vec[6]).toBe(1); // atom type: atomic number 6
    expect(vec.slice(0, 100).reduce((a, b) => a + b)).toBe(1);
    expect(vec[100 + 2]).toBe(1); // formal charge 0 -> middle slot
    expect(vec[105 + 0]).toBe(1); // degree 0
    expect(vec[111 + 0]).toBe(1); // no chirality
    expect(vec[116 + 4]).toBe(1); // four hydrogens
    expect(vec[121]).toBeCloseTo(0.12011, 10); // mass / 100
    expect(vec[122]).toBe(0); // not aromatic
    expect(vec[123 + 2]).toBe(1); // SP3
  });

  it("keeps every block at most one-hot", () => {
    const smiles = [
      "c1ccccc1", "CC(=O)O", "[O-]S(=O)(=O)[O-]", "C#N", "[C@@H](N)(C)C(=O)O",
    ];
    const blocks: [number, number][] = [
      [0, 100], [100, 5], [105, 6], [111, 5], [116, 5], [123, 5],
    ];
    for (const s of smiles) {
      for (const vec of featurizeSmiles(s).nodes) {
        expect(vec).toHaveLength(FEATURE_WIDTH);
        for (const [start, size] of blocks) {
          const hot = vec.slice(start, start + size).reduce((a, b) => a + b);
          expect(hot).toBeLessThanOrEqual(1);
        }
      }
    }
  });

  it("marks aromatic atoms and SP2 hybridization in benzene", () => {
    for (const vec of featurizeSmiles("c1ccccc1").nodes) {
      expect(vec[122]).toBe(1);
      expect(vec[123 + 1]).toBe(1); // SP2
    }
  });

  it("flags charges at the right slots", () => {
    const nodes = featurizeSmiles("[NH4+].[Cl-]").nodes;
    expect(nodes[0][100 + 3]).toBe(1); // +1
    expect(nodes[1][100 + 1]).toBe(1); // -1
  });

  it("uses SP for triple bonds and SP2 for one double", () => {
    const nitrile = parseSmiles("CC#N");
    expect(hybridization(nitrile.atoms[1], nitrile, 1, 2, 0)).toBe("SP");
    const carbonyl = parseSmiles("CC(=O)C");
    expect(hybridization(carbonyl.atoms[1], carbonyl, 1, 3, 0)).toBe("SP2");
  });

  it("zeroes the atom-type block beyond the table (wildcards)", () => {
    const vec = featurizeSmiles("*C").nodes[0];
    expect(vec.slice(0, 100).reduce((a, b) => a + b)).toBe(0);
  });

  it("deduplicates ring-closure edges", () => {
    const graph = featurizeSmiles("C1CC1");
    expect(graph.edges).toHaveLength(3);
    const atoms = atomFeatures(parseSmiles("C1CC1"));
    for (const vec of atoms) expect(vec[105 + 2]).toBe(1); // degree 2
  });
});
