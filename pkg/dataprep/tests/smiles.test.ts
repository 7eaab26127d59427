import { describe, expect, it } from "vitest";

import { degrees, hydrogenCounts, parseSmiles, SmilesError } from "../src/smiles.js";

describe("parseSmiles", () => {
  it("reads methane as a single carbon", () => {
    const mol = parseSmiles("C");
    expect(mol.atoms).toHaveLength(1);
    expect(mol.bonds).toHaveLength(0);
    expect(mol.atoms[0].atomicNumber).toBe(6);
    expect(hydrogenCounts(mol)).toEqual([4]);
  });

  it("reads ethane as two carbons and one bond", () => {
    const mol = parseSmiles("CC");
    expect(mol.atoms).toHaveLength(2);
    expect(mol.bonds).toEqual([{ a: 0, b: 1, order: 1 }]);
    expect(hydrogenCounts(mol)).toEqual([3, 3]);
  });

  it("reads benzene as an aromatic six-ring", () => {
    const mol = parseSmiles("c1ccccc1");
    expect(mol.atoms).toHaveLength(6);
    expect(mol.bonds).toHaveLength(6);
    expect(mol.atoms.every((a) => a.aromatic)).toBe(true);
    expect(mol.bonds.every((b) => b.order === 1.5)).toBe(true);
    expect(hydrogenCounts(mol)).toEqual([1, 1, 1, 1, 1, 1]);
  });

  it("handles branches and double bonds (isobutylene)", () => {
    const mol = parseSmiles("CC(=C)C");
    expect(mol.atoms).toHaveLength(4);
    expect(mol.bonds).toContainEqual({ a: 1, b: 2, order: 2 });
    expect(degrees(mol)).toEqual([1, 3, 1, 1]);
  });

  it("reads bracket atoms with charge, chirality, and H count", () => {
    const mol = parseSmiles("[C@H](F)(Cl)[N+](C)(C)C");
    expect(mol.atoms[0].chirality).toBe("counterclockwise");
    expect(mol.atoms[0].bracketHydrogens).toBe(1);
    expect(mol.atoms[3].charge).toBe(1);
    expect(mol.atoms[3].symbol).toBe("N");
  });

  it("reads two-character elements and %nn ring labels", () => {
    const mol = parseSmiles("BrC%10CC%10Cl");
    expect(mol.atoms.map((a) => a.symbol)).toEqual(["Br", "C", "C", "C", "Cl"]);
    const ring = mol.bonds.filter((b) => (b.a === 1 && b.b === 3) || (b.a === 3 && b.b === 1));
    expect(ring).toHaveLength(1);
  });

  it("treats dots as disconnections (salt forms)", () => {
    const mol = parseSmiles("CC.[Na+]");
    expect(mol.atoms).toHaveLength(3);
    expect(mol.bonds).toHaveLength(1);
  });

  it("keeps pyridine nitrogen hydrogen-free and pyrrole NH explicit", () => {
    expect(hydrogenCounts(parseSmiles("c1ccncc1"))[3]).toBe(0);
    const pyrrole = parseSmiles("c1cc[nH]c1");
    expect(hydrogenCounts(pyrrole)[3]).toBe(1);
  });

  it("rejects malformed strings", () => {
    expect(() => parseSmiles("C(")).toThrow(SmilesError);
    expect(() => parseSmiles("C1CC")).toThrow(SmilesError);
    expect(() => parseSmiles("Xx")).toThrow(SmilesError);
    expect(() => parseSmiles("")).toThrow(SmilesError);
  });

  it("parses a realistic drug molecule (caffeine)", () => {
    const mol = parseSmiles("CN1C=NC2=C1C(=O)N(C(=O)N2C)C");
    expect(mol.atoms).toHaveLength(14);
    const counts: Record<string, number> = {};
    for (const a of mol.atoms) counts[a.symbol] = (counts[a.symbol] ?? 0) + 1;
    expect(counts).toEqual({ C: 8, N: 4, O: 2 });
  });
});
