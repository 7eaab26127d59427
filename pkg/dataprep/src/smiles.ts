/**
 * A small SMILES reader producing atoms, bonds, and the per-atom facts the
 * featurizer needs.  Covers the organic subset, bracket atoms (isotope,
 * chirality, H count, charge, atom class), ring closures including %nn,
 * branches, dots, and explicit bond orders.  Directional bonds (/ and \)
 * are read as single bonds; cis/trans stereo is not modeled.  Atom order is
 * the order of appearance in the string.
 */

import { ATOMIC_NUMBERS, DEFAULT_VALENCES } from "./elements.js";

export type Chirality = "none" | "clockwise" | "counterclockwise" | "other";

export interface Atom {
  symbol: string;
  atomicNumber: number;
  aromatic: boolean;
  charge: number;
  chirality: Chirality;
  /** explicit H count from a bracket atom, or null for organic-subset atoms */
  bracketHydrogens: number | null;
  isotope: number | null;
}

export type BondOrder = 1 | 2 | 3 | 4 | 1.5;

export interface Bond {
  a: number;
  b: number;
  order: BondOrder;
}

export interface ParsedMolecule {
  atoms: Atom[];
  bonds: Bond[];
}

export class SmilesError extends Error {}

const ORGANIC_TWO = ["Cl", "Br"];
const ORGANIC_ONE = ["B", "C", "N", "O", "P", "S", "F", "I"];
const AROMATIC_ONE = ["b", "c", "n", "o", "p", "s"];

const BOND_ORDERS: Record<string, BondOrder> = {
  "-": 1, "=": 2, "#": 3, "$": 4, ":": 1.5, "/": 1, "\\": 1,
};

function capitalize(sym: string): string {
  return sym[0].toUpperCase() + sym.slice(1);
}

export function parseSmiles(smiles: string): ParsedMolecule {
  if (!smiles || !smiles.trim()) {
    throw new SmilesError("empty SMILES string");
  }
  const text = smiles.trim();
  const atoms: Atom[] = [];
  const bonds: Bond[] = [];
  const stack: number[] = [];
  const rings = new Map<number, { atom: number; order: BondOrder | null }>();
  let prev: number | null = null;
  let pendingBond: BondOrder | null = null;
  let i = 0;

  const addAtom = (atom: Atom): void => {
    atoms.push(atom);
    const idx = atoms.length - 1;
    if (prev !== null) {
      bonds.push({ a: prev, b: idx, order: resolveOrder(atoms, prev, idx, pendingBond) });
    }
    pendingBond = null;
    prev = idx;
  };

  const closeRing = (num: number): void => {
    if (prev === null) {
      throw new SmilesError(`ring bond ${num} before any atom`);
    }
    const open = rings.get(num);
    if (open === undefined) {
      rings.set(num, { atom: prev, order: pendingBond });
      pendingBond = null;
      return;
    }
    rings.delete(num);
    const order = pendingBond ?? open.order;
    if (open.atom === prev) {
      throw new SmilesError(`ring bond ${num} closes on its own atom`);
    }
    bonds.push({ a: open.atom, b: prev, order: resolveOrder(atoms, open.atom, prev, order) });
    pendingBond = null;
  };

  while (i < text.length) {
    const ch = text[i];
    if (ch === "(") {
      if (prev === null) throw new SmilesError("branch before any atom");
      stack.push(prev);
      i += 1;
    } else if (ch === ")") {
      const back = stack.pop();
      if (back === undefined) throw new SmilesError("unbalanced ')'");
      prev = back;
      i += 1;
    } else if (ch in BOND_ORDERS) {
      pendingBond = BOND_ORDERS[ch];
      i += 1;
    } else if (ch === ".") {
      prev = null;
      pendingBond = null;
      i += 1;
    } else if (ch >= "0" && ch <= "9") {
      closeRing(Number(ch));
      i += 1;
    } else if (ch === "%") {
      const num = text.slice(i + 1, i + 3);
      if (!/^\d\d$/.test(num)) throw new SmilesError(`bad ring label at ${i}`);
      closeRing(Number(num));
      i += 3;
    } else if (ch === "[") {
      const end = text.indexOf("]", i);
      if (end < 0) throw new SmilesError("unterminated bracket atom");
      addAtom(parseBracket(text.slice(i + 1, end)));
      i = end + 1;
    } else if (ORGANIC_TWO.includes(text.slice(i, i + 2))) {
      const sym = text.slice(i, i + 2);
      addAtom(bareAtom(sym, false));
      i += 2;
    } else if (ORGANIC_ONE.includes(ch)) {
      addAtom(bareAtom(ch, false));
      i += 1;
    } else if (AROMATIC_ONE.includes(ch)) {
      addAtom(bareAtom(capitalize(ch), true));
      i += 1;
    } else if (ch === "*") {
      addAtom({
        symbol: "*", atomicNumber: 0, aromatic: false, charge: 0,
        chirality: "none", bracketHydrogens: 0, isotope: null,
      });
      i += 1;
    } else {
      throw new SmilesError(`unexpected character ${JSON.stringify(ch)} at ${i}`);
    }
  }
  if (stack.length) throw new SmilesError("unbalanced '('");
  if (rings.size) {
    throw new SmilesError(`unclosed ring bonds: ${[...rings.keys()].join(", ")}`);
  }
  if (!atoms.length) throw new SmilesError("no atoms parsed");
  return { atoms, bonds };
}

function resolveOrder(atoms: Atom[], a: number, b: number,
                      explicit: BondOrder | null): BondOrder {
  if (explicit !== null) return explicit;
  return atoms[a].aromatic && atoms[b].aromatic ? 1.5 : 1;
}

function bareAtom(symbol: string, aromatic: boolean): Atom {
  const z = ATOMIC_NUMBERS[symbol];
  if (z === undefined) throw new SmilesError(`unknown element ${symbol}`);
  return {
    symbol, atomicNumber: z, aromatic, charge: 0, chirality: "none",
    bracketHydrogens: null, isotope: null,
  };
}

const BRACKET = /^(\d+)?([A-Z][a-z]?|[a-z])(@TH[12]|@@|@)?(H\d*)?((?:\+{1,3}|-{1,3})|[+-]\d+)?(?::\d+)?$/;

function parseBracket(body: string): Atom {
  const m = BRACKET.exec(body);
  if (!m) throw new SmilesError(`cannot read bracket atom [${body}]`);
  const [, isotope, rawSym, chiral, hPart, chargePart] = m;
  const aromatic = rawSym === rawSym.toLowerCase();
  const symbol = capitalize(rawSym);
  const z = ATOMIC_NUMBERS[symbol];
  if (z === undefined) throw new SmilesError(`unknown element ${symbol}`);
  let chirality: Chirality = "none";
  if (chiral === "@") chirality = "counterclockwise";
  else if (chiral === "@@") chirality = "clockwise";
  else if (chiral) chirality = "other";
  let hydrogens = 0;
  if (hPart) hydrogens = hPart.length === 1 ? 1 : Number(hPart.slice(1));
  let charge = 0;
  if (chargePart) {
    if (/^\+{1,3}$/.test(chargePart)) charge = chargePart.length;
    else if (/^-{1,3}$/.test(chargePart)) charge = -chargePart.length;
    else charge = Number(chargePart);
  }
  return {
    symbol, atomicNumber: z, aromatic, charge, chirality,
    bracketHydrogens: hydrogens, isotope: isotope ? Number(isotope) : null,
  };
}

/** Total hydrogens per atom: bracket counts verbatim; organic-subset atoms
 * fill to the smallest default valence covering their bond-order sum
 * (aromatic bonds count 1.5, summed then rounded up). */
export function hydrogenCounts(mol: ParsedMolecule): number[] {
  const orderSum = new Array(mol.atoms.length).fill(0);
  for (const bond of mol.bonds) {
    orderSum[bond.a] += bond.order;
    orderSum[bond.b] += bond.order;
  }
  return mol.atoms.map((atom, idx) => {
    if (atom.bracketHydrogens !== null) return atom.bracketHydrogens;
    const valences = DEFAULT_VALENCES[atom.symbol];
    if (!valences) return 0;
    const used = Math.ceil(orderSum[idx] - 1e-9);
    for (const v of valences) {
      if (v >= used) return v - used;
    }
    return 0;
  });
}

/** Explicit degree per atom (bonded heavy/wildcard neighbors in the graph). */
export function degrees(mol: ParsedMolecule): number[] {
  const deg = new Array(mol.atoms.length).fill(0);
  for (const bond of mol.bonds) {
    deg[bond.a] += 1;
    deg[bond.b] += 1;
  }
  return deg;
}
