/**
 * 128-dimensional atom feature vectors, laid out as fixed one-hot blocks:
 *
 *   atom type (by atomic number)  100
 *   formal charge in {-2..2}        5
 *   number of bonds (degree 0..5)   6
 *   chirality tag                   5
 *   number of hydrogens (0..4)      5
 *   atomic mass / 100               1
 *   aromaticity flag                1
 *   hybridization (SP..SP3D2)       5
 *
 * Out-of-range values leave their one-hot block all zero.  Hybridization is
 * a heuristic from bond orders (no 3-D perception): aromatic -> SP2, any
 * triple or two doubles -> SP, one double -> SP2, otherwise by sigma count
 * (degree + hydrogens): 5 -> SP3D, >= 6 -> SP3D2, else SP3.
 */

import { ATOMIC_MASSES } from "./elements.js";
import { Atom, ParsedMolecule, degrees, hydrogenCounts, parseSmiles } from "./smiles.js";

export const FEATURE_WIDTH = 128;

const BLOCKS = {
  atomType: [0, 100],
  charge: [100, 5],
  degree: [105, 6],
  chirality: [111, 5],
  hydrogens: [116, 5],
  mass: [121, 1],
  aromatic: [122, 1],
  hybridization: [123, 5],
} as const;

const CHIRALITY_INDEX: Record<string, number> = {
  none: 0, clockwise: 1, counterclockwise: 2, other: 3,
};

const HYBRIDIZATIONS = ["SP", "SP2", "SP3", "SP3D", "SP3D2"] as const;
export type Hybridization = (typeof HYBRIDIZATIONS)[number];

export function hybridization(atom: Atom, mol: ParsedMolecule, idx: number,
                              degree: number, hydrogens: number): Hybridization {
  if (atom.aromatic) return "SP2";
  let doubles = 0;
  let triples = 0;
  for (const bond of mol.bonds) {
    if (bond.a !== idx && bond.b !== idx) continue;
    if (bond.order === 2) doubles += 1;
    if (bond.order >= 3) triples += 1;
  }
  if (triples > 0 || doubles >= 2) return "SP";
  if (doubles === 1) return "SP2";
  const sigma = degree + hydrogens;
  if (sigma >= 6) return "SP3D2";
  if (sigma === 5) return "SP3D";
  return "SP3";
}

function setOneHot(vec: number[], block: readonly [number, number], index: number): void {
  const [start, size] = block;
  if (index >= 0 && index < size) vec[start + index] = 1;
}

export function atomFeatures(mol: ParsedMolecule): number[][] {
  const deg = degrees(mol);
  const hyd = hydrogenCounts(mol);
  return mol.atoms.map((atom, idx) => {
    const vec = new Array(FEATURE_WIDTH).fill(0);
    const z = atom.atomicNumber;
    setOneHot(vec, BLOCKS.atomType, z >= 1 && z < 100 ? z : -1);
    setOneHot(vec, BLOCKS.charge, atom.charge + 2);
    setOneHot(vec, BLOCKS.degree, deg[idx]);
    setOneHot(vec, BLOCKS.chirality, CHIRALITY_INDEX[atom.chirality]);
    setOneHot(vec, BLOCKS.hydrogens, hyd[idx]);
    if (atom.atomicNumber > 0 && atom.atomicNumber < ATOMIC_MASSES.length) {
      vec[BLOCKS.mass[0]] = ATOMIC_MASSES[atom.atomicNumber] / 100;
    }
    vec[BLOCKS.aromatic[0]] = atom.aromatic ? 1 : 0;
    const hybIndex = HYBRIDIZATIONS.indexOf(
      hybridization(atom, mol, idx, deg[idx], hyd[idx]),
    );
    setOneHot(vec, BLOCKS.hybridization, hybIndex);
    return vec;
  });
}

export interface FeaturizedGraph {
  nodes: number[][];
  edges: [number, number][];
}

/** SMILES -> node feature matrix plus undirected edge list (stored once,
 * in order of appearance). */
export function featurizeSmiles(smiles: string): FeaturizedGraph {
  const mol = parseSmiles(smiles);
  const seen = new Set<string>();
  const edges: [number, number][] = [];
  for (const bond of mol.bonds) {
    const key = `${Math.min(bond.a, bond.b)}-${Math.max(bond.a, bond.b)}`;
    if (seen.has(key)) continue;  // ring closures can duplicate an edge
    seen.add(key);
    edges.push([bond.a, bond.b]);
  }
  return { nodes: atomFeatures(mol), edges };
}
