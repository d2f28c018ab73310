"""Default graph genetic operators: fitness-proportional parent sampling,
fragment-splicing crossover (ring or chain cut), and random graph mutations.

Operators work on the kekulized graph and re-finalize the result, so every
non-None output is a valid molecule.  All randomness flows through the
caller-supplied random.Random stream, which makes runs seed-reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import networkx as nx

from . import molgraph
from .molgraph import Atom, Molecule

RETRY_BUDGET = 10
FITNESS_SHIFT_EPS = 1e-6

MUTATION_KINDS = ("bond_insert", "bond_delete", "atom_insert", "atom_delete",
                  "bond_order_swap", "atom_change")

_ELEMENT_CANDIDATES = ("C", "N", "O", "S", "F", "Cl", "Br")


@dataclass
class MutationTable:
    probabilities: dict[str, float] = field(
        default_factory=lambda: {k: 1.0 / len(MUTATION_KINDS)
                                 for k in MUTATION_KINDS})

    def __post_init__(self):
        unknown = set(self.probabilities) - set(MUTATION_KINDS)
        if unknown:
            raise ValueError(f"unknown mutation kinds: {sorted(unknown)}")
        if any(p < 0 for p in self.probabilities.values()):
            raise ValueError("mutation probabilities must be >= 0")
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mutation probabilities must sum to 1, got {total}")

    def draw(self, rng: random.Random) -> str:
        kinds = list(self.probabilities)
        return rng.choices(kinds, [self.probabilities[k] for k in kinds])[0]


def derive_rng(seed: int, *path) -> random.Random:
    """Deterministic child stream for (seed, path); platform-stable."""
    import hashlib

    key = ":".join([str(seed)] + [str(p) for p in path]).encode()
    return random.Random(int.from_bytes(
        hashlib.blake2b(key, digest_size=8).digest(), "big"))


def sample_parents(pop, rng: random.Random):
    """Two draws proportional to fitness; distinct unless the pool has one."""
    if not pop:
        raise ValueError("cannot sample parents from an empty population")
    if len(pop) == 1:
        return pop[0], pop[0]
    fits = [ind.fitness for ind in pop]
    lo = min(fits)
    if lo < 0:
        fits = [f - lo + FITNESS_SHIFT_EPS for f in fits]
    if sum(fits) <= 0:
        fits = [1.0] * len(fits)
    i = rng.choices(range(len(pop)), weights=fits)[0]
    rest_w = fits[:i] + fits[i + 1:]
    rest_i = list(range(i)) + list(range(i + 1, len(pop)))
    if sum(rest_w) <= 0:
        rest_w = [1.0] * len(rest_w)
    j = rng.choices(rest_i, weights=rest_w)[0]
    return pop[i], pop[j]


# ---------------------------------------------------------------------------
# editable graph helpers
# ---------------------------------------------------------------------------

def _editable(mol: Molecule):
    atoms = [Atom(a.element, a.formal_charge, a.explicit_h, False, a.isotope)
             for a in mol.atoms]
    bonds = [(a, b, k) for (a, b, _), k in zip(mol.bonds, mol.kekule)]
    return atoms, bonds


def _components(n_atoms: int, bonds) -> list[set[int]]:
    g = nx.Graph()
    g.add_nodes_from(range(n_atoms))
    g.add_edges_from((a, b) for a, b, _ in bonds)
    return [set(c) for c in nx.connected_components(g)]


def _spare_valence(atoms, bonds, idx: int) -> int:
    atom = atoms[idx]
    if atom.explicit_h is not None:
        return 0  # bracket atoms have a pinned valence; leave them alone
    s = sum(k for a, b, k in bonds if idx in (a, b))
    allowed = molgraph.allowed_valences(atom.element, atom.formal_charge)
    return max(allowed) - s


def _bridges(n_atoms: int, bonds) -> set[frozenset[int]]:
    g = nx.Graph()
    g.add_nodes_from(range(n_atoms))
    g.add_edges_from((a, b) for a, b, _ in bonds)
    return {frozenset(e) for e in nx.bridges(g)}


def _cut_chain(mol: Molecule, rng: random.Random):
    """Cut one acyclic single bond; return (atoms, bonds, fragment, attach)."""
    atoms, bonds = _editable(mol)
    bridges = _bridges(len(atoms), bonds)
    candidates = [bi for bi, (a, b, k) in enumerate(bonds)
                  if k == 1 and frozenset((a, b)) in bridges
                  and atoms[a].explicit_h is None and atoms[b].explicit_h is None]
    if not candidates:
        return None
    bi = rng.choice(candidates)
    a, b, _ = bonds[bi]
    rest = bonds[:bi] + bonds[bi + 1:]
    comps = _components(len(atoms), rest)
    attach = rng.choice((a, b))
    comp = next(c for c in comps if attach in c)
    return atoms, rest, comp, attach


def _cut_ring(mol: Molecule, rng: random.Random):
    """Cut two single bonds of one ring; return a 2-attachment fragment."""
    atoms, bonds = _editable(mol)
    g = nx.Graph()
    g.add_nodes_from(range(len(atoms)))
    for bi, (a, b, _) in enumerate(bonds):
        g.add_edge(a, b, idx=bi)
    cycles = nx.cycle_basis(g)
    rng.shuffle(cycles)
    for cycle in cycles:
        ring_bonds = []
        for k in range(len(cycle)):
            a, b = cycle[k], cycle[(k + 1) % len(cycle)]
            bi = g.edges[a, b]["idx"]
            if (bonds[bi][2] == 1 and atoms[a].explicit_h is None
                    and atoms[b].explicit_h is None):
                ring_bonds.append(bi)
        if len(ring_bonds) < 2:
            continue
        b1, b2 = rng.sample(ring_bonds, 2)
        rest = [bd for i, bd in enumerate(bonds) if i not in (b1, b2)]
        comps = _components(len(atoms), rest)
        if len(comps) != 2:
            continue
        comp = rng.choice(comps)
        ends = []
        for bi in (b1, b2):
            a, b = bonds[bi][0], bonds[bi][1]
            ends.append(a if a in comp else b)
        return atoms, rest, comp, tuple(ends)
    return None


def _splice(fa, fb) -> Molecule | None:
    """Join two cut fragments (each: atoms, bonds, component, attachments)."""
    atoms_a, bonds_a, comp_a, att_a = fa
    atoms_b, bonds_b, comp_b, att_b = fb
    remap_a = {old: i for i, old in enumerate(sorted(comp_a))}
    remap_b = {old: i + len(remap_a) for i, old in enumerate(sorted(comp_b))}
    atoms = [atoms_a[o] for o in sorted(comp_a)] + [atoms_b[o] for o in sorted(comp_b)]
    atoms = [Atom(a.element, a.formal_charge, a.explicit_h, False, a.isotope)
             for a in atoms]
    bonds = [(remap_a[a], remap_a[b], k) for a, b, k in bonds_a
             if a in comp_a and b in comp_a]
    bonds += [(remap_b[a], remap_b[b], k) for a, b, k in bonds_b
              if a in comp_b and b in comp_b]
    if isinstance(att_a, tuple):
        for x, y in zip(att_a, att_b):
            bonds.append((remap_a[x], remap_b[y], 1))
    else:
        bonds.append((remap_a[att_a], remap_b[att_b], 1))
    return molgraph.try_finalize(atoms, bonds)


def crossover(a: Molecule, b: Molecule, rng: random.Random,
              stats: dict | None = None) -> Molecule | None:
    """Splice random fragments of two parents; ring or chain cut with equal
    likelihood.  None after the retry budget signals failure."""
    for _ in range(RETRY_BUDGET):
        ring_mode = rng.random() < 0.5
        if stats is not None:
            key = "ring" if ring_mode else "chain"
            stats[key] = stats.get(key, 0) + 1
        cut = _cut_ring if ring_mode else _cut_chain
        fa = cut(a, rng)
        fb = cut(b, rng)
        if fa is None or fb is None:
            continue
        child = _splice(fa, fb)
        if child is not None and child.num_atoms() > 0:
            if molgraph.validate(child).ok:
                return child
    return None


# ---------------------------------------------------------------------------
# mutations
# ---------------------------------------------------------------------------

def _mut_atom_insert(atoms, bonds, rng):
    hosts = [i for i in range(len(atoms)) if _spare_valence(atoms, bonds, i) >= 1
             and atoms[i].explicit_h is None]
    if not hosts:
        return None
    host = rng.choice(hosts)
    el = rng.choice(("C", "N", "O"))
    atoms = atoms + [Atom(el)]
    bonds = bonds + [(host, len(atoms) - 1, 1)]
    return atoms, bonds


def _mut_atom_delete(atoms, bonds, rng):
    if len(atoms) <= 1:
        return None
    terminals = [i for i in range(len(atoms))
                 if sum(1 for a, b, _ in bonds if i in (a, b)) == 1]
    if not terminals:
        return None
    victim = rng.choice(terminals)
    remap = {old: i for i, old in enumerate(x for x in range(len(atoms))
                                            if x != victim)}
    new_atoms = [a for i, a in enumerate(atoms) if i != victim]
    new_bonds = [(remap[a], remap[b], k) for a, b, k in bonds
                 if victim not in (a, b)]
    return new_atoms, new_bonds


def _mut_bond_insert(atoms, bonds, rng):
    g = nx.Graph()
    g.add_nodes_from(range(len(atoms)))
    g.add_edges_from((a, b) for a, b, _ in bonds)
    pairs = [(i, j) for i in range(len(atoms)) for j in range(i + 1, len(atoms))
             if not g.has_edge(i, j)
             and _spare_valence(atoms, bonds, i) >= 1
             and _spare_valence(atoms, bonds, j) >= 1
             and atoms[i].explicit_h is None and atoms[j].explicit_h is None
             and 3 <= nx.shortest_path_length(g, i, j) <= 6]
    if not pairs:
        return None
    i, j = rng.choice(pairs)
    return atoms, bonds + [(i, j, 1)]


def _mut_bond_delete(atoms, bonds, rng):
    bridges = _bridges(len(atoms), bonds)
    ring_bonds = [bi for bi, (a, b, _) in enumerate(bonds)
                  if frozenset((a, b)) not in bridges]
    if not ring_bonds:
        return None
    bi = rng.choice(ring_bonds)
    return atoms, bonds[:bi] + bonds[bi + 1:]


def _mut_bond_order_swap(atoms, bonds, rng):
    if not bonds:
        return None
    order = list(range(len(bonds)))
    rng.shuffle(order)
    for bi in order:
        a, b, k = bonds[bi]
        choices = []
        spare = min(_spare_valence(atoms, bonds, a), _spare_valence(atoms, bonds, b))
        for new in (1, 2, 3):
            if new != k and new - k <= spare:
                choices.append(new)
        if not choices:
            continue
        new = rng.choice(choices)
        return atoms, bonds[:bi] + [(a, b, new)] + bonds[bi + 1:]
    return None


def _mut_atom_change(atoms, bonds, rng):
    order = list(range(len(atoms)))
    rng.shuffle(order)
    for i in order:
        atom = atoms[i]
        if atom.formal_charge != 0 or atom.explicit_h is not None:
            continue
        s = sum(k for a, b, k in bonds if i in (a, b))
        cands = [el for el in _ELEMENT_CANDIDATES
                 if el != atom.element
                 and max(molgraph.allowed_valences(el, 0)) >= s]
        if not cands:
            continue
        el = rng.choice(cands)
        new_atoms = list(atoms)
        new_atoms[i] = Atom(el)
        return new_atoms, bonds
    return None


_MUTATORS = {
    "atom_insert": _mut_atom_insert,
    "atom_delete": _mut_atom_delete,
    "bond_insert": _mut_bond_insert,
    "bond_delete": _mut_bond_delete,
    "bond_order_swap": _mut_bond_order_swap,
    "atom_change": _mut_atom_change,
}


def mutate(mol: Molecule, table: MutationTable, rng: random.Random,
           stats: dict | None = None) -> Molecule | None:
    """Apply one randomly drawn mutation kind; None after the retry budget."""
    for _ in range(RETRY_BUDGET):
        kind = table.draw(rng)
        atoms, bonds = _editable(mol)
        edit = _MUTATORS[kind](atoms, bonds, rng)
        if edit is None:
            continue
        child = molgraph.try_finalize(*edit)
        if child is not None and child.num_atoms() > 0 and molgraph.validate(child).ok:
            if stats is not None:
                stats[kind] = stats.get(kind, 0) + 1
            return child
    return None
