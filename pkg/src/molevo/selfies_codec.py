"""SELFIES-style codec: a total decoder and a round-tripping encoder.

The grammar is a self-contained derivation-state scheme over bracket tokens:
atom tokens (optionally bond-prefixed with = or #, charged within the +-1
set, with explicit H counts), [BranchK] tokens with base-16 length operands,
and [RingK] closure tokens with distance operands.  Any token string over the
alphabet decodes to a valence-clean molecule; out-of-capacity directives are
clamped or dropped rather than rejected.
"""

from __future__ import annotations

import re

from . import molgraph
from .molgraph import Atom, Molecule, UnsupportedFeatureError, allowed_valences

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")

# operand symbols: token -> hex digit, fixed forever
INDEX_ALPHABET = (
    "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]",
    "[Branch2]", "[=Branch2]", "[#Branch2]", "[O]", "[N]", "[=N]", "[=C]",
    "[#C]", "[S]", "[P]",
)
_INDEX_OF = {tok: i for i, tok in enumerate(INDEX_ALPHABET)}

_BOND_PREFIX = {"": 1, "=": 2, "#": 3}
_PREFIX_OF = {1: "", 2: "=", 3: "#"}

_ATOM_RE = re.compile(
    r"\[([=#]?)(B|C|N|O|P|S|F|Cl|Br|I)(?:H(\d))?([+-]1)?\]")
_BRANCH_RE = re.compile(r"\[([=#]?)Branch([123])\]")
_RING_RE = re.compile(r"\[([=#]?)Ring([12])\]")
_TOKEN_RE = re.compile(r"\[[^\[\]]*\]")


class SelfiesError(ValueError):
    pass


class UnknownTokenError(SelfiesError):
    pass


def default_alphabet() -> list[str]:
    """The declared token alphabet used for random-string generation."""
    toks: list[str] = []
    for el in ELEMENTS:
        toks.append(f"[{el}]")
        if max(allowed_valences(el, 0)) >= 2:
            toks.append(f"[={el}]")
        if max(allowed_valences(el, 0)) >= 3:
            toks.append(f"[#{el}]")
    toks += ["[N+1]", "[N-1]", "[O-1]", "[O+1]", "[C-1]", "[S-1]", "[S+1]",
             "[NH1+1]", "[NH2+1]", "[=N+1]", "[=O+1]", "[=S+1]"]
    toks += ["[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]",
             "[=Branch2]", "[Ring1]", "[Ring2]", "[=Ring1]", "[=Ring2]"]
    return toks


def tokenize(s: str) -> list[str]:
    """Split a SELFIES string into bracket tokens; rejects stray text."""
    tokens = _TOKEN_RE.findall(s)
    if "".join(tokens) != s.replace(" ", "").replace("\n", ""):
        raise SelfiesError(f"stray characters outside tokens in {s!r}")
    return tokens


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------

class _Builder:
    def __init__(self) -> None:
        self.atoms: list[Atom] = []
        self.caps: list[int] = []
        self.h_token: list[bool] = []
        self.bonds: list[tuple[int, int, int]] = []
        self.bonded: set[frozenset[int]] = set()

    def add_atom(self, element, charge, hcount) -> int:
        max_v = max(allowed_valences(element, charge))
        h = None if hcount is None else min(hcount, max_v)
        cap = max_v - (h or 0)
        self.atoms.append(Atom(element=element, formal_charge=charge,
                               explicit_h=h))
        self.caps.append(cap)
        self.h_token.append(h is not None)
        return len(self.atoms) - 1

    def add_bond(self, a, b, order) -> None:
        self.bonds.append((a, b, order))
        self.bonded.add(frozenset((a, b)))
        self.caps[a] -= order
        self.caps[b] -= order


def _read_operand(tokens: list[str], pos: int, width: int) -> tuple[int, int]:
    q = 0
    for _ in range(width):
        if pos >= len(tokens):
            return q, pos
        q = q * 16 + _INDEX_OF.get(tokens[pos], 0)
        pos += 1
    return q, pos


def _derive(tokens: list[str], b: _Builder, attach: int | None,
            first_cap: int) -> None:
    """Derive tokens into builder b, bonding the first atom to `attach`."""
    prev = attach
    cap_limit = first_cap
    pos = 0
    n = len(tokens)
    while pos < n:
        tok = tokens[pos]
        m = _ATOM_RE.fullmatch(tok)
        if m:
            prefix, el, hs, chg = m.groups()
            charge = int(chg) if chg else 0
            hcount = int(hs) if hs is not None else None
            order = _BOND_PREFIX[prefix]
            idx = b.add_atom(el, charge, hcount)
            if prev is not None:
                o = min(order, cap_limit, b.caps[prev], b.caps[idx])
                if o <= 0:
                    # attachment point exhausted: drop atom, stop deriving
                    b.atoms.pop(); b.caps.pop(); b.h_token.pop()
                    return
                b.add_bond(prev, idx, o)
            prev = idx
            cap_limit = 3
            pos += 1
            continue
        m = _BRANCH_RE.fullmatch(tok)
        if m:
            prefix, width = m.group(1), int(m.group(2))
            q, pos2 = _read_operand(tokens, pos + 1, width)
            length = q + 1
            sub = tokens[pos2 : pos2 + length]
            pos = pos2 + length
            if prev is None or b.caps[prev] <= 1:
                continue  # no room to branch; operand and body skipped
            _derive(sub, b, prev, min(_BOND_PREFIX[prefix], b.caps[prev] - 1))
            continue
        m = _RING_RE.fullmatch(tok)
        if m:
            prefix, width = m.group(1), int(m.group(2))
            q, pos = _read_operand(tokens, pos + 1, width)
            if prev is None:
                continue
            target = prev - (q + 1)
            if target < 0 or target == prev:
                continue  # reference before the first atom: ignored
            if frozenset((prev, target)) in b.bonded:
                continue
            o = min(_BOND_PREFIX[prefix], b.caps[prev], b.caps[target])
            if o >= 1:
                b.add_bond(prev, target, o)
            continue
        raise UnknownTokenError(f"unknown token {tok}")


def decode_selfies(s: str | list[str]) -> Molecule:
    """Total decoder: every token string over the alphabet yields a valid
    (possibly empty) molecule.  Raises only UnknownTokenError."""
    tokens = tokenize(s) if isinstance(s, str) else list(s)
    b = _Builder()
    _derive(tokens, b, None, 3)
    if not b.atoms:
        return Molecule([], [], [])
    # top up explicit-H atoms to a legal valence
    bond_sum = [0] * len(b.atoms)
    for a1, a2, o in b.bonds:
        bond_sum[a1] += o
        bond_sum[a2] += o
    for i, atom in enumerate(b.atoms):
        if b.h_token[i]:
            allowed = allowed_valences(atom.element, atom.formal_charge)
            total = bond_sum[i] + atom.explicit_h
            fit = min(v for v in allowed if v >= total)
            atom.explicit_h = fit - bond_sum[i]
    return molgraph.finalize(b.atoms, [(a, c, o) for a, c, o in b.bonds])


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

def _operand_tokens(q: int) -> tuple[int, list[str]]:
    """(width class, operand token list) for a non-negative operand."""
    if q < 16:
        return 1, [INDEX_ALPHABET[q]]
    if q < 16 * 16:
        return 2, [INDEX_ALPHABET[q // 16], INDEX_ALPHABET[q % 16]]
    if q < 16 ** 3:
        return 3, [INDEX_ALPHABET[q // 256], INDEX_ALPHABET[(q // 16) % 16],
                   INDEX_ALPHABET[q % 16]]
    raise SelfiesError("molecule too large to encode")


def _atom_token(atom: Atom, bond_order: int, need_h: bool) -> str:
    if atom.isotope is not None:
        raise UnsupportedFeatureError("isotopes are not encodable")
    if abs(atom.formal_charge) > 1:
        raise UnsupportedFeatureError("charges beyond +-1 are not encodable")
    if atom.element not in ELEMENTS:
        raise UnsupportedFeatureError(f"element {atom.element!r} not encodable")
    body = _PREFIX_OF[bond_order] + atom.element
    if need_h:
        body += f"H{atom.total_h}"
    if atom.formal_charge:
        body += "+1" if atom.formal_charge > 0 else "-1"
    return f"[{body}]"


def encode_selfies(mol: Molecule) -> str:
    """Encode a valid molecule; decode(encode(m)) is graph-isomorphic to m."""
    n = len(mol.atoms)
    if n == 0:
        return ""
    if mol.atoms[0].total_h > 9 or any(a.total_h > 9 for a in mol.atoms):
        raise UnsupportedFeatureError("H count beyond 9 not encodable")

    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for bi, (a, c, _) in enumerate(mol.bonds):
        adj[a].append((c, bi))
        adj[c].append((a, bi))

    bond_sum = [mol.bond_order_sum(i) for i in range(n)]

    def need_h_token(i: int) -> bool:
        atom = mol.atoms[i]
        allowed = allowed_valences(atom.element, atom.formal_charge)
        fits = [v for v in allowed if v >= bond_sum[i]]
        implied = (min(fits) - bond_sum[i]) if fits else -1
        return implied != atom.total_h

    visited = [False] * n
    placed: dict[int, int] = {}  # atom -> derivation position
    counter = [0]

    def walk(i: int, in_order: int) -> list[str]:
        visited[i] = True
        placed[i] = counter[0]
        counter[0] += 1
        out = [_atom_token(mol.atoms[i], in_order, need_h_token(i))]
        ring_bonds = []
        children = []
        for j, bi in adj[i]:
            if visited[j]:
                if placed[j] < placed[i] and (j, bi) not in used_tree.get(i, ()):
                    ring_bonds.append((j, bi))
            else:
                children.append((j, bi))
        for j, bi in ring_bonds:
            if bi in closed:
                continue
            closed.add(bi)
            q = placed[i] - placed[j] - 1
            width, operand = _operand_tokens(q)
            if width > 2:
                raise SelfiesError("ring span too large to encode")
            order = mol.kekule[bi]
            out.append(f"[{_PREFIX_OF[order]}Ring{width}]")
            out.extend(operand)
        while True:
            live = [(j, bi) for j, bi in children if not visited[j]]
            if not live:
                break
            j, bi = live[0]
            used_tree.setdefault(j, set()).add((i, bi))
            order = mol.kekule[bi]
            sub = walk(j, order)
            if len(live) > 1:
                width, operand = _operand_tokens(len(sub) - 1)
                out.append(f"[{_PREFIX_OF[order]}Branch{width}]")
                out.extend(operand)
                out.extend(sub)
            else:
                out.extend(sub)
        return out

    used_tree: dict[int, set[tuple[int, int]]] = {}
    closed: set[int] = set()
    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * n + 100))
    try:
        tokens = walk(0, 1)
    finally:
        sys.setrecursionlimit(old)
    return "".join(tokens)
