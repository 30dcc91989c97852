"""Vacuum and external-leg Feynman diagrams for quartic-type field theories.

A diagram is a multigraph whose vertices are numbered 0..V-1; parallel edges
are stored with multiplicities, and external legs are modeled as labeled
arity-1 vertices (so a direct pairing of two external legs is just an edge
between two labeled vertices). Equality and hashing go through a canonical
relabeling, which is what makes symmetry-factor bookkeeping exact.

Valuation works in momentum space: each edge carries a mode in the l1 ball
K_N with weight lambda_k^(-s), momentum is conserved at every vertex, and the
sum is evaluated by series-parallel reduction of spectral weight arrays
(convolution across parallel bundles, pointwise product along series chains),
with a dedicated evaluator for the one irreducible core that quartic vacuum
diagrams produce at order four (the K4 pattern) and a budgeted nested sum as
the last resort. Renormalization follows the extraction-contraction coproduct:
divergent connected full subgraphs are extracted in all vertex-disjoint
families, and the (twisted) antipode recursion assembles the subtracted
valuation as an exact rational combination of diagram products before any
float is produced.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .torusfield import ModeLattice, convolve_cubes


def enumeration_budget(default: int = 4) -> int:
    """Max perturbative order for diagram generation; WICKWORKS_BUDGET overrides."""
    raw = os.environ.get("WICKWORKS_BUDGET")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"WICKWORKS_BUDGET must be an integer, got {raw!r}") from exc


class Diagram:
    """Multigraph with labeled external (arity-1) vertices, canonically keyed."""

    __slots__ = ("nvertices", "edges", "labels", "_key")

    def __init__(self, nvertices: int, edges, labels=(), _canonical=False):
        self.nvertices = nvertices
        norm = {}
        for item in dict(edges).items() if isinstance(edges, dict) else edges:
            if isinstance(item[0], tuple):
                (i, j), mult = item
            else:
                i, j = item
                mult = 1
            if not (0 <= i < nvertices and 0 <= j < nvertices):
                raise ValueError("edge endpoint out of range")
            key = (min(i, j), max(i, j))
            norm[key] = norm.get(key, 0) + mult
        self.edges = tuple(sorted((k, m) for k, m in norm.items() if m))
        self.labels = tuple(sorted(tuple(lv) for lv in labels))
        for v, _ in self.labels:
            if not 0 <= v < nvertices:
                raise ValueError("label vertex out of range")
        if nvertices and not _canonical:
            degs = self.degrees()
            for v in range(nvertices):
                if degs[v] == 0:
                    raise ValueError(f"vertex {v} is isolated")
        self._key = None

    # -- structure ---------------------------------------------------------

    def degrees(self) -> list[int]:
        degs = [0] * self.nvertices
        for (i, j), m in self.edges:
            degs[i] += m
            degs[j] += m  # loops count twice
        return degs

    def arity(self, v: int) -> int:
        return self.degrees()[v]

    def n_edges(self) -> int:
        return sum(m for _, m in self.edges)

    def has_loop(self) -> bool:
        return any(i == j for (i, j), _ in self.edges)

    def external_labels(self) -> list:
        return [label for _, label in self.labels]

    def is_vacuum(self) -> bool:
        return not self.labels

    def label_of(self, v: int):
        for w, label in self.labels:
            if w == v:
                return label
        return None

    # -- canonical form ----------------------------------------------------

    def _color(self, v: int, degs) -> tuple:
        return (degs[v], str(self.label_of(v) or ""))

    def canonical_key(self) -> tuple:
        if self._key is None:
            self._key = self._compute_key()
        return self._key

    def _compute_key(self) -> tuple:
        n = self.nvertices
        if n == 0:
            return (0, (), ())
        degs = self.degrees()
        colors = {v: self._color(v, degs) for v in range(n)}
        # Weisfeiler-Lehman refinement to shrink the permutation groups
        for _ in range(2):
            new = {}
            for v in range(n):
                nbrs = []
                for (i, j), m in self.edges:
                    if i == v:
                        nbrs.append((m, colors[j]))
                    if j == v and i != j:
                        nbrs.append((m, colors[i]))
                new[v] = (colors[v], tuple(sorted(nbrs)))
            if len(set(new.values())) == len(set(colors.values())):
                colors = new
                break
            colors = new
        order = sorted(range(n), key=lambda v: (colors[v], v))
        groups = []
        for v in order:
            if groups and colors[groups[-1][-1]] == colors[v]:
                groups[-1].append(v)
            else:
                groups.append([v])
        best = None
        for perm_parts in itertools.product(
            *[itertools.permutations(g) for g in groups]
        ):
            flat = [v for part in perm_parts for v in part]
            relabel = {old: new for new, old in enumerate(flat)}
            edges = tuple(
                sorted(
                    ((min(relabel[i], relabel[j]), max(relabel[i], relabel[j])), m)
                    for (i, j), m in self.edges
                )
            )
            labels = tuple(sorted((relabel[v], label) for v, label in self.labels))
            cand = (n, edges, labels)
            if best is None or cand < best:
                best = cand
        return best

    def canonical(self) -> "Diagram":
        n, edges, labels = self.canonical_key()
        return Diagram(n, edges, labels, _canonical=True)

    def __eq__(self, other):
        return isinstance(other, Diagram) and self.canonical_key() == other.canonical_key()

    def __hash__(self):
        return hash(self.canonical_key())

    def __repr__(self):
        return f"Diagram({self.nvertices}, {list(self.edges)!r}" + (
            f", labels={list(self.labels)!r})" if self.labels else ")"
        )

    # -- operations --------------------------------------------------------

    def relabeled(self, perm: dict) -> "Diagram":
        edges = [((perm[i], perm[j]), m) for (i, j), m in self.edges]
        labels = [(perm[v], label) for v, label in self.labels]
        return Diagram(self.nvertices, edges, labels)

    def disjoint_union(self, other: "Diagram") -> "Diagram":
        shift = self.nvertices
        edges = list(self.edges) + [
            ((i + shift, j + shift), m) for (i, j), m in other.edges
        ]
        labels = list(self.labels) + [(v + shift, label) for v, label in other.labels]
        return Diagram(self.nvertices + other.nvertices, edges, labels)

    def induced(self, vertices) -> "Diagram":
        """Full subgraph on a vertex subset: all parallel edges inside come along."""
        vset = sorted(set(vertices))
        relabel = {v: i for i, v in enumerate(vset)}
        edges = [
            ((relabel[i], relabel[j]), m)
            for (i, j), m in self.edges
            if i in relabel and j in relabel
        ]
        labels = [(relabel[v], label) for v, label in self.labels if v in relabel]
        return Diagram(len(vset), edges, labels)

    def contract(self, parts) -> "Diagram":
        """Replace each vertex set in `parts` by a single vertex.

        Internal edges of each part disappear; everything else survives, so
        the new vertex's arity is the number of edges leaving the part.
        """
        parts = [frozenset(p) for p in parts]
        seen = set()
        for p in parts:
            if seen & p:
                raise ValueError("contraction parts must be disjoint")
            seen |= p
        where = {}
        for idx, p in enumerate(parts):
            for v in p:
                where[v] = idx
        outside = [v for v in range(self.nvertices) if v not in where]
        relabel = {}
        for idx in range(len(parts)):
            relabel[("part", idx)] = idx
        for pos, v in enumerate(outside):
            relabel[("vertex", v)] = len(parts) + pos

        def target(v):
            return (
                relabel[("part", where[v])] if v in where else relabel[("vertex", v)]
            )

        edges = []
        for (i, j), m in self.edges:
            if i in where and j in where and where[i] == where[j]:
                continue
            edges.append(((target(i), target(j)), m))
        labels = [(target(v), label) for v, label in self.labels]
        return Diagram(len(parts) + len(outside), edges, labels)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": self.nvertices,
            "arities": self.degrees(),
            "edges": [[i, j, m] for (i, j), m in self.edges],
            "external": [[v, label] for v, label in self.labels],
            "canonical": self.canonical_key() == (self.nvertices, self.edges, self.labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Diagram":
        return cls(
            data["vertices"],
            [((i, j), m) for i, j, m in data["edges"]],
            [(v, label) for v, label in data.get("external", [])],
        )

    def to_dot(self, name: str = "diagram") -> str:
        lines = [f"graph {name} {{"]
        for v in range(self.nvertices):
            label = self.label_of(v)
            shape = 'shape=point' if label is None else f'label="{label}"'
            lines.append(f"  v{v} [{shape}];")
        for (i, j), m in self.edges:
            lines.extend([f"  v{i} -- v{j};"] * m)
        lines.append("}")
        return "\n".join(lines)


EMPTY = Diagram(0, ())


def single_edge() -> Diagram:
    return Diagram(2, [((0, 1), 1)])


def banana(m: int) -> Diagram:
    """Two vertices joined by m parallel edges."""
    return Diagram(2, [((0, 1), m)])


def double_triangle() -> Diagram:
    """Three vertices pairwise joined by double edges (the 1728-count class)."""
    return Diagram(3, [((0, 1), 2), ((0, 2), 2), ((1, 2), 2)])


def sunset_with_tail() -> Diagram:
    """Triple edge plus a two-valent spectator: edges 0=1 (x3), 0-2, 1-2."""
    return Diagram(3, [((0, 1), 3), ((0, 2), 1), ((1, 2), 1)])


class DiagramSum:
    """Formal rational combination of canonical diagrams; a commutative ring.

    The product is the disjoint union extended bilinearly; the empty diagram
    is the multiplicative unit, so these sums can serve as the value ring of
    the convolution algebra (linked-cluster via log*).
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for g, c in (terms.items() if isinstance(terms, dict) else terms):
                c = Fraction(c)
                if c:
                    g = g.canonical()
                    self.terms[g] = self.terms.get(g, Fraction(0)) + c
            self.terms = {g: c for g, c in self.terms.items() if c}

    @classmethod
    def zero(cls) -> "DiagramSum":
        return cls()

    @classmethod
    def unit(cls) -> "DiagramSum":
        return cls({EMPTY: 1})

    @classmethod
    def of(cls, diagram: Diagram, coeff=1) -> "DiagramSum":
        return cls({diagram: coeff})

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if isinstance(other, DiagramSum):
            return self.terms == other.terms
        if other == 0:
            return not self.terms
        return NotImplemented

    def __add__(self, other):
        out = dict(self.terms)
        for g, c in other.terms.items():
            out[g] = out.get(g, Fraction(0)) + c
        return DiagramSum(out)

    __radd__ = __add__

    def __neg__(self):
        return DiagramSum({g: -c for g, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return DiagramSum({g: c * other for g, c in self.terms.items()})
        out = {}
        for g1, c1 in self.terms.items():
            for g2, c2 in other.terms.items():
                g = g1.disjoint_union(g2).canonical()
                out[g] = out.get(g, Fraction(0)) + c1 * c2
        return DiagramSum(out)

    __rmul__ = __mul__

    def total_coefficient(self) -> Fraction:
        return sum(self.terms.values(), Fraction(0))

    def map_coefficients(self, fn) -> "DiagramSum":
        return DiagramSum({g: fn(c) for g, c in self.terms.items()})

    def filter_connected(self) -> "DiagramSum":
        return DiagramSum({g: c for g, c in self.terms.items() if is_connected(g)})

    def __repr__(self):
        return f"DiagramSum({self.terms!r})"


# ---------------------------------------------------------------------------
# generation


def generate_diagrams(vertex_arities, external_labels=()) -> DiagramSum:
    """All loop-free multigraphs from leg matchings, with multiplicity counts.

    Vertices carry the given arities; each external label contributes one
    arity-1 labeled vertex. Self-pairings inside a vertex are excluded (the
    Wick-ordered powers have no self-contractions), and the coefficient of a
    canonical class is the number of labeled leg matchings realizing it:
    prod_v arity_v! / prod_{i<j} m_ij! summed over labeled presentations.
    """
    arities = list(vertex_arities) + [1] * len(external_labels)
    if any(a < 1 for a in arities):
        raise ValueError("arities must be >= 1")
    if sum(arities) % 2:
        raise ValueError("total leg count must be even")
    n = len(arities)
    labels = [
        (len(vertex_arities) + i, label) for i, label in enumerate(external_labels)
    ]

    out: dict[Diagram, Fraction] = {}
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def fill(idx, remaining, chosen):
        if idx == len(pairs):
            if any(remaining):
                return
            count = 1
            for a in arities:
                count *= factorial(a)
            for m in chosen.values():
                count //= factorial(m)
            g = Diagram(n, [((i, j), m) for (i, j), m in chosen.items() if m], labels)
            key = g.canonical()
            out[key] = out.get(key, Fraction(0)) + count
            return
        i, j = pairs[idx]
        # legs left on i or j must fit on pairs not yet filled
        cap = max(arities)
        later_i = sum(1 for (a, b) in pairs[idx + 1 :] if i in (a, b))
        later_j = sum(1 for (a, b) in pairs[idx + 1 :] if j in (a, b))
        hi = min(remaining[i], remaining[j])
        for m in range(hi + 1):
            if remaining[i] - m > cap * later_i or remaining[j] - m > cap * later_j:
                continue
            remaining[i] -= m
            remaining[j] -= m
            if m:
                chosen[(i, j)] = m
            fill(idx + 1, remaining, chosen)
            if m:
                del chosen[(i, j)]
            remaining[i] += m
            remaining[j] += m

    fill(0, list(arities), {})
    return DiagramSum(out)


def connected_components(g: Diagram) -> list[Diagram]:
    if g.nvertices == 0:
        return []
    parent = list(range(g.nvertices))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for (i, j), _ in g.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    comps: dict[int, list[int]] = {}
    for v in range(g.nvertices):
        comps.setdefault(find(v), []).append(v)
    return [g.induced(vs) for vs in comps.values()]


def is_connected(g: Diagram) -> bool:
    return len(connected_components(g)) == 1


# ---------------------------------------------------------------------------
# power counting


def degree(g: Diagram, d) -> float:
    """deg = d (|V| - c) - (d - 2) |E| with c the component count.

    For connected diagrams this is the usual d(|V| - 1) - (d - 2)|E|; the
    component-aware form keeps the degree additive across disjoint unions.
    """
    c = len(connected_components(g))
    return d * (g.nvertices - c) - (d - 2) * g.n_edges()


def degree_coeffs(g: Diagram) -> tuple[int, int]:
    """(a, b) with deg(Gamma, d) = a + b d, exact integers."""
    c = len(connected_components(g))
    e = g.n_edges()
    return (2 * e, g.nvertices - c - e)


def proper_divergent_subgraphs(g: Diagram, d) -> list[tuple[frozenset, Diagram]]:
    """Connected full subgraphs on >= 2 vertices with deg <= 0, proper in g.

    Returned as (vertex set, induced diagram) pairs; these are the candidates
    the extraction-contraction coproduct sums over.
    """
    out = []
    n = g.nvertices
    for size in range(2, n + 1):
        for subset in itertools.combinations(range(n), size):
            inside = set(subset)
            touched = set()
            for (i, j), _ in g.edges:
                if i in inside and j in inside:
                    touched.add(i)
                    touched.add(j)
            if touched != inside:
                continue  # an isolated vertex cannot join a full subgraph
            sub = g.induced(subset)
            if sub.n_edges() == 0 or not is_connected(sub):
                continue
            if size == n and sub.n_edges() == g.n_edges():
                continue  # the whole diagram is not a proper subgraph
            if degree(sub, d) <= 0:
                out.append((frozenset(subset), sub))
    return out


def divergent_subgraphs(g: Diagram, d) -> list[Diagram]:
    return [sub for _, sub in proper_divergent_subgraphs(g, d)]


def weinberg_check(g: Diagram, d) -> bool:
    """True when the diagram and all its full subgraphs have positive degree."""
    return degree(g, d) > 0 and not proper_divergent_subgraphs(g, d)


def _spinneys(g: Diagram, d) -> list[list[tuple[frozenset, Diagram]]]:
    """Nonempty families of pairwise vertex-disjoint divergent full subgraphs."""
    candidates = proper_divergent_subgraphs(g, d)
    out = []

    def rec(start, used, current):
        for idx in range(start, len(candidates)):
            vs, sub = candidates[idx]
            if vs & used:
                continue
            chosen = current + [(vs, sub)]
            out.append(chosen)
            rec(idx + 1, used | vs, chosen)

    rec(0, frozenset(), [])
    # a single part equal to the whole diagram was already excluded as improper
    return out


class TensorPair:
    """One extraction-contraction term: (divergent part) x (contracted rest)."""

    __slots__ = ("left", "right")

    def __init__(self, left: DiagramSum, right: DiagramSum):
        self.left = left
        self.right = right

    def __eq__(self, other):
        return (
            isinstance(other, TensorPair)
            and self.left == other.left
            and self.right == other.right
        )

    def __repr__(self):
        return f"TensorPair({self.left!r}, {self.right!r})"


def ck_coproduct(g: Diagram, d) -> list[TensorPair]:
    """Delta(Gamma) = Gamma x 1 + 1 x Gamma + sum over spinneys of parts x contraction."""
    if not is_connected(g):
        raise ValueError("the coproduct acts on connected diagrams")
    terms = [
        TensorPair(DiagramSum.of(g), DiagramSum.unit()),
        TensorPair(DiagramSum.unit(), DiagramSum.of(g)),
    ]
    for family in _spinneys(g, d):
        left = DiagramSum.unit()
        for _, sub in family:
            left = left * DiagramSum.of(sub)
        right = g.contract([vs for vs, _ in family])
        terms.append(TensorPair(left, DiagramSum.of(right)))
    return terms


def _antipode_connected(g: Diagram, d, _depth=0) -> DiagramSum:
    if _depth > 16:
        raise RecursionError("antipode recursion budget exceeded")
    acc = DiagramSum.of(g, -1)
    for family in _spinneys(g, d):
        left = DiagramSum.unit()
        for _, sub in family:
            left = left * _antipode_connected(sub, d, _depth + 1)
        right = g.contract([vs for vs, _ in family])
        acc = acc - left * DiagramSum.of(right)
    return acc


def antipode(g: Diagram, d) -> DiagramSum:
    """A(Gamma) = -Gamma - sum A(extracted) . (contracted), multiplicative on unions."""
    if g.nvertices == 0:
        return DiagramSum.unit()
    out = DiagramSum.unit()
    for comp in connected_components(g):
        out = out * _antipode_connected(comp, d)
    return out


def twisted_antipode(g: Diagram, d) -> DiagramSum:
    """A tilde: the antipode gated by divergence, zero on deg > 0 components."""
    if g.nvertices == 0:
        return DiagramSum.unit()
    out = DiagramSum.unit()
    for comp in connected_components(g):
        if degree(comp, d) > 0:
            return DiagramSum.zero()
        out = out * _antipode_connected(comp, d)
    return out


# ---------------------------------------------------------------------------
# valuation


def _edge_exponent(d) -> float:
    """Per-edge weight exponent s(d): 1 at integer d, (5-d)/2 on the d=3 lattice
    for fractional 3 < d < 4 (position-space decay ||x||^-(d-2))."""
    if d in (1, 2, 3):
        return 1.0
    if 3 < d < 4:
        return (5.0 - d) / 2.0
    raise ValueError("valuation supports d in {1, 2, 3} and fractional (3, 4)")


def _lattice_dim(d) -> int:
    return d if d in (1, 2, 3) else 3


class _Weight:
    """Spectral weight array on a centered cube of given radius."""

    __slots__ = ("cube", "radius")

    def __init__(self, cube: np.ndarray, radius: int):
        self.cube = cube
        self.radius = radius

    def center(self) -> float:
        idx = tuple(self.radius for _ in range(self.cube.ndim))
        return float(self.cube[idx])

    def series(self, other: "_Weight") -> "_Weight":
        """Same momentum flows through both: pointwise product on the overlap."""
        r = min(self.radius, other.radius)
        a = _crop(self.cube, self.radius, r)
        b = _crop(other.cube, other.radius, r)
        return _Weight(a * b, r)

    def parallel(self, other: "_Weight") -> "_Weight":
        """Total momentum splits between the strands: linear convolution."""
        return _Weight(convolve_cubes(self.cube, other.cube), self.radius + other.radius)


def _crop(cube: np.ndarray, radius: int, target: int) -> np.ndarray:
    if radius == target:
        return cube
    sl = slice(radius - target, radius + target + 1)
    return cube[tuple(sl for _ in range(cube.ndim))]


@lru_cache(maxsize=None)
def _base_weight(dim: int, N: int, s: float) -> np.ndarray:
    return ModeLattice(dim, N).inverse_weight_cube(s)


class ValuationBudgetError(ValueError):
    pass


def _reduce_series_parallel(adj: dict, weights: dict):
    """Merge parallel bundles and eliminate two-valent vertices in place.

    adj: vertex -> multiset of (neighbor, edge id); weights: edge id -> _Weight.
    Returns when no move applies.
    """
    changed = True
    while changed:
        changed = False
        # parallel merges
        for v in list(adj):
            by_neighbor: dict = {}
            for (u, eid) in adj[v]:
                if u == v:
                    continue
                by_neighbor.setdefault(u, []).append(eid)
            for u, eids in by_neighbor.items():
                if len(eids) > 1 and u > v:
                    merged = weights[eids[0]]
                    for eid in eids[1:]:
                        merged = merged.parallel(weights[eid])
                    keep = eids[0]
                    weights[keep] = merged
                    for eid in eids[1:]:
                        del weights[eid]
                        adj[v].remove((u, eid))
                        adj[u].remove((v, eid))
                    changed = True
        # series eliminations at two-valent vertices (keep at least 2 vertices)
        if len(adj) > 2:
            for v in list(adj):
                if len(adj[v]) == 2:
                    (u1, e1), (u2, e2) = adj[v]
                    if u1 == v or u2 == v or e1 == e2:
                        continue
                    merged = weights[e1].series(weights[e2])
                    del weights[e2]
                    weights[e1] = merged
                    adj[u1].remove((v, e1))
                    adj[u2].remove((v, e2))
                    adj[u1].append((u2, e1))
                    adj[u2].append((u1, e1))
                    del adj[v]
                    changed = True
                    break


def _valuate_k4(adj: dict, weights: dict) -> float:
    """Evaluate the irreducible 4-vertex complete-graph core.

    With loop momenta p = k(ab), q = k(ac), r = k(bc) and conservation fixing
    the rest, the sum becomes, for each p, a single lattice convolution:
    sum_m (F_ac shifted . F_ad)(m) conv (F_bc . F_bd shifted)(m) F_cd(m).
    The outer loop runs over the bundle with the smallest support.
    """
    vs = sorted(adj)
    pair_w = {}
    for v in vs:
        for (u, eid) in adj[v]:
            if u > v:
                pair_w[(v, u)] = weights[eid]
    if len(pair_w) != 6:
        raise ValuationBudgetError("irreducible core is not the K4 pattern")
    # choose the outer pair as the smallest-support bundle
    outer = min(pair_w, key=lambda k: pair_w[k].cube.size)
    a, b = outer
    c, dd = [v for v in vs if v not in outer]
    F_ab = pair_w[(a, b)]
    F_ac = pair_w[(min(a, c), max(a, c))]
    F_ad = pair_w[(min(a, dd), max(a, dd))]
    F_bc = pair_w[(min(b, c), max(b, c))]
    F_bd = pair_w[(min(b, dd), max(b, dd))]
    F_cd = pair_w[(min(c, dd), max(c, dd))]
    total = 0.0
    for idx in np.ndindex(F_ab.cube.shape):
        wp = F_ab.cube[idx]
        if wp == 0.0:
            continue
        p = tuple(i - F_ab.radius for i in idx)
        minus_p = tuple(-c for c in p)
        # A(q) = F_ac(q) F_ad(p + q) on the F_ac box
        A = F_ac.cube * _shifted(F_ad, F_ac.radius, p)
        # B(r) = F_bc(r) F_bd(p - r) = F_bc(r) F_bd(r - p) by evenness
        B = F_bc.cube * _shifted(F_bd, F_bc.radius, minus_p)
        conv = convolve_cubes(A, B)
        rad = F_ac.radius + F_bc.radius
        r = min(rad, F_cd.radius)
        total += wp * float(
            np.sum(_crop(conv, rad, r) * _crop(F_cd.cube, F_cd.radius, r))
        )
    return total


def _shifted(w: _Weight, target_radius: int, p: tuple) -> np.ndarray:
    """Array S with S[q] = w(q + p) on the centered box of target_radius."""
    dim = w.cube.ndim
    side = 2 * target_radius + 1
    out = np.zeros((side,) * dim)
    src = []
    dst = []
    for ax in range(dim):
        lo = -target_radius + p[ax]
        hi = target_radius + p[ax]
        lo_c = max(lo, -w.radius)
        hi_c = min(hi, w.radius)
        if lo_c > hi_c:
            return out
        src.append(slice(lo_c + w.radius, hi_c + w.radius + 1))
        dst.append(slice(lo_c - p[ax] + target_radius, hi_c - p[ax] + target_radius + 1))
    out[tuple(dst)] = w.cube[tuple(src)]
    return out


def _valuate_connected(g: Diagram, d, N: int) -> float:
    dim = _lattice_dim(d)
    s = _edge_exponent(d)
    if g.nvertices == 1:
        return 1.0
    base = _base_weight(dim, N, s)
    adj: dict = {v: [] for v in range(g.nvertices)}
    weights: dict = {}
    eid = 0
    for (i, j), m in g.edges:
        for _ in range(m):
            weights[eid] = _Weight(base, N)
            adj[i].append((j, eid))
            adj[j].append((i, eid))
            eid += 1
    _reduce_series_parallel(adj, weights)
    if len(adj) == 2 and len(weights) == 1:
        (w,) = weights.values()
        return w.center()
    if len(adj) == 4:
        return _valuate_k4(adj, weights)
    return _valuate_nested(adj, weights, dim, N)


def _valuate_nested(adj: dict, weights: dict, dim: int, N: int) -> float:
    """Budgeted fallback: enumerate loop momenta over spanning-tree complements."""
    vs = sorted(adj)
    edges = sorted(weights)
    incidence = {e: [] for e in edges}
    for v in vs:
        for (u, e) in adj[v]:
            if v < u:
                incidence[e] = [v, u]
    loops = len(edges) - len(vs) + 1
    if loops > 3 or N > 16 or dim > 2:
        raise ValuationBudgetError(
            f"nested-sum budget exceeded (loops={loops}, N={N}, dim={dim})"
        )
    # spanning tree by BFS
    tree = {}
    visited = {vs[0]}
    frontier = [vs[0]]
    tree_edges = []
    while frontier:
        v = frontier.pop()
        for (u, e) in adj[v]:
            if u not in visited:
                visited.add(u)
                tree[u] = (v, e)
                tree_edges.append(e)
                frontier.append(u)
    loop_edges = [e for e in edges if e not in tree_edges]
    total = 0.0
    side_indices = [
        list(np.ndindex(weights[e].cube.shape)) for e in loop_edges
    ]
    for assignment in itertools.product(*side_indices):
        moment = {}
        w_prod = 1.0
        ok = True
        for e, idx in zip(loop_edges, assignment):
            wv = float(weights[e].cube[idx])
            if wv == 0.0:
                ok = False
                break
            moment[e] = tuple(i - weights[e].radius for i in idx)
            w_prod *= wv
        if not ok:
            continue
        # solve tree-edge momenta by peeling leaves
        flows = dict(moment)
        residual = {v: [0] * dim for v in vs}
        for e, p in moment.items():
            a, b = incidence[e]
            for ax in range(dim):
                residual[a][ax] += p[ax]
                residual[b][ax] -= p[ax]
        order = [v for v in vs if v in tree]
        for v in reversed(order):
            parent, e = tree[v]
            # oriented v -> parent the edge carries -residual[v]
            p = tuple(-r for r in residual[v])
            flows[e] = p
            w = weights[e]
            if any(abs(c) > w.radius for c in p):
                ok = False
                break
            wv = float(w.cube[tuple(c + w.radius for c in p)])
            if wv == 0.0:
                ok = False
                break
            w_prod *= wv
            for ax in range(dim):
                residual[parent][ax] -= p[ax]
        if ok:
            total += w_prod
    return total


def valuate(g: Diagram, d, N: int) -> float:
    """Momentum-space value: sum over conserving mode assignments in K_N.

    Each edge carries weight lambda_k^(-s(d)); the value is multiplicative
    over connected components and equals the position-space integral of the
    product of truncated Green functions.
    """
    if not g.is_vacuum():
        raise ValueError("external legs present; use valuate_external")
    total = 1.0
    for comp in sorted(
        connected_components(g), key=lambda c: c.canonical_key()
    ):
        total *= _valuate_connected(comp, d, N)
    return total


@lru_cache(maxsize=None)
def _valuate_cached(key, d, N) -> float:
    g = Diagram(key[0], key[1], key[2], _canonical=True)
    return valuate(g, d, N)


def valuate_cached(g: Diagram, d, N: int) -> float:
    return _valuate_cached(g.canonical_key(), d, N)


def valuate_sum(s: DiagramSum, d, N: int) -> float:
    """Valuation of a rational diagram combination, in canonical term order."""
    total = 0.0
    for g, c in sorted(s.terms.items(), key=lambda item: item[0].canonical_key()):
        total += float(c) * valuate_cached(g, d, N)
    return total


def bphz_valuate(g: Diagram, d, N: int, route: str = "direct") -> float:
    """Renormalized valuation (Pi_N A-tilde x Pi_N) Delta_CK.

    Both routes assemble the same exact rational diagram combination before
    valuating, so they agree float-for-float: the direct route sums the
    coproduct terms, the "lemma" route short-circuits to 0 for deg <= 0 and
    -Pi_N(A(Gamma)) otherwise.
    """
    if not is_connected(g):
        raise ValueError("bphz_valuate acts on connected diagrams")
    if route == "lemma":
        if degree(g, d) <= 0:
            return 0.0
        return -valuate_sum(antipode(g, d), d, N)
    if route != "direct":
        raise ValueError(f"unknown route {route!r}")
    acc = DiagramSum.zero()
    for pair in ck_coproduct(g, d):
        left = DiagramSum.unit()
        skip = False
        for gl, cl in pair.left.terms.items():
            twisted = twisted_antipode(gl, d)
            if not twisted and gl.nvertices:
                skip = True
                break
            left = left * twisted * cl
        if skip:
            continue
        acc = acc + left * pair.right
    return valuate_sum(acc, d, N)


def valuate_position_mc(g: Diagram, d: int, N: int, samples: int, seed: int):
    """Monte Carlo of the position-space integral, as an oracle for valuate.

    Per connected component one vertex is pinned at the origin (translation
    invariance) and the rest are uniform on the torus; returns (estimate,
    stderr) with the component estimates multiplied sample-wise.
    """
    if not g.is_vacuum():
        raise ValueError("external legs present")
    if d not in (1, 2, 3):
        raise ValueError("position MC needs an integer dimension")
    if samples <= 0:
        raise ValueError("samples must be positive")
    lat = ModeLattice(d, N)
    modes = np.array(lat.modes, dtype=float)
    invlam = np.array([1.0 / float(lat.lam(k)) for k in lat.modes])

    def green(u: np.ndarray) -> np.ndarray:
        phase = 2.0 * math.pi * (u @ modes.T)
        return np.cos(phase) @ invlam

    rng = np.random.default_rng(seed)
    vals = np.ones(samples)
    for comp in connected_components(g):
        pos = rng.uniform(size=(samples, comp.nvertices, d))
        pos[:, 0, :] = 0.0
        comp_vals = np.ones(samples)
        for (i, j), m in comp.edges:
            gvals = green(pos[:, i, :] - pos[:, j, :])
            comp_vals *= gvals**m
        vals *= comp_vals
    est = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return est, stderr


def valuate_external(g: Diagram, d, N: int, p=None) -> float:
    """Two-terminal valuation at external momentum p (default: the zero mode).

    The two labeled legs fix the momentum flowing through the diagram; the
    internal part must reduce to a single effective bundle between the two
    attachment vertices (true for every order <= 2 two-point diagram), and
    the external propagators contribute one weight factor each.
    """
    if len(g.labels) != 2:
        raise ValueError("need exactly two external legs")
    dim = _lattice_dim(d)
    s = _edge_exponent(d)
    if p is None:
        p = (0,) * dim
    p = tuple(int(c) for c in p)
    # vacuum components factor out of the external one
    comps = connected_components(g)
    vacuum = [c for c in comps if c.is_vacuum()]
    ext_comps = [c for c in comps if not c.is_vacuum()]
    if len(ext_comps) != 1:
        raise ValueError("the two external legs must share a component")
    factor = 1.0
    for c in vacuum:
        factor *= valuate_cached(c, d, N)
    g = ext_comps[0]
    ext = [v for v, _ in g.labels]
    base = _base_weight(dim, N, s)
    if sum(abs(c) for c in p) > N:
        return 0.0
    wp = float(base[tuple(c + N for c in p)])
    # direct propagator between the two external vertices
    if g.nvertices == 2 and len(g.edges) == 1:
        return factor * wp
    # strip the external vertices; remember where they attached
    attach = []
    for v in ext:
        for (i, j), m in g.edges:
            if v in (i, j):
                attach.append(j if i == v else i)
    internal = [v for v in range(g.nvertices) if v not in ext]
    relabel = {v: i for i, v in enumerate(internal)}
    inner = Diagram(
        len(internal),
        [
            ((relabel[i], relabel[j]), m)
            for (i, j), m in g.edges
            if i not in ext and j not in ext
        ],
    )
    a, b = relabel[attach[0]], relabel[attach[1]]
    adj: dict = {v: [] for v in range(inner.nvertices)}
    weights: dict = {}
    eid = 0
    for (i, j), m in inner.edges:
        for _ in range(m):
            weights[eid] = _Weight(base, N)
            adj[i].append((j, eid))
            adj[j].append((i, eid))
            eid += 1
    # protect the terminals from series elimination by tagging them
    _reduce_series_parallel_protected(adj, weights, protected={a, b})
    if len(adj) == 2 and len(weights) == 1:
        (w,) = weights.values()
        if any(abs(c) > w.radius for c in p):
            return 0.0
        inner_val = float(w.cube[tuple(c + w.radius for c in p)])
        return factor * wp * wp * inner_val
    raise ValuationBudgetError("external valuation needs a two-terminal reduction")


def _reduce_series_parallel_protected(adj, weights, protected):
    changed = True
    while changed:
        changed = False
        for v in list(adj):
            by_neighbor: dict = {}
            for (u, eid) in adj[v]:
                if u == v:
                    continue
                by_neighbor.setdefault(u, []).append(eid)
            for u, eids in by_neighbor.items():
                if len(eids) > 1 and u > v:
                    merged = weights[eids[0]]
                    for eid in eids[1:]:
                        merged = merged.parallel(weights[eid])
                    weights[eids[0]] = merged
                    for eid in eids[1:]:
                        del weights[eid]
                        adj[v].remove((u, eid))
                        adj[u].remove((v, eid))
                    changed = True
        for v in list(adj):
            if v in protected or len(adj[v]) != 2:
                continue
            (u1, e1), (u2, e2) = adj[v]
            if u1 == v or u2 == v or e1 == e2:
                continue
            merged = weights[e1].series(weights[e2])
            del weights[e2]
            weights[e1] = merged
            adj[u1].remove((v, e1))
            adj[u2].remove((v, e2))
            adj[u1].append((u2, e1))
            adj[u2].append((u1, e1))
            del adj[v]
            changed = True
            break


def diagram_sum_to_json(s: DiagramSum) -> list:
    return [
        {"coefficient": [c.numerator, c.denominator], "diagram": g.to_dict()}
        for g, c in sorted(s.terms.items(), key=lambda item: item[0].canonical_key())
    ]
