"""Matching combinatorics and exact multivariate Gaussian moments (Isserlis).

These are the brute-force oracles the rest of the package is checked against.
Everything is ring-agnostic: covariance entries may be Fractions, floats, or
the sparse symbol polynomials from `cumulants`, as long as they support + and *.

Ground sets are 0-based: a matching of size n partitions range(n).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .polyalg import double_factorial


@dataclass(frozen=True)
class Matching:
    """Partition of range(n) into unordered pairs and singletons."""

    pairs: tuple[tuple[int, int], ...]
    singletons: tuple[int, ...]
    n: int

    def __post_init__(self):
        seen = sorted([i for p in self.pairs for i in p] + list(self.singletons))
        if seen != list(range(self.n)):
            raise ValueError("pairs and singletons must partition range(n)")


def enumerate_matchings(n: int, perfect_only: bool = False) -> Iterator[Matching]:
    """Stream all pairwise matchings of range(n), duplicate-free.

    Canonical order: the smallest unmatched index is resolved first, either as
    a singleton (when allowed) or paired with each larger index in increasing
    order. Perfect matchings of 2k elements number (2k-1)!!; odd n with
    perfect_only yields nothing.
    """
    if n < 0:
        raise ValueError("n must be >= 0")

    def rec(remaining: tuple[int, ...], pairs, singles):
        if not remaining:
            yield Matching(tuple(pairs), tuple(singles), n)
            return
        head, rest = remaining[0], remaining[1:]
        if not perfect_only:
            yield from rec(rest, pairs, singles + [head])
        for i, partner in enumerate(rest):
            yield from rec(
                rest[:i] + rest[i + 1 :], pairs + [(head, partner)], singles
            )

    if perfect_only and n % 2 == 1:
        return
    yield from rec(tuple(range(n)), [], [])


class CovMatrix:
    """Symmetric covariance matrix; PSD is deliberately not enforced."""

    def __init__(self, entries: Sequence[Sequence]):
        rows = [list(r) for r in entries]
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise ValueError("matrix must be square")
        for i in range(n):
            for j in range(i):
                if rows[i][j] != rows[j][i]:
                    raise ValueError("matrix must be symmetric")
        self.entries = rows
        self.n = n

    @classmethod
    def identity(cls, n: int) -> "CovMatrix":
        return cls([[Fraction(int(i == j)) for j in range(n)] for i in range(n)])

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]


def isserlis_moment(C: CovMatrix, indices: Sequence[int]):
    """E[X_{i_1} ... X_{i_m}] = sum over perfect matchings of products of C entries.

    Zero for odd m. Purely algebraic in C, so degenerate covariances are fine.
    """
    m = len(indices)
    for i in indices:
        if not 0 <= i < C.n:
            raise ValueError("index out of range")
    if m % 2 == 1:
        return Fraction(0)
    total = None
    for matching in enumerate_matchings(m, perfect_only=True):
        prod = None
        for a, b in matching.pairs:
            entry = C[indices[a], indices[b]]
            prod = entry if prod is None else prod * entry
        if prod is None:
            prod = Fraction(1)
        total = prod if total is None else total + prod
    return Fraction(1) if total is None else total


class MultivarPoly:
    """Sparse polynomial in X_0..X_{N-1}: exponent tuple -> coefficient."""

    def __init__(self, nvars: int, terms=None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for expo, c in terms.items():
                expo = tuple(expo)
                if len(expo) != nvars:
                    raise ValueError("exponent arity mismatch")
                c = Fraction(c)
                if c:
                    self.terms[expo] = c

    @classmethod
    def variable(cls, nvars: int, i: int) -> "MultivarPoly":
        expo = tuple(1 if j == i else 0 for j in range(nvars))
        return cls(nvars, {expo: 1})

    @classmethod
    def constant(cls, nvars: int, c) -> "MultivarPoly":
        return cls(nvars, {(0,) * nvars: c})

    def __add__(self, other):
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return MultivarPoly(self.nvars, out)

    def __sub__(self, other):
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) - c
        return MultivarPoly(self.nvars, out)

    def __mul__(self, other):
        if isinstance(other, MultivarPoly):
            out = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, Fraction(0)) + c1 * c2
            return MultivarPoly(self.nvars, out)
        return MultivarPoly(
            self.nvars, {e: c * Fraction(other) for e, c in self.terms.items()}
        )

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, MultivarPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def partial(self, j: int) -> "MultivarPoly":
        out = {}
        for e, c in self.terms.items():
            if e[j]:
                e2 = list(e)
                e2[j] -= 1
                out[tuple(e2)] = c * e[j]
        return MultivarPoly(self.nvars, out)

    def substitute(self, values) -> Fraction:
        total = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for v, a in zip(values, e):
                term *= Fraction(v) ** a
            total += term
        return total


def gaussian_poly_expectation(C: CovMatrix, p: MultivarPoly):
    """Term-wise Isserlis evaluation of E[p(X)] for X ~ N(0, C)."""
    total = Fraction(0)
    diagonal = all(
        C[i, j] == 0 for i in range(C.n) for j in range(C.n) if i != j
    )
    for expo, coeff in p.terms.items():
        if diagonal:
            # Independent coordinates: E prod X_i^a_i factorizes into
            # single-variable moments (a_i - 1)!! * C_ii^(a_i/2).
            term = coeff
            for i, a in enumerate(expo):
                if a % 2 == 1:
                    term = Fraction(0)
                    break
                if a:
                    term = term * double_factorial(a - 1) * C[i, i] ** (a // 2)
            total = total + term
        else:
            indices = [i for i, a in enumerate(expo) for _ in range(a)]
            total = total + coeff * isserlis_moment(C, indices)
    return total


def ibp_check(C: CovMatrix, i: int, p: MultivarPoly):
    """Both sides of the Gaussian integration-by-parts identity.

    Returns (E[X_i p(X)], sum_j C_ij E[d_j p(X)]); the tests assert equality.
    """
    if not 0 <= i < C.n:
        raise ValueError("index out of range")
    lhs = gaussian_poly_expectation(C, MultivarPoly.variable(p.nvars, i) * p)
    rhs = Fraction(0)
    for j in range(C.n):
        cij = C[i, j]
        if cij != 0:
            rhs = rhs + cij * gaussian_poly_expectation(C, p.partial(j))
    return lhs, rhs
