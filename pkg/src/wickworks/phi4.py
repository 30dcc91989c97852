"""Perturbative expansions of the quartic-interaction partition function.

The ratio Z_alpha / Z_0 for the Wick-ordered quartic energy is expanded in
the coupling: the alpha^n coefficient is (-1)^n / n! times the sum of all
loop-free leg matchings of n four-valent vertices, each valuated in momentum
space. The logarithm keeps connected diagrams only, and that statement is
checked two ways: by filtering, and by running log* of the full series in
the diagram-sum ring. In three dimensions mass and energy counterterms enter; the
renormalized log-series can then be assembled either through the mixed
(X, Y) expansion or through BPHZ-subtracted valuations, and the two must
agree order by order.

Monte Carlo validation at d = 1, 2 samples truncated fields spectrally and
integrates the fourth Wick power on a grid fine enough to make the quadrature
exact for the truncated trigonometric polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

from . import feynman as fy
from .cumulants import Functional, exp_star, log_star
from .feynman import Diagram, DiagramSum, banana, double_triangle
from .torusfield import (
    ModeLattice,
    c_variance,
    green_truncated,
    grid_points,
    synthesis_matrix,
)


@dataclass
class SeriesCoefficient:
    n: int
    prefactor: Fraction
    diagrams: DiagramSum
    value: float

    def rational_parts(self) -> dict:
        """Per-class exact coefficient prefactor * matching count."""
        return {g: self.prefactor * c for g, c in self.diagrams.terms.items()}


@dataclass
class ExpansionSeries:
    d: float
    N: int
    order: int
    variant: str
    coefficients: list[SeriesCoefficient] = field(default_factory=list)

    def coefficient(self, n: int) -> SeriesCoefficient:
        return self.coefficients[n]

    def value_at(self, alpha: float) -> float:
        return math.fsum(c.value * alpha**c.n for c in self.coefficients)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "d": self.d,
            "N": self.N,
            "order": self.order,
            "variant": self.variant,
            "coefficients": [
                {
                    "n": c.n,
                    "prefactor": [c.prefactor.numerator, c.prefactor.denominator],
                    "diagrams": fy.diagram_sum_to_json(c.diagrams),
                    "value": c.value,
                }
                for c in self.coefficients
            ],
        }


@lru_cache(maxsize=None)
def _quartic_diagrams(n: int, m: int = 0) -> DiagramSum:
    """All loop-free matchings of n four-valent and m two-valent vertices."""
    if n == 0 and m == 0:
        return DiagramSum.unit()
    return fy.generate_diagrams([4] * n + [2] * m)


def _series_value(diagrams: DiagramSum, d, N) -> float:
    return fy.valuate_sum(diagrams, d, N)


def partition_ratio_series(d, N: int, order: int) -> ExpansionSeries:
    """Expansion of Z_alpha / Z_0 for the Wick-ordered quartic energy.

    At d = 3 the counterterms are included: the series is exp(-gamma) times
    the mixed-moment expansion with the mass insertion beta. At d = 1, 2 it is
    the plain Wick-variant series.
    """
    _check_order(order)
    if d == 3:
        return _renormalized_ratio_series(N, order)
    series = ExpansionSeries(d, N, order, "wick")
    for n in range(order + 1):
        diagrams = _quartic_diagrams(n)
        pref = Fraction((-1) ** n, factorial(n))
        value = float(pref) * _series_value(diagrams, d, N)
        series.coefficients.append(SeriesCoefficient(n, pref, diagrams, value))
    return series


def _renormalized_ratio_series(N: int, order: int) -> ExpansionSeries:
    """Z-ratio at d = 3: exponential of the counterterm-subtracted log-series.

    The stored diagrams are the quartic-vertex matchings of each order; the
    numeric coefficients come from exponentiating the renormalized log-series
    (which starts at alpha^4), so they stay bounded in the cutoff.
    """
    logc = _mixed_log_coefficients(N, order)
    values = [0.0] * (order + 1)
    values[0] = 1.0
    # exp of a truncated series: v_n = (1/n) sum_{j>=1} j c_j v_{n-j}
    for n in range(1, order + 1):
        acc = 0.0
        for j in range(1, n + 1):
            acc += j * logc[j] * values[n - j]
        values[n] = acc / n
    series = ExpansionSeries(3, N, order, "renormalized")
    for n in range(order + 1):
        series.coefficients.append(
            SeriesCoefficient(
                n,
                Fraction((-1) ** n, factorial(n)),
                _quartic_diagrams(n),
                values[n],
            )
        )
    return series


def _check_order(order: int):
    budget = fy.enumeration_budget()
    if order > budget:
        raise ValueError(
            f"order {order} beyond the enumeration budget {budget} "
            "(set WICKWORKS_BUDGET to raise it)"
        )
    if order < 0:
        raise ValueError("order must be >= 0")


def log_partition_series(d, N: int, order: int, route: str = "connected") -> ExpansionSeries:
    """log(Z_alpha / Z_0): connected diagrams only, by either of two routes.

    route="connected" filters each full coefficient; route="logstar" runs the
    star-logarithm of the full series in the diagram-sum ring. The linked-
    cluster theorem says the DiagramSums agree exactly.
    """
    _check_order(order)
    if route == "connected":
        sums = [_quartic_diagrams(n).filter_connected() for n in range(order + 1)]
        sums[0] = DiagramSum.zero()
    elif route == "logstar":
        full = Functional(
            [_quartic_diagrams(n) for n in range(order + 1)],
            zero=DiagramSum.zero(),
            one=DiagramSum.unit(),
        )
        sums = log_star(full).values
    else:
        raise ValueError(f"unknown route {route!r}")
    series = ExpansionSeries(d, N, order, "log-wick")
    for n, diagrams in enumerate(sums):
        pref = Fraction((-1) ** n, factorial(n))
        value = float(pref) * _series_value(diagrams, d, N)
        series.coefficients.append(SeriesCoefficient(n, pref, diagrams, value))
    return series


def exp_of_log_series(d, N: int, order: int) -> list[DiagramSum]:
    """exp* of the connected series; must reproduce the full coefficients."""
    connected = log_partition_series(d, N, order, route="connected")
    psi = Functional(
        [c.diagrams for c in connected.coefficients],
        zero=DiagramSum.zero(),
        one=DiagramSum.unit(),
    )
    return exp_star(psi).values


def plain_phi41_moments(N: int, n: int) -> float:
    """Moments of the NON-Wick quartic integral for d = 1, orders n <= 2.

    Self-contractions are allowed here; each loop contributes a factor
    G_N(0) = C_N. Order 1 reproduces 3 C_N^2.
    """
    if n not in (1, 2):
        raise ValueError("the plain path covers orders 1 and 2 only")
    from .pairings import enumerate_matchings

    legs = [v for v in range(n) for _ in range(4)]
    cn = c_variance(1, N)
    total = 0.0
    for matching in enumerate_matchings(len(legs), perfect_only=True):
        loops = 0
        edges = []
        for i, j in matching.pairs:
            if legs[i] == legs[j]:
                loops += 1
            else:
                edges.append(((legs[i], legs[j]), 1))
        used = {v for (i, j), _ in edges for v in (i, j)}
        if edges:
            relabel = {v: k for k, v in enumerate(sorted(used))}
            g = Diagram(
                len(used), [((relabel[i], relabel[j]), m) for (i, j), m in edges]
            )
            val = fy.valuate_cached(g, 1, N)
        else:
            val = 1.0
        total += cn**loops * val
    return total


# ---------------------------------------------------------------------------
# two-point function


def two_point_series(d, N: int, order: int, x, y) -> ExpansionSeries:
    """G_2(x, y) through the stated order (<= 2 in this version).

    The full expectation over diagrams with two external legs is divided by
    the vacuum series at the DiagramSum level, which cancels every term with
    a vacuum component; what survives at order two is the chain class, whose
    value is synthesized from the mode sum at the requested points.
    """
    if order > 2:
        raise ValueError("two-point series supports order <= 2")
    _check_order(order)
    numerator = []
    for n in range(order + 1):
        if n == 0:
            direct = Diagram(2, [((0, 1), 1)], labels=[(0, "x"), (1, "y")])
            numerator.append(DiagramSum.of(direct))
        else:
            numerator.append(fy.generate_diagrams([4] * n, ["x", "y"]))
    vacuum = [_quartic_diagrams(n) for n in range(order + 1)]
    # series division g = numerator / vacuum in the diagram-sum ring
    quotient: list[DiagramSum] = []
    for n in range(order + 1):
        acc = numerator[n]
        for k in range(n):
            acc = acc - quotient[k] * vacuum[n - k]
        quotient.append(acc)  # vacuum[0] is the unit
    series = ExpansionSeries(d, N, order, "two-point")
    for n, diagrams in enumerate(quotient):
        pref = Fraction((-1) ** n, factorial(n))
        value = float(pref) * math.fsum(
            float(c) * _external_value(g, d, N, x, y)
            for g, c in sorted(
                diagrams.terms.items(), key=lambda item: item[0].canonical_key()
            )
        )
        series.coefficients.append(SeriesCoefficient(n, pref, diagrams, value))
    return series


def _external_value(g: Diagram, d, N: int, x, y) -> float:
    """Position-space value of a two-external-leg diagram at (x, y)."""
    dim = fy._lattice_dim(d)
    xs = (float(x),) if dim == 1 else tuple(float(c) for c in x)
    ys = (float(y),) if dim == 1 else tuple(float(c) for c in y)
    diff = tuple(a - b for a, b in zip(xs, ys))
    if g.nvertices == 2 and len(g.edges) == 1:
        return green_truncated(diff, dim, N)
    # chain-type classes: sum over the external momentum of the two-terminal value
    lat = ModeLattice(dim, N)
    total = 0.0
    for p in lat.modes:
        val = fy.valuate_external(g, d, N, p=p)
        if val:
            phase = 2.0 * math.pi * sum(pi * di for pi, di in zip(p, diff))
            total += val * math.cos(phase)
    return total


# ---------------------------------------------------------------------------
# d = 3 counterterms and the commutativity check


@dataclass
class CountertermSet:
    """Mass (beta) and energy (gamma) counterterm polynomials in alpha."""

    beta_coeffs: dict[int, float]
    gamma_coeffs: dict[int, float]
    alpha: float

    @property
    def beta(self) -> float:
        return sum(c * self.alpha**n for n, c in self.beta_coeffs.items())

    @property
    def gamma(self) -> float:
        return sum(c * self.alpha**n for n, c in self.gamma_coeffs.items())


def counterterms_d3(alpha: float, N: int) -> CountertermSet:
    """Mass and energy counterterms: beta = 48 a^2 Pi(3-banana),
    gamma = 12 a^2 Pi(4-banana) - 288 a^3 Pi(double triangle).

    The magnitude 48 alpha^2 Pi of the mass term is classical; its sign here
    is the one that makes the two-valent insertion (-beta per vertex) cancel
    the three-banana subdivergences, which the order-four route comparison
    pins down exactly (both the (log N)^2 and (log N) parts cancel only for
    this sign).
    """
    pi_b3 = fy.valuate_cached(banana(3), 3, N)
    pi_b4 = fy.valuate_cached(banana(4), 3, N)
    pi_tri = fy.valuate_cached(double_triangle(), 3, N)
    return CountertermSet(
        beta_coeffs={2: 48.0 * pi_b3},
        gamma_coeffs={2: 12.0 * pi_b4, 3: -288.0 * pi_tri},
        alpha=alpha,
    )


def _mixed_log_coefficients(N: int, order: int) -> list[float]:
    """alpha^n coefficients of log Z-ratio at d = 3 with counterterms.

    Assembled from connected mixed moments: the (X^k Y^m) term carries
    (-1)^k / k! (-beta2)^m / m! at alpha-order k + 2m, with the quadratic
    mass insertion beta = beta2 alpha^2, minus the energy subtraction gamma.
    """
    ct = counterterms_d3(0.0, N)
    beta2 = ct.beta_coeffs[2]
    gamma = ct.gamma_coeffs
    out = [0.0] * (order + 1)
    for n in range(order + 1):
        total = 0.0
        for m in range(n // 2 + 1):
            k = n - 2 * m
            conn = _quartic_diagrams(k, m).filter_connected() if (k or m) else DiagramSum.zero()
            if not conn:
                continue
            weight = (
                Fraction((-1) ** k, factorial(k)) * Fraction(1, factorial(m))
            )
            total += float(weight) * (-beta2) ** m * _series_value(conn, 3, N)
        total -= gamma.get(n, 0.0)
        out[n] = total
    return out


def _bphz_log_coefficients(N: int, order: int) -> list[float]:
    """alpha^n coefficients of sum (-a)^n / n! Pi_BPHZ(connected P(X^n))."""
    out = [0.0] * (order + 1)
    for n in range(1, order + 1):
        conn = _quartic_diagrams(n).filter_connected()
        pref = Fraction((-1) ** n, factorial(n))
        total = 0.0
        for g, c in sorted(conn.terms.items(), key=lambda i: i[0].canonical_key()):
            total += float(c) * fy.bphz_valuate(g, 3, N)
        out[n] = float(pref) * total
    return out


def wick_map_commutativity_check(N: int, order: int = 4) -> list[dict]:
    """Per-order comparison of the mixed-counterterm and BPHZ routes at d = 3.

    Orders 2 and 3 must vanish on both sides (the energy counterterm eats
    them); order 4 is the first nontrivial coefficient and the two pipelines
    must agree to float accuracy.
    """
    if order > 4:
        raise ValueError("commutativity check supports order <= 4")
    mixed = _mixed_log_coefficients(N, order)
    bphz = _bphz_log_coefficients(N, order)
    report = []
    for n in range(order + 1):
        scale = max(abs(mixed[n]), abs(bphz[n]), 1e-300)
        report.append(
            {
                "n": n,
                "mixed_route": mixed[n],
                "bphz_route": bphz[n],
                "difference": mixed[n] - bphz[n],
                "relative": abs(mixed[n] - bphz[n]) / scale,
            }
        )
    return report


def quartic_vertex_degree(n: int, d=3.0) -> float:
    """Degree of the order-n quartic vacuum classes: 4n - (n+1)d (= n - 3 at d = 3)."""
    return 4 * n - (n + 1) * d


# ---------------------------------------------------------------------------
# fractional-dimension thresholds


@dataclass(frozen=True)
class ThresholdReport:
    d: float
    n_star_e: int
    n_star_m: int

    @staticmethod
    def d_star_e(n: int) -> Fraction:
        return 4 - Fraction(4, n + 1)

    @staticmethod
    def d_star_m(n: int) -> Fraction:
        return 4 - Fraction(2, n)


def thresholds(d) -> ThresholdReport:
    """Largest orders with divergent energy/mass contributions for 3 <= d < 4."""
    if not 3 <= d < 4:
        raise ValueError("threshold floors need 3 <= d < 4")
    frac_d = Fraction(d).limit_denominator(10**9)
    return ThresholdReport(
        d=float(d),
        n_star_e=int(frac_d / (4 - frac_d)),
        n_star_m=int(Fraction(2) / (4 - frac_d)),
    )


def minimal_subdivergence_families(max_vertices: int = 4) -> dict[int, list[Diagram]]:
    """Connected loop-free classes from the two counterterm arity families.

    For n vertices these are (3, 3, 4, ..) and (2, 4, 4, ..); their degrees
    are 6 - 2d, 10 - 3d, 14 - 4d for n = 2, 3, 4.
    """
    out: dict[int, list[Diagram]] = {}
    for n in range(2, max_vertices + 1):
        classes: list[Diagram] = []
        for arities in ([3, 3] + [4] * (n - 2), [2] + [4] * (n - 1)):
            if sum(arities) % 2:
                continue
            for g in fy.generate_diagrams(arities).filter_connected().terms:
                if g not in classes:
                    classes.append(g)
        out[n] = classes
    return out


def divergent_families_at(d) -> dict[int, bool]:
    """Which counterterm families are divergent (deg <= 0) at dimension d."""
    fams = minimal_subdivergence_families()
    return {
        n: bool(classes) and all(fy.degree(g, d) <= 0 for g in classes)
        for n, classes in fams.items()
    }


def sigma_counterterm(d, N: int, n: int, normalization: float = 1.0) -> float:
    """Model mass-insertion constants for fractional d (one concrete choice).

    sigma_2 is pinned by the d = 3 mass counterterm (beta = a^2/2 sigma_2
    means sigma_2 = -96 Pi(3-banana)); higher orders valuate the minimal
    subdivergence families with an adjustable normalization, and are expected
    to diverge like N^(2 - (4-d) n).
    """
    if n < 2:
        raise ValueError("mass insertions start at order 2")
    fams = minimal_subdivergence_families(max(n, 2)).get(n, [])
    total = 0.0
    for g in fams:
        if fy.degree(g, d) <= 0:
            total += fy.valuate_cached(g, d, N)
    if n == 2:
        return -96.0 * total
    return normalization * total


# ---------------------------------------------------------------------------
# Monte Carlo


def integral_wick4(values: np.ndarray, cn: float) -> np.ndarray:
    """Grid mean of H_4(field; C_N) per sample; exact for a fine enough grid."""
    v2 = values**2
    return (v2 * v2 - 6.0 * cn * v2 + 3.0 * cn * cn).mean(axis=0)


MC_BLOCK = 2048


def mc_partition_ratio(d: int, N: int, alpha: float, samples: int, seed: int):
    """Monte Carlo of E[exp(-alpha integral :field^4:)] for d in {1, 2}.

    Fields are sampled spectrally; the quartic Wick integral is a grid average
    on (4N+1)^d points, which integrates the degree-4N trigonometric
    polynomial exactly. Splitting rule: draws proceed in fixed blocks of
    MC_BLOCK samples whose generators are SeedSequence(seed).spawn children in
    block order, so a given (config, seed) always produces the same stream.
    """
    if d not in (1, 2):
        raise ValueError("the MC validation covers d = 1 and d = 2")
    if samples <= 0:
        raise ValueError("samples must be positive")
    lat = ModeLattice(d, N)
    grid = 4 * N + 1
    pts = grid_points(d, grid)
    B = synthesis_matrix(lat, pts)
    cn = c_variance(d, N)
    from .torusfield import mode_labels

    weights = np.array([float(lat.lam(k)) ** -0.5 for k, _ in mode_labels(lat)])
    seeds = np.random.SeedSequence(seed).spawn(math.ceil(samples / MC_BLOCK))
    chunks = []
    remaining = samples
    for ss in seeds:
        take = min(MC_BLOCK, remaining)
        rng = np.random.default_rng(ss)
        z = rng.standard_normal((B.shape[1], take))
        vals = B @ (weights[:, None] * z)
        x = integral_wick4(vals, cn)
        chunks.append(np.exp(-alpha * x))
        remaining -= take
    draws = np.concatenate(chunks)
    est = float(draws.mean())
    stderr = float(draws.std(ddof=1) / math.sqrt(len(draws))) if len(draws) > 1 else 0.0
    return est, stderr


def coefficient_ladder_csv(d, Ns, order: int) -> str:
    """CSV table of series coefficients over a ladder of cutoffs.

    One row per N, one column per alpha-order; useful for eyeballing how the
    valuations drift with the cutoff.
    """
    header = ["N"] + [f"c{n}" for n in range(order + 1)]
    lines = [",".join(header)]
    for N in Ns:
        series = partition_ratio_series(d, int(N), order)
        row = [str(int(N))] + [repr(c.value) for c in series.coefficients]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def series_vs_mc_report(N: int, alphas, samples: int, seed: int) -> list[dict]:
    """d = 1: MC estimates against the order-3 series, with remainder bands."""
    series = partition_ratio_series(1, N, 3)
    out = []
    for i, alpha in enumerate(alphas):
        est, se = mc_partition_ratio(1, N, alpha, samples, seed + i)
        out.append(
            {
                "alpha": alpha,
                "mc": est,
                "stderr": se,
                "series": series.value_at(alpha),
            }
        )
    return out
