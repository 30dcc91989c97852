"""Command-line front end: every pipeline behind reproducible, scriptable flags.

JSON is the canonical output (sorted keys, repr floats, so reruns with the
same configuration and seed are byte-identical); CSV and DOT are projections.
A `verify` subcommand runs the cross-module oracle table and exits nonzero on
any failure. Exit codes: 0 success, 2 usage/validation errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from . import feynman as fy
from . import phi4, polyalg, torusfield


def _emit(payload: dict, out: str | None, fmt: str = "json") -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _json_default(obj):
    if isinstance(obj, Fraction):
        return [obj.numerator, obj.denominator]
    raise TypeError(f"not JSON serializable: {type(obj)}")


def parallel_map(fn, items, threads: int):
    """Ordered map over independent tasks; results do not depend on threads."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_hermite(args) -> int:
    if args.n > 64:
        print("error: orders above 64 are not supported", file=sys.stderr)
        return 2
    if args.sigma2 is not None:
        poly = polyalg.hermite_scaled(args.n, Fraction(args.sigma2))
    else:
        poly = polyalg.hermite(args.n)
    if args.format == "json":
        _emit(
            {
                "schema": 1,
                "n": args.n,
                "sigma2": args.sigma2,
                "coefficients": {str(i): c for i, c in enumerate(poly.coeffs)},
                "pretty": poly.pretty(),
            },
            args.out,
        )
    else:
        line = poly.pretty()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(line + "\n")
        else:
            print(line)
    return 0


def cmd_diagrams(args) -> int:
    arities = [args.arity] * args.n_vertices
    if sum(arities) % 2:
        print("error: odd total leg count has no pairings", file=sys.stderr)
        return 2
    sums = fy.generate_diagrams(arities)
    if args.connected:
        sums = sums.filter_connected()
    if args.format == "dot":
        blocks = [
            f"// coefficient {c}\n" + g.to_dot(f"g{i}")
            for i, (g, c) in enumerate(sorted(sums.terms.items(), key=lambda t: t[0].canonical_key()))
        ]
        text = "\n".join(blocks)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return 0
    _emit(
        {
            "schema": 1,
            "vertices": args.n_vertices,
            "arity": args.arity,
            "connected_only": bool(args.connected),
            "classes": fy.diagram_sum_to_json(sums),
            "total_matchings": sums.total_coefficient(),
        },
        args.out,
    )
    return 0


def cmd_phi4(args) -> int:
    try:
        if args.ladder:
            cutoffs = [int(tok) for tok in args.ladder.split(",") if tok]
            csv = phi4.coefficient_ladder_csv(args.d, cutoffs, args.order)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(csv)
            else:
                print(csv, end="")
            return 0
        series = phi4.partition_ratio_series(args.d, args.N, args.order)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    payload = {"schema": 1, "series": series.to_json()}
    if args.d == 3:
        ct = phi4.counterterms_d3(args.alpha or 0.0, args.N)
        payload["counterterms"] = {
            "beta": {str(k): v for k, v in ct.beta_coeffs.items()},
            "gamma": {str(k): v for k, v in ct.gamma_coeffs.items()},
        }
    if args.mc:
        if args.alpha is None or args.samples is None or args.seed is None:
            print("error: --mc needs --alpha, --samples and --seed", file=sys.stderr)
            return 2
        est, se = phi4.mc_partition_ratio(
            args.d, args.N, args.alpha, args.samples, args.seed
        )
        payload["mc"] = {
            "alpha": args.alpha,
            "samples": args.samples,
            "seed": args.seed,
            "estimate": est,
            "stderr": se,
        }
    _emit(payload, args.out)
    return 0


def cmd_field(args) -> int:
    if args.profile == "fractional":
        profile = torusfield.SpectralProfile("fractional", args.s)
    else:
        profile = torusfield.SpectralProfile(args.profile)
    lattice = torusfield.ModeLattice(args.d, args.N)
    sample = torusfield.sample_field(profile, lattice, args.seed)
    torusfield.write_sample(sample, args.out, args.grid)
    return 0


def _verify_checks(fast: bool):
    """(name, callable) pairs; each returns True on success."""

    def hermite_routes():
        top = 10 if fast else 16
        return all(
            polyalg.hermite(n)
            == polyalg.hermite_explicit(n)
            == polyalg.gram_schmidt_hermite(n)
            for n in range(top)
        )

    def product_sum():
        return polyalg.hermite_product(4, 4) == {8: 1, 6: 16, 4: 72, 2: 96, 0: 24}

    def isserlis_symbolic():
        from .cumulants import RingElem
        from .pairings import CovMatrix, isserlis_moment

        sym = {
            (i, j): RingElem.symbol(f"c{min(i, j)}{max(i, j)}")
            for i in range(4)
            for j in range(4)
        }
        C = CovMatrix([[sym[(i, j)] for j in range(4)] for i in range(4)])
        got = isserlis_moment(C, [0, 1, 2, 3])
        want = (
            sym[(0, 1)] * sym[(2, 3)]
            + sym[(0, 2)] * sym[(1, 3)]
            + sym[(0, 3)] * sym[(1, 2)]
        )
        return got == want

    def chaos_routes():
        import itertools

        from .chaos import ChaosElement, MultiIndex, chaos_multiply

        dims = 2
        grade_cap = 2 if fast else 3
        idxs = [
            MultiIndex(dict(zip(range(dims), combo)))
            for combo in itertools.product(range(grade_cap + 1), repeat=dims)
            if sum(combo) <= grade_cap
        ]
        for k1 in idxs:
            for k2 in idxs:
                F = ChaosElement(dims, {k1: 1})
                G = ChaosElement(dims, {k2: 1})
                if chaos_multiply(F, G, "direct") != chaos_multiply(
                    F, G, "contraction"
                ):
                    return False
        return True

    def linked_cluster():
        order = 3 if fast else 4
        a = phi4.log_partition_series(1, 2, order, route="connected")
        b = phi4.log_partition_series(1, 2, order, route="logstar")
        return all(
            a.coefficient(n).diagrams == b.coefficient(n).diagrams
            for n in range(order + 1)
        )

    def diagram_counts():
        two = fy.generate_diagrams([4, 4]).total_coefficient()
        three = fy.generate_diagrams([4, 4, 4]).filter_connected()
        return two == 24 and list(three.terms.values()) == [Fraction(1728)]

    def valuation_zero_mode():
        return fy.valuate(fy.single_edge(), 1, 8) == 1.0

    def degrees_and_thresholds():
        ok = fy.degree_coeffs(fy.banana(3)) == (6, -2)
        ok &= fy.degree_coeffs(fy.sunset_with_tail()) == (10, -3)
        t = phi4.thresholds(3)
        ok &= (t.n_star_e, t.n_star_m) == (3, 2)
        ok &= phi4.ThresholdReport.d_star_m(3) == Fraction(10, 3)
        return bool(ok)

    def bphz_bubble():
        return fy.bphz_valuate(fy.banana(3), 3, 4) == 0.0

    def bell_53():
        from .cumulants import RingElem, incomplete_bell

        x, y2, y3 = (RingElem.symbol(s) for s in ("x", "y2", "y3"))
        return incomplete_bell(5, 3) == x * y2 * y2 * 15 + x * x * y3 * 10

    return [
        ("hermite triple route", hermite_routes),
        ("product-sum linearization", product_sum),
        ("isserlis four-point symbolic", isserlis_symbolic),
        ("chaos multiplication routes", chaos_routes),
        ("linked-cluster log* route", linked_cluster),
        ("diagram matching counts", diagram_counts),
        ("single-edge valuation = 1", valuation_zero_mode),
        ("degrees and thresholds", degrees_and_thresholds),
        ("bphz bubble subtraction", bphz_bubble),
        ("incomplete bell B_{5,3}", bell_53),
    ]


def cmd_verify(args) -> int:
    checks = _verify_checks(args.fast)
    results = parallel_map(
        lambda pair: (pair[0], bool(pair[1]())), checks, args.threads
    )
    failed = 0
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failed += 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wickworks",
        description="Exact Wiener-chaos algebra and perturbative quartic expansions",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=max(1, os.cpu_count() or 1),
        help="cap for worker threads (results are thread-count independent)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hermite", help="print a (scaled) Hermite polynomial")
    p.add_argument("n", type=int)
    p.add_argument("--sigma2", type=str, default=None, help="variance as a rational, e.g. 3/2")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_hermite)

    p = sub.add_parser("diagrams", help="enumerate vacuum diagrams with symmetry factors")
    p.add_argument("n_vertices", type=int)
    p.add_argument("arity", type=int)
    p.add_argument("--connected", action="store_true")
    p.add_argument("--format", choices=["json", "dot"], default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_diagrams)

    p = sub.add_parser("phi4", help="partition-ratio series and optional Monte Carlo")
    p.add_argument("--d", type=int, required=True, choices=[1, 2, 3])
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--mc", action="store_true")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ladder", default=None, help="comma list of cutoffs; emit a CSV coefficient table")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_phi4)

    p = sub.add_parser("field", help="sample a spectral field and write grid values")
    p.add_argument("--profile", choices=["white", "gff", "fractional"], required=True)
    p.add_argument("--s", type=float, default=0.5, help="fractional profile exponent")
    p.add_argument("--d", type=int, required=True, choices=[1, 2, 3])
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("verify", help="run the cross-module oracle table")
    p.add_argument("--fast", action="store_true", help="smaller sweeps")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
