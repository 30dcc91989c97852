"""Spectral Gaussian fields on the d-torus and the lattice sums behind them.

Modes live on the l1 ball K_N = {k in Z^d : |k_1| + ... + |k_d| <= N} (the l1
truncation is deliberate; l2 balls are the common alternative) with weights
lambda_k = 1 + (2 pi)^d ||k||^2. Sampling uses a real cosine/sine basis with
one independent standard normal per amplitude, so no Hermitian-coefficient
bookkeeping is needed; all covariance targets below are stated in that basis.

Lattice sums accumulate with math.fsum / exact convolutions so the
Cauchy-convergence tests downstream are about the sums, not about float
noise. Passing a Fraction `coupling` to ModeLattice switches the weights to
exact rationals, which the convolution-vs-brute-force identities use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import cosh, pi, sinh, sqrt

import numpy as np

TWO_PI = 2.0 * math.pi


def _l1_ball(d: int, N: int) -> list[tuple[int, ...]]:
    def rec(dim, budget):
        if dim == 0:
            yield ()
            return
        for first in range(-budget, budget + 1):
            for rest in rec(dim - 1, budget - abs(first)):
                yield (first,) + rest

    return sorted(rec(d, N))


class ModeLattice:
    """Truncated Fourier lattice K_N in Z^d with weights lambda_k.

    coupling defaults to (2 pi)^d; a Fraction coupling keeps every weight an
    exact rational (used by the exact convolution cross-checks).
    """

    def __init__(self, d: int, N: int, coupling=None):
        if d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if N < 0:
            raise ValueError("N must be >= 0")
        self.d = d
        self.N = N
        self.coupling = (TWO_PI**d) if coupling is None else coupling
        self.modes = _l1_ball(d, N)

    def lam(self, k) -> float:
        norm2 = sum(int(c) ** 2 for c in k)
        return 1 + self.coupling * norm2

    def weight(self, k, s=1.0):
        """lambda_k^(-s); exact when both the coupling and s are rational."""
        lam = self.lam(k)
        if isinstance(lam, Fraction) and isinstance(s, int):
            return Fraction(1) / lam**s
        return float(lam) ** (-float(s))

    def positive_modes(self) -> list[tuple[int, ...]]:
        """One representative per +-k pair: first nonzero coordinate positive."""
        out = []
        for k in self.modes:
            for c in k:
                if c > 0:
                    out.append(k)
                    break
                if c < 0:
                    break
        return out

    def inverse_weight_cube(self, s: float = 1.0) -> np.ndarray:
        """Array of lambda_k^(-s) over the centered box [-N, N]^d, zero off K_N."""
        side = 2 * self.N + 1
        cube = np.zeros((side,) * self.d)
        for k in self.modes:
            idx = tuple(c + self.N for c in k)
            cube[idx] = float(self.lam(k)) ** (-float(s))
        return cube


@lru_cache(maxsize=None)
def _lattice(d: int, N: int) -> ModeLattice:
    return ModeLattice(d, N)


def c_variance(d: int, N: int) -> float:
    """C_N = sum over K_N of 1/lambda_k, the truncated-field variance."""
    lat = _lattice(d, N)
    return math.fsum(1.0 / float(lat.lam(k)) for k in lat.modes)


def c_variance_exact(d: int, N: int, coupling: Fraction) -> Fraction:
    """Exact-rational C_N for a rational stand-in coupling (test hook)."""
    lat = ModeLattice(d, N, coupling=Fraction(coupling))
    total = Fraction(0)
    for k in lat.modes:
        total += Fraction(1) / lat.lam(k)
    return total


def green_truncated(x, d: int, N: int) -> float:
    """G_N(x) = sum over K_N of cos(2 pi k.x)/lambda_k (sines cancel by k <-> -k)."""
    lat = _lattice(d, N)
    xs = tuple(float(c) for c in x) if hasattr(x, "__len__") else (float(x),)
    if len(xs) != d:
        raise ValueError("point dimension mismatch")
    return math.fsum(
        math.cos(TWO_PI * sum(ki * xi for ki, xi in zip(k, xs))) / float(lat.lam(k))
        for k in lat.modes
    )


def green_exact_1d(x: float) -> float:
    """Periodic resolvent of u - a u'' = delta on the unit circle, a = 1/(2 pi).

    Solving the ODE with the 2x2 transfer matrix U(x) = [[cosh, sinh], [sinh,
    cosh]](x / sqrt(a)) and periodic matching gives a single cosh profile; this
    is the N -> infinity limit of green_truncated in d = 1 and the closed form
    behind C_infinity = sqrt(pi/2) coth(sqrt(pi/2)).
    """
    a = 1.0 / TWO_PI
    root = sqrt(a)
    x = x % 1.0
    return cosh((x - 0.5) / root) / (2.0 * root * sinh(0.5 / root))


@dataclass(frozen=True)
class SpectralProfile:
    """Per-mode weight exponent: white = lambda^0, gff = lambda^(-1/2), fractional(s) = lambda^(-s)."""

    kind: str
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("white", "gff", "fractional"):
            raise ValueError(f"unknown profile {self.kind!r}")
        if self.kind == "fractional" and self.s < 0:
            raise ValueError("fractional exponent must be >= 0")

    @property
    def exponent(self) -> float:
        return {"white": 0.0, "gff": 0.5, "fractional": float(self.s)}[self.kind]


WHITE = SpectralProfile("white")
GFF = SpectralProfile("gff")


class FieldSample:
    """One realization of a spectral Gaussian field in the real Fourier basis.

    Mode labels are (k, "c") / (k, "s") for sqrt(2) cos(2 pi k.x) and
    sqrt(2) sin(2 pi k.x) over positive representatives k, plus (0, "c") for
    the constant mode. `amplitudes[mode]` is the weighted coefficient
    lambda_k^(-exponent) * Z_mode with independent standard normal Z.
    """

    def __init__(self, lattice: ModeLattice, profile: SpectralProfile, seed: int):
        self.lattice = lattice
        self.profile = profile
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.pos_modes = lattice.positive_modes()
        zero = (0,) * lattice.d
        labels = [(zero, "c")]
        for k in self.pos_modes:
            labels.append((k, "c"))
            labels.append((k, "s"))
        self.labels = labels
        z = rng.standard_normal(len(labels))
        weights = np.array(
            [float(lattice.lam(k)) ** (-profile.exponent) for k, _ in labels]
        )
        self.amplitudes = dict(zip(labels, weights * z))

    def variance_target(self) -> float:
        """E[field(x)^2] = sum over all of K_N of lambda^(-2 exponent)."""
        e = self.profile.exponent
        return math.fsum(
            float(self.lattice.lam(k)) ** (-2 * e) for k in self.lattice.modes
        )

    def evaluate(self, points) -> np.ndarray:
        """Direct synthesis at an array of points, shape (npoints, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.zeros(len(pts))
        zero = (0,) * self.lattice.d
        for (k, part), amp in self.amplitudes.items():
            if k == zero:
                vals += amp
                continue
            phase = TWO_PI * pts @ np.asarray(k, dtype=float)
            vals += amp * math.sqrt(2.0) * (np.cos(phase) if part == "c" else np.sin(phase))
        return vals

    def evaluate_grid(self, M: int) -> np.ndarray:
        """Values on the uniform M^d grid (j/M), synthesized directly."""
        d = self.lattice.d
        axes = np.arange(M) / M
        grids = np.meshgrid(*([axes] * d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        return self.evaluate(pts).reshape((M,) * d)


def sample_field(profile: SpectralProfile, lattice: ModeLattice, seed: int) -> FieldSample:
    return FieldSample(lattice, profile, seed)


def pair_with_testfunction(sample: FieldSample, phihat: dict) -> float:
    """Mode-space inner product sum_modes amplitude * phihat(mode).

    Keys are the sample's real-basis labels (k tuple, "c" | "s"); anything
    outside the lattice is an error.
    """
    for mode in phihat:
        if mode not in sample.amplitudes:
            raise ValueError(f"mode {mode} not in the lattice")
    return math.fsum(
        sample.amplitudes[mode] * coeff for mode, coeff in phihat.items()
    )


def testfunction_from_values(lattice: ModeLattice, func, grid: int | None = None) -> dict:
    """Real-basis coefficients of a function given pointwise, by quadrature.

    Coefficients beyond the lattice are discarded; the returned map can feed
    pair_with_testfunction. Quadrature is exact for trig polynomials of
    per-axis degree < grid/2 ... good enough for smooth bumps.
    """
    d = lattice.d
    if grid is None:
        grid = 8 * max(lattice.N, 1)
    axes = np.arange(grid) / grid
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    vals = np.array([func(p) for p in pts])
    out = {}
    zero = (0,) * d
    out[(zero, "c")] = float(vals.mean())
    for k in lattice.positive_modes():
        phase = TWO_PI * pts @ np.asarray(k, dtype=float)
        out[(k, "c")] = float((vals * np.cos(phase)).mean() * math.sqrt(2.0))
        out[(k, "s")] = float((vals * np.sin(phase)).mean() * math.sqrt(2.0))
    return out


def sobolev_sum(s: float, d: int, N: int, profile: SpectralProfile) -> float:
    """E ||.||_{H^s}^2 over K_N: sum lambda^s (white) or lambda^(s-1) (gff)."""
    if profile.kind == "white":
        expo = s
    elif profile.kind == "gff":
        expo = s - 1.0
    else:
        raise ValueError("sobolev_sum supports the white and gff profiles")
    lat = _lattice(d, N)
    return math.fsum(float(lat.lam(k)) ** expo for k in lat.modes)


def wick_power_field(sample: FieldSample, n: int, grid: int) -> np.ndarray:
    """Pointwise Wick power: H_n(field(x); variance) on the M^d grid.

    The variance is the field's own pointwise variance (C_N for the gff
    profile), so the result is centered by construction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    values = sample.evaluate_grid(grid)
    c = sample.variance_target()
    out = np.zeros_like(values)
    for k in range(n // 2 + 1):
        coeff = (
            (-1) ** k
            * math.factorial(n)
            / (2**k * math.factorial(k) * math.factorial(n - 2 * k))
            * c**k
        )
        out += coeff * values ** (n - 2 * k)
    return out


def integral_wick_square(sample: FieldSample) -> float:
    """Exact mode-space value of integral of :field^2: over the torus.

    Parseval: integral field^2 = sum of squared real-basis amplitudes, and the
    Wick subtraction removes the deterministic variance.
    """
    total = math.fsum(a * a for a in sample.amplitudes.values())
    return total - sample.variance_target()


def mode_labels(lattice: ModeLattice) -> list:
    """Real-basis amplitude labels in the fixed sampling order."""
    zero = (0,) * lattice.d
    labels = [(zero, "c")]
    for k in lattice.positive_modes():
        labels.append((k, "c"))
        labels.append((k, "s"))
    return labels


def synthesis_matrix(lattice: ModeLattice, points: np.ndarray) -> np.ndarray:
    """Matrix B with B[p, mode] the basis function value at point p.

    field values = B @ amplitudes; points has shape (npoints, d).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    labels = mode_labels(lattice)
    B = np.empty((len(pts), len(labels)))
    zero = (0,) * lattice.d
    for col, (k, part) in enumerate(labels):
        if k == zero:
            B[:, col] = 1.0
            continue
        phase = TWO_PI * pts @ np.asarray(k, dtype=float)
        B[:, col] = math.sqrt(2.0) * (np.cos(phase) if part == "c" else np.sin(phase))
    return B


def grid_points(d: int, M: int) -> np.ndarray:
    axes = np.arange(M) / M
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def batch_amplitudes(
    lattice: ModeLattice, profile: SpectralProfile, nsamples: int, seed: int
) -> np.ndarray:
    """Weighted amplitudes for nsamples fields, shape (nmodes, nsamples).

    Column j is an independent field; the draw order is the fixed label order,
    so results are deterministic under the seed.
    """
    labels = mode_labels(lattice)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((len(labels), nsamples))
    weights = np.array(
        [float(lattice.lam(k)) ** (-profile.exponent) for k, _ in labels]
    )
    return weights[:, None] * z


# ---------------------------------------------------------------------------
# exact lattice convolutions


def convolve_cubes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact linear convolution of centered cubes via FFT with full padding."""
    d = a.ndim
    out_shape = tuple(sa + sb - 1 for sa, sb in zip(a.shape, b.shape))
    axes = tuple(range(d))
    fa = np.fft.rfftn(a, out_shape, axes=axes)
    fb = np.fft.rfftn(b, out_shape, axes=axes)
    return np.fft.irfftn(fa * fb, out_shape, axes=axes)


def iterated_self_convolution(cube: np.ndarray, n: int) -> np.ndarray:
    """(n-1)-fold linear self-convolution: the n-th convolution power."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = cube
    for _ in range(n - 1):
        out = convolve_cubes(out, cube)
    return out


def _center_value(cube: np.ndarray) -> float:
    idx = tuple(s // 2 for s in cube.shape)
    return float(cube[idx])


def wick_integral_variance(d: int, N: int, n: int) -> float:
    """n! * sum over k_1+...+k_n = 0 (each k_i in K_N) of prod 1/lambda_{k_i}.

    This is the variance of integral :field^n: for the truncated free field,
    computed by n-1 lattice convolutions of the inverse-weight array.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    lat = _lattice(d, N)
    cube = lat.inverse_weight_cube(1.0)
    conv = iterated_self_convolution(cube, n)
    return math.factorial(n) * _center_value(conv)


def wick_integral_variance_bruteforce(d: int, N: int, n: int, coupling=None):
    """Direct nested sum over the constrained tuples; exact with a rational coupling."""
    if n < 2:
        raise ValueError("n must be >= 2")
    lat = ModeLattice(d, N, coupling=coupling)
    exact = isinstance(lat.coupling, Fraction)
    weights = {k: (Fraction(1) / lat.lam(k)) if exact else 1.0 / float(lat.lam(k)) for k in lat.modes}

    def rec(depth, partial_sum):
        if depth == n - 1:
            last = tuple(-c for c in partial_sum)
            return weights.get(last, Fraction(0) if exact else 0.0)
        total = Fraction(0) if exact else 0.0
        for k in lat.modes:
            w = weights[k]
            total += w * rec(depth + 1, tuple(p + c for p, c in zip(partial_sum, k)))
        return total

    zero = (0,) * d
    base = Fraction(0) if exact else 0.0
    for k in lat.modes:
        base += weights[k] * rec(1, k)
    return math.factorial(n) * base


def wick_integral_variance_exact(d: int, N: int, n: int, coupling: Fraction) -> Fraction:
    """Exact-rational convolution route, for comparison with the brute force."""
    if n < 2:
        raise ValueError("n must be >= 2")
    lat = ModeLattice(d, N, coupling=Fraction(coupling))
    weights = {k: Fraction(1) / lat.lam(k) for k in lat.modes}
    conv = dict(weights)
    for _ in range(n - 1):
        nxt: dict = {}
        for k1, w1 in conv.items():
            for k2, w2 in weights.items():
                key = tuple(a + b for a, b in zip(k1, k2))
                nxt[key] = nxt.get(key, Fraction(0)) + w1 * w2
        conv = nxt
    zero = (0,) * d
    return math.factorial(n) * conv.get(zero, Fraction(0))


def young_sum_check(d: int, n: int, m: int, kmax: int, truncation: int | None = None):
    """Constrained sum sum_{k1+k2=k} ||k1||^-n ||k2||^-m against C ||k||^-(n+m-d).

    Requires d > n, m > 0 and n + m > d (the admissible range of the
    inequality). Returns a list of (k, sum, witness constant) over 0 < ||k||
    <= kmax plus the running sup of the witness; the tests assert the sup is
    stable under doubling kmax.
    """
    if not (d > n > 0 and d > m > 0):
        raise ValueError("need d > n > 0 and d > m > 0")
    if n + m <= d:
        raise ValueError("need n + m > d")
    if truncation is None:
        truncation = 6 * kmax + 8
    ks = [
        k
        for k in _l1_ball(d, kmax)
        if any(k) and math.sqrt(sum(c * c for c in k)) <= kmax
    ]
    side = 2 * truncation + 1
    axes = np.arange(-truncation, truncation + 1)
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    norm = np.sqrt(sum(g.astype(float) ** 2 for g in grids))
    with np.errstate(divide="ignore"):
        inv_n = np.where(norm > 0, norm ** (-float(n)), 0.0)
        inv_m = np.where(norm > 0, norm ** (-float(m)), 0.0)
    rows = []
    sup = 0.0
    for k in ks:
        # inv_m shifted so index j reads ||k - j||^-m; out-of-window pairs drop
        shifted = np.zeros_like(inv_m)
        src = [slice(None)] * d
        dst = [slice(None)] * d
        for ax, kc in enumerate(k):
            if kc >= 0:
                src[ax], dst[ax] = slice(0, side - kc), slice(kc, side)
            else:
                src[ax], dst[ax] = slice(-kc, side), slice(0, side + kc)
        shifted[tuple(src)] = inv_m[tuple(dst)]
        total = float(np.sum(inv_n * shifted))
        nk = math.sqrt(sum(c * c for c in k))
        witness = total * nk ** (n + m - d)
        sup = max(sup, witness)
        rows.append((k, total, witness))
    return rows, sup


def gff1_increment_variance(x: float, y: float, N: int) -> float:
    """E[(field(y) - field(x))^2] for the truncated 1-d free field, exactly.

    Equals sum over K_N of 4 sin^2(pi k (y - x)) / lambda_k; scales like |y-x|.
    """
    lat = _lattice(1, N)
    dx = y - x
    return math.fsum(
        4.0 * math.sin(math.pi * k[0] * dx) ** 2 / float(lat.lam(k))
        for k in lat.modes
    )


# ---------------------------------------------------------------------------
# sample export


def write_sample(sample: FieldSample, path: str, grid: int) -> None:
    """One file: a JSON header line, then CSV rows of the grid values.

    Reruns with the same (lattice, profile, seed, grid) are byte-identical.
    """
    header = {
        "schema": 1,
        "d": sample.lattice.d,
        "N": sample.lattice.N,
        "profile": sample.profile.kind,
        "s": sample.profile.s,
        "seed": sample.seed,
        "grid": grid,
    }
    values = sample.evaluate_grid(grid)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        flat = values.reshape(-1, values.shape[-1]) if sample.lattice.d > 1 else values.reshape(1, -1)
        for row in flat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_sample_header(path: str) -> dict:
    with open(path) as fh:
        return json.loads(fh.readline())
