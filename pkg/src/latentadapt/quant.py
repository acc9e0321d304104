"""Quantized adaptation support.

Two independent pieces live here. The 1-bit correction collapses a candidate
vector to a single magnitude with per-element signs, so the search reduces to
flipping k switches. The fixed-point optimizer re-runs the CMA-ES update
equations with every state component held in signed two's-complement
fixed-point arithmetic: round-to-nearest-even everywhere, saturating (never
wrapping) on overflow. Sampling noise stays in floating point and is
quantized on arrival; scalar transcendentals (sqrt, exp) are evaluated in
float on the fixed-point operand and requantized, standing in for the lookup
tables real hardware would use.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import linalg
from .cmaes import CmaEsParams, MinimizeResult
from .errors import ContractViolation
from .rng import Xoshiro256pp

_FMT_RE = re.compile(r"^(\d+)b(\d+)$")


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed-point layout: 1 sign bit, ``integer_bits``, rest fraction.

    The integer-bit count excludes the sign bit, so an ``x``-bit format with
    ``y`` integer bits has ``x - 1 - y`` fractional bits and covers
    [-2^y, 2^y - 2^-(x-1-y)].
    """

    total_bits: int
    integer_bits: int

    def __post_init__(self):
        if not (4 <= self.total_bits <= 32):
            raise ContractViolation("total bits must be in [4, 32]")
        if not (0 <= self.integer_bits <= self.total_bits - 1):
            raise ContractViolation("integer bits must be in [0, total-1]")

    @classmethod
    def parse(cls, text: str) -> "FixedPointFormat":
        """Parse the ``xby`` notation, e.g. ``8b4``."""
        m = _FMT_RE.match(text.strip())
        if not m:
            raise ContractViolation(f"bad fixed-point format {text!r}, expected e.g. 8b4")
        return cls(total_bits=int(m.group(1)), integer_bits=int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.total_bits}b{self.integer_bits}"

    @property
    def frac_bits(self) -> int:
        return self.total_bits - 1 - self.integer_bits

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.raw_min * self.resolution

    @property
    def max_value(self) -> float:
        return self.raw_max * self.resolution


@dataclass(frozen=True)
class FixedPointValue:
    raw: int
    fmt: FixedPointFormat

    def __post_init__(self):
        if not (self.fmt.raw_min <= self.raw <= self.fmt.raw_max):
            raise ContractViolation("raw value outside representable range")

    def to_float(self) -> float:
        return self.raw * self.fmt.resolution


def _rhe_div(num: int, den: int) -> int:
    """Round num/den to the nearest integer, ties to even. den > 0."""
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q & 1):
        q += 1
    return q


def to_fixed(v: float, fmt: FixedPointFormat) -> FixedPointValue:
    """Quantize a finite real: round to nearest (ties to even), then saturate."""
    if not math.isfinite(v):
        raise ContractViolation("value must be finite")
    scaled = float(np.rint(v * (1 << fmt.frac_bits)))
    raw = int(min(max(scaled, fmt.raw_min), fmt.raw_max))
    return FixedPointValue(raw=raw, fmt=fmt)


def from_fixed(v: FixedPointValue) -> float:
    return v.to_float()


def _check_formats(a: FixedPointValue, b: FixedPointValue) -> FixedPointFormat:
    if a.fmt != b.fmt:
        raise ContractViolation(f"format mismatch: {a.fmt} vs {b.fmt}")
    return a.fmt


def fixed_add(a: FixedPointValue, b: FixedPointValue) -> FixedPointValue:
    """Exact integer add, saturated to the format range."""
    fmt = _check_formats(a, b)
    raw = min(max(a.raw + b.raw, fmt.raw_min), fmt.raw_max)
    return FixedPointValue(raw=raw, fmt=fmt)


def fixed_mul(a: FixedPointValue, b: FixedPointValue) -> FixedPointValue:
    """Exact integer multiply, rescaled with round-to-nearest-even, saturated."""
    fmt = _check_formats(a, b)
    product = a.raw * b.raw
    f = fmt.frac_bits
    raw = _rhe_div(product, 1 << f) if f > 0 else product
    raw = min(max(raw, fmt.raw_min), fmt.raw_max)
    return FixedPointValue(raw=raw, fmt=fmt)


def quantize_binary(p: np.ndarray, magnitude: float) -> np.ndarray:
    """Collapse each element to +magnitude or -magnitude by sign (0 maps to +)."""
    if magnitude <= 0.0:
        raise ContractViolation("magnitude must be > 0")
    p = np.asarray(p, dtype=np.float64)
    return np.where(p >= 0.0, magnitude, -magnitude)


class _FixedOps:
    """Vectorized raw-integer fixed-point arithmetic with saturation counting.

    Raw values are int64 scalars or arrays; every result is saturated back to
    the format range, and each clipped element increments ``saturations``.
    """

    def __init__(self, fmt: FixedPointFormat):
        self.fmt = fmt
        self.f = fmt.frac_bits
        self.saturations = 0

    def _sat(self, raw):
        clipped = np.clip(raw, self.fmt.raw_min, self.fmt.raw_max)
        self.saturations += int(np.count_nonzero(clipped != raw))
        return clipped

    def quantize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(np.isnan(x)):
            raise ContractViolation("cannot quantize NaN")
        scaled = np.rint(x * (1 << self.f))
        out_of_range = (scaled < self.fmt.raw_min) | (scaled > self.fmt.raw_max)
        self.saturations += int(np.count_nonzero(out_of_range))
        clipped = np.clip(scaled, self.fmt.raw_min, self.fmt.raw_max)
        return clipped.astype(np.int64)

    def to_float(self, raw):
        return np.asarray(raw, dtype=np.float64) * self.fmt.resolution

    def add(self, a, b):
        return self._sat(np.add(a, b, dtype=np.int64))

    def sub(self, a, b):
        return self._sat(np.subtract(a, b, dtype=np.int64))

    def _rhe_shift(self, p):
        if self.f == 0:
            return p
        q = p >> self.f
        r = p - (q << self.f)
        half = 1 << (self.f - 1)
        inc = (r > half) | ((r == half) & ((q & 1) == 1))
        return q + inc

    def mul(self, a, b):
        product = np.multiply(a, b, dtype=np.int64)
        return self._sat(self._rhe_shift(product))

    def div(self, a, b):
        """a / b in the format; division by zero saturates by numerator sign."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        num, den = np.broadcast_arrays(np.left_shift(a, self.f), b)
        flip = den < 0
        num = np.where(flip, -num, num)
        den = np.where(flip, -den, den)
        zero = den == 0
        self.saturations += int(np.count_nonzero(zero))
        safe = np.where(zero, np.int64(1), den)
        q = num // safe
        r = num - q * safe
        twice = 2 * r
        q = q + ((twice > safe) | ((twice == safe) & ((q & 1) == 1)))
        q = np.where(zero, np.where(num >= 0, self.fmt.raw_max, self.fmt.raw_min), q)
        return self._sat(q)

    def halve(self, raw):
        """Divide by two with round-to-nearest-even (cannot saturate)."""
        raw = np.asarray(raw, dtype=np.int64)
        q = raw >> 1
        r = raw - (q << 1)
        inc = (r == 1) & ((q & 1) == 1)
        return q + inc

    def apply_float(self, raw, fn: Callable[[np.ndarray], np.ndarray]):
        """Evaluate ``fn`` in float on the operand's value, requantize."""
        return self.quantize(fn(self.to_float(raw)))


@dataclass(frozen=True)
class FixedMinimizeResult(MinimizeResult):
    fmt: FixedPointFormat = FixedPointFormat(32, 8)
    saturation_count: int = 0
    sigma_clamp_count: int = 0
    eig_clamp_count: int = 0


class _FixedCmaes:
    """CMA-ES state machine carried entirely in fixed-point registers."""

    def __init__(self, params: CmaEsParams, fmt: FixedPointFormat):
        self.params = params
        self.ops = _FixedOps(fmt)
        self.rng = Xoshiro256pp(params.seed)
        self.generation = 0
        self.sigma_clamps = 0
        self.eig_clamps = 0
        self._eig_cache = None

        ops = self.ops
        k = params.dim
        self.mean = np.zeros(k, dtype=np.int64)
        self.sigma = int(ops.quantize(params.initial_sigma))
        if self.sigma <= 0:
            self.sigma = 1
            self.sigma_clamps += 1
        self.cov = ops.quantize(np.eye(k))
        self.path_sigma = np.zeros(k, dtype=np.int64)
        self.path_c = np.zeros(k, dtype=np.int64)

        # strategy constants, quantized once
        self.w = ops.quantize(params.recombination_weights)
        self.one = int(ops.quantize(1.0))
        self.chi = int(ops.quantize(params.chi_n))
        self.cs_over_ds = int(ops.quantize(params.c_sigma / params.d_sigma))
        self.one_minus_cs = int(ops.quantize(1.0 - params.c_sigma))
        self.coef_sigma = int(
            ops.quantize(math.sqrt(params.c_sigma * (2.0 - params.c_sigma) * params.mu_eff))
        )
        self.one_minus_cc = int(ops.quantize(1.0 - params.c_c))
        self.coef_c = int(
            ops.quantize(math.sqrt(params.c_c * (2.0 - params.c_c) * params.mu_eff))
        )
        self.c1 = int(ops.quantize(params.c_1))
        self.cmu = int(ops.quantize(params.c_mu))
        self.base_coef = int(ops.quantize(1.0 - params.c_1 - params.c_mu))
        self.hsig_coef = int(ops.quantize(params.c_c * (2.0 - params.c_c)))

    def _decompose(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig_cache is None:
            cov_float = self.ops.to_float(self.cov)
            values, vectors = linalg.sym_eig(cov_float, self.params.dim)
            floor = self.ops.fmt.resolution
            clamped = np.maximum(values, floor)
            self.eig_clamps += int(np.count_nonzero(values < floor))
            self._eig_cache = (clamped, vectors)
        return self._eig_cache

    def ask(self) -> np.ndarray:
        """Sample lambda candidates as raw fixed-point vectors."""
        values, vectors = self._decompose()
        scale = np.sqrt(values)
        mean_f = self.ops.to_float(self.mean)
        sigma_f = self.sigma * self.ops.fmt.resolution
        out = np.empty((self.params.population, self.params.dim), dtype=np.int64)
        for i in range(self.params.population):
            n = self.rng.normals(self.params.dim)
            y = vectors @ (scale * n)
            out[i] = self.ops.quantize(mean_f + sigma_f * y)
        return out

    def tell(self, candidates_raw: np.ndarray, fitnesses: list[float]) -> None:
        params = self.params
        ops = self.ops
        order = np.argsort(np.asarray(fitnesses, dtype=np.float64), kind="stable")
        parents = candidates_raw[order[: params.parent_count]]

        values, vectors = self._decompose()

        # normalized parent steps y_i = (x_i - m) / sigma
        y = ops.div(ops.sub(parents, self.mean[None, :]), np.int64(self.sigma))
        y_w = np.zeros(params.dim, dtype=np.int64)
        for i in range(params.parent_count):
            y_w = ops.add(y_w, ops.mul(self.w[i], y[i]))
        self.mean = ops.add(self.mean, ops.mul(np.int64(self.sigma), y_w))

        # C^(-1/2), tabulated from the float decomposition then fixed matvec
        invsqrt = ops.quantize(vectors @ ((1.0 / np.sqrt(values))[:, None] * vectors.T))
        prod = ops.mul(invsqrt, y_w[None, :])
        invsqrt_yw = np.zeros(params.dim, dtype=np.int64)
        for j in range(params.dim):
            invsqrt_yw = ops.add(invsqrt_yw, prod[:, j])
        self.path_sigma = ops.add(
            ops.mul(np.int64(self.one_minus_cs), self.path_sigma),
            ops.mul(np.int64(self.coef_sigma), invsqrt_yw),
        )

        sq = ops.mul(self.path_sigma, self.path_sigma)
        total = np.int64(0)
        for j in range(params.dim):
            total = ops.add(total, sq[j])
        ps_norm = int(ops.apply_float(total, np.sqrt))

        ratio = ops.div(np.int64(ps_norm), np.int64(self.chi))
        arg = ops.mul(np.int64(self.cs_over_ds), ops.sub(ratio, np.int64(self.one)))
        factor = ops.apply_float(arg, np.exp)
        new_sigma = int(ops.mul(np.int64(self.sigma), factor))
        if new_sigma <= 0:
            new_sigma = 1
            self.sigma_clamps += 1
        self.sigma = new_sigma

        gen1 = self.generation + 1
        c_s = params.c_sigma
        denom = math.sqrt(1.0 - (1.0 - c_s) ** (2.0 * gen1))
        h_sig = 1 if (
            float(ops.to_float(np.int64(ps_norm))) / denom
            < (1.4 + 2.0 / (params.dim + 1.0)) * params.chi_n
        ) else 0

        pc_update = ops.mul(np.int64(self.coef_c), y_w) if h_sig else np.zeros(
            params.dim, dtype=np.int64
        )
        self.path_c = ops.add(ops.mul(np.int64(self.one_minus_cc), self.path_c), pc_update)

        rank1 = ops.mul(self.path_c[:, None], self.path_c[None, :])
        if not h_sig:
            rank1 = ops.add(rank1, ops.mul(np.int64(self.hsig_coef), self.cov))
        rank_mu = np.zeros((params.dim, params.dim), dtype=np.int64)
        for i in range(params.parent_count):
            outer = ops.mul(y[i][:, None], y[i][None, :])
            rank_mu = ops.add(rank_mu, ops.mul(self.w[i], outer))

        cov = ops.add(
            ops.add(
                ops.mul(np.int64(self.base_coef), self.cov),
                ops.mul(np.int64(self.c1), rank1),
            ),
            ops.mul(np.int64(self.cmu), rank_mu),
        )
        self.cov = ops.halve(ops.add(cov, cov.T))
        self.generation = gen1
        self._eig_cache = None


def fixed_cmaes_minimize(
    objective: Callable[[np.ndarray], float],
    params: CmaEsParams,
    iterations: int,
    fmt: FixedPointFormat,
    baseline: Optional[np.ndarray] = None,
) -> FixedMinimizeResult:
    """Fixed-point counterpart of :func:`latentadapt.cmaes.minimize`.

    Same loop, same baseline guarantee, same evaluation budget; the search
    state lives in ``fmt`` registers and the objective sees each candidate's
    exact fixed-point value as a float.
    """
    if iterations < 1:
        raise ContractViolation("iterations must be >= 1")
    machine = _FixedCmaes(params, fmt)
    ops = machine.ops
    evaluations = 0
    nonfinite = 0
    best_p: Optional[np.ndarray] = None
    best_f = math.inf

    def evaluate(point: np.ndarray) -> float:
        nonlocal evaluations, nonfinite
        value = float(objective(point))
        evaluations += 1
        if not math.isfinite(value):
            nonfinite += 1
            return math.inf
        return value

    if baseline is not None:
        baseline = np.asarray(baseline, dtype=np.float64)
        if baseline.shape != (params.dim,):
            raise ContractViolation("baseline must have the search dimension")
        point = ops.to_float(ops.quantize(baseline))
        best_f = evaluate(point)
        best_p = point.copy()

    trace: list[float] = []
    for _ in range(iterations):
        raw = machine.ask()
        points = [ops.to_float(raw[i]) for i in range(params.population)]
        fits = [evaluate(point) for point in points]
        for point, f in zip(points, fits):
            if best_p is None or f < best_f:
                best_f = f
                best_p = point.copy()
        if any(math.isinf(f) for f in fits):
            finite = [f for f in fits if math.isfinite(f)]
            sentinel = (max(finite) if finite else 0.0) + 1.0
            fed = [f if math.isfinite(f) else sentinel for f in fits]
        else:
            fed = fits
        machine.tell(raw, fed)
        trace.append(best_f)

    assert best_p is not None
    return FixedMinimizeResult(
        best_p=best_p,
        best_fitness=best_f,
        trace=trace,
        evaluations=evaluations,
        nonfinite_count=nonfinite,
        fmt=fmt,
        saturation_count=ops.saturations,
        sigma_clamp_count=machine.sigma_clamps,
        eig_clamp_count=machine.eig_clamps,
    )
