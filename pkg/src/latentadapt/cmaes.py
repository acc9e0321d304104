"""Forward-only CMA-ES with an ask/tell interface.

The sampling rule draws candidates from N(mean, sigma^2 * C). Ranked
fitnesses drive weighted recombination of the mean, cumulative step-size
adaptation of sigma, and a rank-1 plus rank-mu update of the covariance.
Strategy constants follow the standard tutorial defaults; the covariance is
decomposed with the package's own deterministic eigensolver and all noise
comes from the package PRNG, so runs replay bit for bit from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .errors import ContractViolation, ConvergenceFailure
from .rng import Xoshiro256pp


def default_lambda(k: int) -> int:
    """Default population size 4 + floor(3 ln k)."""
    if k < 1:
        raise ContractViolation("dimension must be >= 1")
    return 4 + int(math.floor(3.0 * math.log(k)))


@dataclass(frozen=True)
class CmaEsParams:
    """Strategy constants. Build with :meth:`defaults` unless testing."""

    dim: int
    population: int
    parent_count: int
    recombination_weights: np.ndarray  # (parent_count,), positive, sums to 1
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    initial_sigma: float
    seed: int

    def __post_init__(self):
        if self.population < 2:
            raise ContractViolation("population must be >= 2")
        w = np.asarray(self.recombination_weights, dtype=np.float64)
        if w.shape != (self.parent_count,):
            raise ContractViolation("weights length must equal parent count")
        if np.any(w <= 0.0) or np.any(np.diff(w) >= 0.0):
            raise ContractViolation("weights must be positive and strictly decreasing")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ContractViolation("weights must sum to 1")
        for name in ("c_sigma", "c_c", "c_1", "c_mu"):
            rate = getattr(self, name)
            if not (0.0 < rate <= 1.0):
                raise ContractViolation(f"{name} must be in (0, 1]")
        if self.d_sigma < 1.0:
            raise ContractViolation("d_sigma must be >= 1")
        if self.initial_sigma <= 0.0:
            raise ContractViolation("initial_sigma must be > 0")
        object.__setattr__(self, "recombination_weights", w)

    @classmethod
    def defaults(
        cls,
        dim: int,
        population: Optional[int] = None,
        initial_sigma: float = 1.0,
        seed: int = 0,
    ) -> "CmaEsParams":
        """Standard strategy constants for the given dimension."""
        if dim < 1:
            raise ContractViolation("dimension must be >= 1")
        lam = population if population is not None else default_lambda(dim)
        mu = lam // 2
        raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1, dtype=np.float64))
        weights = raw / raw.sum()
        mu_eff = 1.0 / float(np.sum(weights ** 2))
        c_sigma = (mu_eff + 2.0) / (dim + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (dim + 1.0)) - 1.0) + c_sigma
        c_c = (4.0 + mu_eff / dim) / (dim + 4.0 + 2.0 * mu_eff / dim)
        c_1 = 2.0 / ((dim + 1.3) ** 2 + mu_eff)
        c_mu = min(
            1.0 - c_1,
            2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((dim + 2.0) ** 2 + mu_eff),
        )
        return cls(
            dim=dim,
            population=lam,
            parent_count=mu,
            recombination_weights=weights,
            mu_eff=mu_eff,
            c_sigma=c_sigma,
            d_sigma=d_sigma,
            c_c=c_c,
            c_1=c_1,
            c_mu=c_mu,
            initial_sigma=initial_sigma,
            seed=seed,
        )

    @property
    def chi_n(self) -> float:
        """Expected norm of a standard normal vector of the search dimension."""
        k = self.dim
        return math.sqrt(k) * (1.0 - 1.0 / (4.0 * k) + 1.0 / (21.0 * k * k))


@dataclass
class CmaEsState:
    """Mutable search state. Single-owner: drive from one thread only."""

    params: CmaEsParams
    mean: np.ndarray
    sigma: float
    covariance: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int
    rng: Xoshiro256pp
    _eig_cache: Optional[tuple[np.ndarray, np.ndarray]] = field(
        default=None, repr=False, compare=False
    )


def init(params: CmaEsParams) -> CmaEsState:
    """Fresh state: zero mean, identity covariance, zeroed paths."""
    k = params.dim
    return CmaEsState(
        params=params,
        mean=np.zeros(k),
        sigma=params.initial_sigma,
        covariance=np.eye(k),
        path_sigma=np.zeros(k),
        path_c=np.zeros(k),
        generation=0,
        rng=Xoshiro256pp(params.seed),
    )


def _decompose(state: CmaEsState) -> tuple[np.ndarray, np.ndarray]:
    if state._eig_cache is None:
        values, vectors = linalg.sym_eig(state.covariance, state.params.dim)
        if values[-1] <= 0.0:
            raise ConvergenceFailure(
                f"covariance lost positive definiteness (min eigenvalue {values[-1]:.3e})"
            )
        state._eig_cache = (values, vectors)
    return state._eig_cache


def ask(state: CmaEsState) -> list[np.ndarray]:
    """Sample one population of candidates; advances only the RNG state."""
    params = state.params
    values, vectors = _decompose(state)
    scale = np.sqrt(values)
    candidates = []
    for _ in range(params.population):
        n = state.rng.normals(params.dim)
        y = vectors @ (scale * n)
        candidates.append(state.mean + state.sigma * y)
    return candidates


def tell(state: CmaEsState, candidates: list[np.ndarray], fitnesses: list[float]) -> CmaEsState:
    """Rank candidates ascending by fitness and update the search distribution.

    Ties rank by candidate index. The mean moves to the weighted recombination
    of the top parents, sigma follows cumulative step-size adaptation, and the
    covariance gets the rank-1 plus rank-mu update followed by explicit
    re-symmetrization.
    """
    params = state.params
    if len(candidates) != params.population or len(fitnesses) != params.population:
        raise ContractViolation(
            f"expected {params.population} candidates and fitnesses"
        )
    fit_arr = np.asarray(fitnesses, dtype=np.float64)
    if not np.all(np.isfinite(fit_arr)):
        raise ContractViolation("fitnesses must be finite")
    try:
        xs = np.asarray(candidates, dtype=np.float64)
    except ValueError as exc:
        raise ContractViolation("candidates must be rectangular") from exc
    if xs.shape != (params.population, params.dim):
        raise ContractViolation("candidates must each have the search dimension")

    values, vectors = _decompose(state)
    order = np.argsort(fit_arr, kind="stable")
    parents = xs[order[: params.parent_count]]
    w = params.recombination_weights

    old_mean = state.mean
    y_parents = (parents - old_mean) / state.sigma
    y_w = w @ y_parents
    state.mean = old_mean + state.sigma * y_w

    # C^(-1/2) action via the cached eigendecomposition
    invsqrt_yw = vectors @ ((vectors.T @ y_w) / np.sqrt(values))
    c_s = params.c_sigma
    state.path_sigma = (1.0 - c_s) * state.path_sigma + math.sqrt(
        c_s * (2.0 - c_s) * params.mu_eff
    ) * invsqrt_yw

    gen1 = state.generation + 1
    ps_norm = float(np.linalg.norm(state.path_sigma))
    state.sigma = state.sigma * math.exp(
        (c_s / params.d_sigma) * (ps_norm / params.chi_n - 1.0)
    )

    h_sig = 1.0 if (
        ps_norm / math.sqrt(1.0 - (1.0 - c_s) ** (2.0 * gen1))
        < (1.4 + 2.0 / (params.dim + 1.0)) * params.chi_n
    ) else 0.0
    c_c = params.c_c
    state.path_c = (1.0 - c_c) * state.path_c + h_sig * math.sqrt(
        c_c * (2.0 - c_c) * params.mu_eff
    ) * y_w

    rank_mu = (y_parents * w[:, None]).T @ y_parents
    cov = (
        (1.0 - params.c_1 - params.c_mu) * state.covariance
        + params.c_1
        * (
            np.outer(state.path_c, state.path_c)
            + (1.0 - h_sig) * c_c * (2.0 - c_c) * state.covariance
        )
        + params.c_mu * rank_mu
    )
    state.covariance = (cov + cov.T) / 2.0
    state.generation = gen1
    state._eig_cache = None
    return state


@dataclass(frozen=True)
class MinimizeResult:
    best_p: np.ndarray
    best_fitness: float
    trace: list[float]          # running best after each generation
    evaluations: int
    nonfinite_count: int        # objective values replaced by +inf


def minimize(
    objective: Callable[[np.ndarray], float],
    params: CmaEsParams,
    iterations: int,
    baseline: Optional[np.ndarray] = None,
    transform: Optional[Callable[[np.ndarray, CmaEsState], np.ndarray]] = None,
    feed_transformed_to_tell: bool = False,
) -> MinimizeResult:
    """Run ``iterations`` ask/evaluate/tell generations and return the best
    point over every evaluation made.

    The optional ``baseline`` is evaluated first and competes with sampled
    candidates, so the result can never be worse than it. ``transform`` maps
    each raw candidate to the point actually evaluated (and reported); by
    default the raw candidates are fed back to ``tell`` so the transform does
    not distort the search geometry.
    """
    if iterations < 1:
        raise ContractViolation("iterations must be >= 1")
    state = init(params)
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
        best_f = evaluate(baseline)
        best_p = baseline.copy()

    trace: list[float] = []
    for _ in range(iterations):
        raw = ask(state)
        points = [transform(c, state) for c in raw] if transform is not None else raw
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
        tell(state, points if feed_transformed_to_tell else raw, fed)
        trace.append(best_f)

    assert best_p is not None  # iterations >= 1 guarantees evaluations
    return MinimizeResult(
        best_p=best_p,
        best_fitness=best_f,
        trace=trace,
        evaluations=evaluations,
        nonfinite_count=nonfinite,
    )
