"""Single-instance adaptation of one latent vector.

For each test latent, a coordinate vector is searched by entropy minimization
over the fitted subspace, the frozen decoder scoring every candidate. The
no-correction point competes in the selection, so an adapted prediction can
never be less confident than the unadapted one. Nothing in the decoder or
subspace is ever modified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import cmaes, quant
from .decoder import LinearDecoder, Prediction, fitness
from .errors import ContractViolation
from .quant import FixedPointFormat
from .rng import derive_seed
from .subspace import PrincipalSubspace, apply_correction

MODES = ("float", "binary", "fixed")


@dataclass(frozen=True)
class AdaptationConfig:
    """Per-task knobs for the adaptation search.

    ``population`` defaults to the standard rule for the subspace dimension.
    ``binary_alpha`` pins the 1-bit magnitude; when None it tracks the
    optimizer's current step size. ``binary_feedback`` feeds the quantized
    candidates back into the optimizer update instead of the raw ones.
    """

    k: int = 16
    n: int = 8
    population: Optional[int] = None
    sigma0: float = 1.0
    seed: int = 0
    mode: str = "float"
    fixed_format: Optional[FixedPointFormat] = None
    binary_alpha: Optional[float] = None
    binary_feedback: bool = False

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ContractViolation("k and n must be >= 1")
        if self.mode not in MODES:
            raise ContractViolation(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "fixed" and self.fixed_format is None:
            raise ContractViolation("mode 'fixed' requires fixed_format")
        if self.population is not None and self.population < 2:
            raise ContractViolation("population must be >= 2")
        if self.sigma0 <= 0.0:
            raise ContractViolation("sigma0 must be > 0")
        if self.binary_alpha is not None and self.binary_alpha <= 0.0:
            raise ContractViolation("binary_alpha must be > 0")

    @property
    def effective_population(self) -> int:
        return self.population if self.population is not None else cmaes.default_lambda(self.k)

    def with_seed(self, seed: int) -> "AdaptationConfig":
        return AdaptationConfig(
            k=self.k,
            n=self.n,
            population=self.population,
            sigma0=self.sigma0,
            seed=seed,
            mode=self.mode,
            fixed_format=self.fixed_format,
            binary_alpha=self.binary_alpha,
            binary_feedback=self.binary_feedback,
        )


@dataclass(frozen=True)
class AdaptationResult:
    p_star: np.ndarray
    z_adapted: np.ndarray
    prediction: Prediction
    baseline_prediction: Prediction
    entropy_trace: list[float]
    evaluations: int
    quant_warnings: Optional[dict] = None  # fixed mode: saturation/clamp counts


def adapt(
    z_t: np.ndarray,
    decoder: LinearDecoder,
    s: PrincipalSubspace,
    cfg: AdaptationConfig,
) -> AdaptationResult:
    """Adapt one latent and return the best correction found.

    Runs ``cfg.n`` generations of entropy-minimizing search over the
    correction coordinates, with the zero correction evaluated first as the
    baseline. The winner is the lowest-entropy point over every evaluation.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.shape != (s.dim,):
        raise ContractViolation(f"latent must have shape ({s.dim},), got {z_t.shape}")
    if not np.all(np.isfinite(z_t)):
        raise ContractViolation("latent contains non-finite entries")
    if cfg.k != s.k:
        raise ContractViolation(f"config k={cfg.k} does not match subspace k={s.k}")
    if decoder.dim != s.dim:
        raise ContractViolation("decoder and subspace dimensions differ")

    params = cmaes.CmaEsParams.defaults(
        dim=cfg.k,
        population=cfg.effective_population,
        initial_sigma=cfg.sigma0,
        seed=cfg.seed,
    )

    # track the best prediction alongside the optimizer's best fitness; calls
    # happen in the same order minimize compares them (baseline first)
    best: dict = {"f": math.inf, "pred": None, "first": None}

    def objective(p: np.ndarray) -> float:
        entropy, prediction = fitness(decoder, s, z_t, p)
        if best["first"] is None:
            best["first"] = prediction
        if prediction.entropy < best["f"]:
            best["f"] = prediction.entropy
            best["pred"] = prediction
        return entropy

    baseline = np.zeros(cfg.k)
    quant_warnings = None
    if cfg.mode == "fixed":
        result = quant.fixed_cmaes_minimize(
            objective, params, cfg.n, cfg.fixed_format, baseline=baseline
        )
        quant_warnings = {
            "saturations": result.saturation_count,
            "sigma_clamps": result.sigma_clamp_count,
            "eig_clamps": result.eig_clamp_count,
        }
    elif cfg.mode == "binary":
        def transform(p: np.ndarray, state: cmaes.CmaEsState) -> np.ndarray:
            alpha = cfg.binary_alpha if cfg.binary_alpha is not None else state.sigma
            return quant.quantize_binary(p, alpha)

        result = cmaes.minimize(
            objective,
            params,
            cfg.n,
            baseline=baseline,
            transform=transform,
            feed_transformed_to_tell=cfg.binary_feedback,
        )
    else:
        result = cmaes.minimize(objective, params, cfg.n, baseline=baseline)

    p_star = result.best_p
    z_adapted = apply_correction(s, z_t, p_star)
    prediction = best["pred"] if best["pred"] is not None else best["first"]
    return AdaptationResult(
        p_star=p_star,
        z_adapted=z_adapted,
        prediction=prediction,
        baseline_prediction=best["first"],
        entropy_trace=result.trace,
        evaluations=result.evaluations,
        quant_warnings=quant_warnings,
    )


@dataclass(frozen=True)
class BatchResult:
    """Per-row outcomes; failed rows hold None with the error kept alongside."""

    results: list[Optional[AdaptationResult]]
    errors: dict[int, Exception] = field(default_factory=dict)


def adapt_batch(
    z_rows: np.ndarray,
    decoder: LinearDecoder,
    s: PrincipalSubspace,
    cfg: AdaptationConfig,
    indices: Optional[np.ndarray] = None,
) -> BatchResult:
    """Adapt each row independently with a per-row derived seed.

    Row ``i`` uses the seed derived from ``cfg.seed`` and ``indices[i]``
    (default: the row position), so outcomes do not depend on processing
    order and shards can be recombined. Per-row failures are collected, not
    raised.
    """
    z_rows = np.asarray(z_rows, dtype=np.float64)
    if z_rows.ndim != 2:
        raise ContractViolation("batch must be a 2-d array of latents")
    n_rows = z_rows.shape[0]
    if indices is None:
        indices = np.arange(n_rows)
    else:
        indices = np.asarray(indices)
        if indices.shape != (n_rows,):
            raise ContractViolation("indices must have one entry per row")

    results: list[Optional[AdaptationResult]] = []
    errors: dict[int, Exception] = {}
    for i in range(n_rows):
        row_cfg = cfg.with_seed(derive_seed(cfg.seed, int(indices[i])))
        try:
            results.append(adapt(z_rows[i], decoder, s, row_cfg))
        except Exception as exc:  # per-row isolation
            results.append(None)
            errors[i] = exc
    return BatchResult(results=results, errors=errors)
